"""Scenario files: TOML tables whose numeric values are decimal strings.

Example::

    [scenario]
    name = "sasaki-equator-s2-in-s3"

    [target]
    preset = "sphere"
    dim = "3"

    [source]
    preset = "sphere"
    dim = "2"

    [immersion]
    preset = "equator"

    [generators]
    preset = "sasaki"

    [grid]
    points = "30"
    seed = "7"
    v_max = "2"
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import gnatural as gn
from .errors import ConfigError, GeometryError
from .manifold import ChartedManifold, metric_at, space
from .submanifold import ImmersionData, immersion

_INT = re.compile(r"[+-]?\d+")
_DECIMAL = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

# Ladder: algebraic identities, first-derivative identities, curvature-level identities.
DEFAULT_TOLERANCES = {
    "exact": 1e-12,
    "first_order": 1e-9,
    "curvature": 1e-7,
    "symmetry": 1e-10,
    "normal_constraints": 1e-8,
    "gram": 1e-10,
    "sff_symmetry": 1e-8,
    "theorem": 1e-7,
}
SECTIONS = ("scenario", "target", "source", "immersion", "generators", "grid", "tolerances",
            "expect")
GRID_KEYS = {"points", "seed", "v_max", "t_steps"}
EXPECT_KEYS = {"verdict", "lm_totally_geodesic", "min_lm_component"}


def _line_of(text: str, section: str, key: str | None) -> int | None:
    """Line number of ``key`` inside ``[section]`` (or of the header), 1-based."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        header = re.match(r"\[+\s*([^\]]+?)\s*\]+", stripped)
        if header:
            current = header.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", stripped):
            return i
    return None


class _Fields:
    """Field accessors that raise ConfigError with the TOML location."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def error(self, section: str, key: str | None, message: str) -> ConfigError:
        line = _line_of(self.text, section, key)
        where = f"{self.source}:{line}" if line else self.source
        name = f"{section}.{key}" if key else f"[{section}]"
        return ConfigError(f"{where}: field {name}: {message}")

    def number(self, section, key, raw, integer=False):
        if isinstance(raw, bool) or not isinstance(raw, str):
            raise self.error(section, key, f"numeric values must be decimal strings, got {raw!r}")
        pattern = _INT if integer else _DECIMAL
        if not pattern.fullmatch(raw.strip()):
            kind = "an integer" if integer else "a decimal number"
            raise self.error(section, key, f"{raw!r} is not {kind}")
        value = int(raw) if integer else float(raw)
        if not integer and not math.isfinite(value):
            raise self.error(section, key, f"{raw!r} is not finite")
        return value

    def param(self, section, key, raw):
        """Preset parameter: decimal string -> int or float, lists elementwise, names kept."""
        if isinstance(raw, list):
            return [self.param(section, key, r) for r in raw]
        if isinstance(raw, str) and _INT.fullmatch(raw.strip()):
            return int(raw)
        if isinstance(raw, str) and _DECIMAL.fullmatch(raw.strip()):
            return float(raw)
        if isinstance(raw, str) or isinstance(raw, bool):
            return raw
        raise self.error(section, key, f"numeric values must be decimal strings, got {raw!r}")


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    target: ChartedManifold
    source: ChartedManifold
    immersion: ImmersionData
    generators: gn.GNaturalGenerators
    points: int
    seed: int
    v_max: float
    t_steps: int
    tolerances: dict
    expect: dict
    echo: dict = field(default_factory=dict, compare=False)

    def with_seed(self, seed: int) -> "Scenario":
        echo = dict(self.echo)
        echo["grid"] = dict(echo.get("grid", {}), seed=str(seed))
        return Scenario(self.name, self.description, self.target, self.source, self.immersion,
                        self.generators, self.points, seed, self.v_max, self.t_steps,
                        self.tolerances, self.expect, echo)

    def sample_grid(self):
        """Seeded (y, v) pairs: y uniform in the sample box, |v|_g <= v_max.

        Coordinates are rounded to 10 decimals so that the reported points
        are exactly the evaluated ones.
        """
        rng = np.random.default_rng(self.seed)
        m = self.source.dim
        box = self.immersion.sample_box
        out = []
        for _ in range(self.points):
            y = np.array([rng.uniform(lo, hi) for lo, hi in box])
            direction = rng.normal(size=m)
            radius = self.v_max * rng.uniform(0.0, 1.0)
            g = metric_at(self.source, y)
            norm = math.sqrt(float(direction @ g @ direction))
            v = direction * (radius / norm) if norm > 0 else np.zeros(m)
            out.append((np.round(y, 10), np.round(v, 10)))
        return out


def _section(data, fields: _Fields, name, required=True):
    sec = data.get(name)
    if sec is None:
        if required:
            raise fields.error(name, None, "missing section")
        return {}
    if not isinstance(sec, dict):
        raise fields.error(name, None, "must be a table")
    return sec


def _build_space(data, fields: _Fields, name) -> ChartedManifold:
    sec = dict(_section(data, fields, name))
    preset = sec.pop("preset", None)
    if not isinstance(preset, str):
        raise fields.error(name, "preset", "required string naming a space preset")
    params = {k: fields.param(name, k, v) for k, v in sec.items()}
    try:
        return space(preset, **params)
    except ConfigError as exc:
        raise fields.error(name, "preset", str(exc)) from None
    except (GeometryError, ValueError) as exc:
        raise fields.error(name, None, str(exc)) from None


def _build_generators(data, fields: _Fields) -> gn.GNaturalGenerators:
    sec = dict(_section(data, fields, "generators"))
    t_max = gn.DEFAULT_T_MAX
    if "t_max" in sec:
        t_max = fields.number("generators", "t_max", sec.pop("t_max"))
    preset = sec.pop("preset", None)
    if preset is not None:
        if preset == "random":
            seed = fields.number("generators", "seed", sec.pop("seed", None), integer=True)
            if sec:
                raise fields.error("generators", sorted(sec)[0], "unexpected key for random preset")
            return gn.random_generators(seed, t_max)
        if preset not in gn.PRESETS:
            raise fields.error("generators", "preset",
                               f"unknown preset {preset!r}; choose from "
                               f"{sorted(gn.PRESETS) + ['random']}")
        if sec:
            raise fields.error("generators", sorted(sec)[0], f"unexpected key for preset {preset!r}")
        return gn.PRESETS[preset](t_max)
    name = sec.pop("name", "custom")
    coeffs = {}
    for key, raw in sec.items():
        if key not in gn.GENERATOR_NAMES:
            raise fields.error("generators", key, f"unknown generator; use {list(gn.GENERATOR_NAMES)}")
        if isinstance(raw, dict):
            unknown = set(raw) - {"num", "den"}
            if unknown:
                raise fields.error("generators", key, f"unknown keys {sorted(unknown)}")
            coeffs[key] = {part: [fields.number("generators", key, c) for c in _as_list(raw[part])]
                           for part in raw}
        else:
            coeffs[key] = [fields.number("generators", key, c) for c in _as_list(raw)]
    if not coeffs:
        raise fields.error("generators", None, "give a preset or generator coefficients")
    return gn.from_coefficients(coeffs, t_max, str(name))


def _as_list(raw):
    return raw if isinstance(raw, list) else [raw]


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_scenario(text, str(path))


def parse_scenario(text: str, source: str = "<config>") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    fields = _Fields(text, source)
    unknown = set(data) - set(SECTIONS)
    if unknown:
        name = sorted(unknown)[0]
        raise fields.error(name, None, f"unknown section; expected one of {list(SECTIONS)}")

    meta = _section(data, fields, "scenario")
    name = meta.get("name")
    if not isinstance(name, str) or not name:
        raise fields.error("scenario", "name", "required non-empty string")
    description = str(meta.get("description", ""))

    target = _build_space(data, fields, "target")
    source_man = _build_space(data, fields, "source")
    imm_sec = dict(_section(data, fields, "immersion"))
    preset = imm_sec.pop("preset", None)
    if not isinstance(preset, str):
        raise fields.error("immersion", "preset", "required string naming an immersion preset")
    params = {k: fields.param("immersion", k, v) for k, v in imm_sec.items()}
    try:
        imm = immersion(preset, source_man, target, **params)
    except ConfigError as exc:
        raise fields.error("immersion", "preset", str(exc)) from None
    except (GeometryError, ValueError) as exc:
        raise fields.error("immersion", None, str(exc)) from None

    generators = _build_generators(data, fields)
    try:
        generators.check_dimension(target.dim)
    except ConfigError as exc:
        raise fields.error("generators", None, str(exc)) from None

    grid = _section(data, fields, "grid")
    for key in set(grid) - GRID_KEYS:
        raise fields.error("grid", key, f"unknown key; expected one of {sorted(GRID_KEYS)}")
    points = fields.number("grid", "points", grid.get("points", "20"), integer=True)
    seed = fields.number("grid", "seed", grid.get("seed", "0"), integer=True)
    v_max = fields.number("grid", "v_max", grid.get("v_max", "2"))
    t_steps = fields.number("grid", "t_steps", grid.get("t_steps", "101"), integer=True)
    if points < 1:
        raise fields.error("grid", "points", "grid must be non-empty")
    if seed < 0:
        raise fields.error("grid", "seed", "seed must be non-negative")
    if v_max < 0 or v_max * v_max > generators.t_max:
        raise fields.error("grid", "v_max", f"need 0 <= v_max^2 <= t_max = {generators.t_max}")
    if t_steps < 2:
        raise fields.error("grid", "t_steps", "need at least two t samples")

    tolerances = dict(DEFAULT_TOLERANCES)
    for key, raw in _section(data, fields, "tolerances", required=False).items():
        if key not in tolerances:
            raise fields.error("tolerances", key, f"unknown tolerance; expected one of {sorted(tolerances)}")
        tolerances[key] = fields.number("tolerances", key, raw)
        if tolerances[key] <= 0:
            raise fields.error("tolerances", key, "must be positive")

    expect = {}
    for key, raw in _section(data, fields, "expect", required=False).items():
        if key not in EXPECT_KEYS:
            raise fields.error("expect", key, f"unknown key; expected one of {sorted(EXPECT_KEYS)}")
        if key == "verdict":
            if not (isinstance(raw, list) and len(raw) == 3 and all(isinstance(b, bool) for b in raw)):
                raise fields.error("expect", key, "must be a list of three booleans")
            expect[key] = list(raw)
        elif key == "min_lm_component":
            expect[key] = fields.number("expect", key, raw)
        elif not isinstance(raw, bool):
            raise fields.error("expect", key, "must be a boolean")
        else:
            expect[key] = raw

    return Scenario(name, description, target, source_man, imm, generators, points, seed, v_max,
                    t_steps, tolerances, expect, echo=data)
