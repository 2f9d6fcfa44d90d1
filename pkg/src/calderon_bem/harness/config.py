"""Scenario configuration files (YAML or JSON).

A configuration is a mapping with the sections below; everything except
``geometry`` and the wavenumber has a default.  See the README for a full
example::

    task: solve                  # solve | compress
    geometry:
      cubes:   [{side: 0.4, origin: [-1, 0, 0]}, ...]
      spheres: [{radius: 1.0, center: [0, 0, 0], subdivisions: 2}]
      meshes:  [{path: body.msh}]
      h: 0.3                     # optional; default 2 pi / (10 k_e)
      jitter: 0.0                # cube vertex jitter (fraction of the spacing)
    wave:
      k_e: 2.1                   # or frequency: {value: 183, unit: GHz} with length_unit
      length_unit: m
      direction: [1, 0, 0]
      polarization: [0, 0, 1]
      amplitude: 1.0             # scales the polarization vector
    media:
      refractive_index: "1.311+2.289e-9j"   # one value or one per scatterer
      mu: 1.0
    variant: D
    operator:       {nu: 1e-3, chi: .inf, orders: [4, 3, 2, 6], dense: true, leaf_size: 32}
    preconditioner: {nu: 1e-3, chi: .inf, orders: [4, 3, 2, 6], dense: true, leaf_size: 32}
    gmres:          {tol: 1e-5, restart: 200, max_iterations: 2000}
    output:         {directory: results, residual_csv: true}
    sweep:          {k_e: [...], variant: [...], nu_P: [...], chi_P: [...], q_P: [[...]]}
"""

from __future__ import annotations

import copy
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..pmchwt import BiparametricParams, OperatorParams, Variant
from ..quadrature import QuadOrders
from ..solver import GmresParams

SPEED_OF_LIGHT = 2.99792458e8  # m/s

LENGTH_UNITS = {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
FREQUENCY_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12}

SWEEP_KEYS = ("k_e", "variant", "nu_P", "chi_P", "q_P")
TASKS = ("solve", "compress")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class GeometrySpec:
    cubes: list = field(default_factory=list)  # dicts: side, origin
    spheres: list = field(default_factory=list)  # dicts: radius, center, subdivisions
    meshes: list = field(default_factory=list)  # dicts: path
    h: float | None = None
    jitter: float = 0.0
    seed: int = 0

    @property
    def count(self):
        return len(self.cubes) + len(self.spheres) + len(self.meshes)


@dataclass
class ScenarioConfig:
    geometry: GeometrySpec
    k_e: float
    refractive_index: list  # complex per scatterer, or a single value broadcast later
    mu: list
    variant: Variant = Variant.D
    params: BiparametricParams = field(default_factory=BiparametricParams)
    gmres: GmresParams = field(default_factory=GmresParams)
    direction: tuple = (1.0, 0.0, 0.0)
    polarization: tuple = (0.0, 0.0, 1.0)
    amplitude: float = 1.0
    task: str = "solve"
    output_directory: str = "results"
    residual_csv: bool = True
    sweep: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)  # the parsed mapping, echoed in reports
    base_path: Path = field(default_factory=Path.cwd)

    @property
    def h(self):
        if self.geometry.h is not None:
            return self.geometry.h
        return 2.0 * math.pi / (10.0 * self.k_e)

    def indices(self, count):
        """Per-scatterer refractive indices and permeabilities for ``count`` scatterers."""

        def expand(values, name):
            if len(values) == 1:
                return values * count
            if len(values) != count:
                raise ConfigError(f"{name}: {len(values)} values given for {count} scatterers")
            return list(values)

        return expand(self.refractive_index, "refractive_index"), expand(self.mu, "mu")


def parse_complex(value, name="value"):
    """Complex from a number, a string like ``"1.3+2e-9j"``, ``[re, im]`` or ``{re, im}``."""
    try:
        if isinstance(value, dict):
            return complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError
            return complex(float(value[0]), float(value[1]))
        if isinstance(value, str):
            return complex(value.replace(" ", "").replace("i", "j"))
        return complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot read {value!r} as a complex number") from None


def _float(value, name):
    if isinstance(value, str) and value.lower() in ("inf", ".inf", "infinity"):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None


def _vector(value, name):
    try:
        vec = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected three numbers, got {value!r}") from None
    if len(vec) != 3:
        raise ConfigError(f"{name}: expected three numbers, got {value!r}")
    return vec


def wavenumber_from_frequency(frequency, unit="GHz", length_unit="m"):
    """Exterior wavenumber ``2 pi f / c`` per ``length_unit``."""
    if unit not in FREQUENCY_UNITS:
        raise ConfigError(f"unknown frequency unit {unit!r}; use one of {sorted(FREQUENCY_UNITS)}")
    if length_unit not in LENGTH_UNITS:
        raise ConfigError(f"unknown length unit {length_unit!r}; use one of {sorted(LENGTH_UNITS)}")
    f = float(frequency) * FREQUENCY_UNITS[unit]
    return 2.0 * math.pi * f / SPEED_OF_LIGHT * LENGTH_UNITS[length_unit]


def _operator_params(data, name):
    if data is None:
        return OperatorParams()
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = set(data) - {"nu", "chi", "orders", "dense", "leaf_size"}
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    kwargs = {}
    if "nu" in data:
        kwargs["nu"] = _float(data["nu"], f"{name}.nu")
    if "chi" in data:
        kwargs["chi"] = _float(data["chi"], f"{name}.chi")
    if "orders" in data:
        try:
            kwargs["orders"] = QuadOrders.from_sequence(data["orders"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}.orders: {exc}") from None
    if "dense" in data:
        kwargs["dense"] = bool(data["dense"])
    if "leaf_size" in data:
        kwargs["leaf_size"] = int(data["leaf_size"])
    try:
        return OperatorParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def parse_config(data, base_path=None):
    """Validate a configuration mapping and build a :class:`ScenarioConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    known = {
        "task", "geometry", "wave", "media", "variant", "operator",
        "preconditioner", "gmres", "output", "sweep", "name",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    task = data.get("task", "solve")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")

    geo = data.get("geometry")
    if not isinstance(geo, dict):
        raise ConfigError("geometry section is required")
    geometry = GeometrySpec(
        cubes=[dict(c) for c in geo.get("cubes", []) or []],
        spheres=[dict(s) for s in geo.get("spheres", []) or []],
        meshes=[dict(m) if isinstance(m, dict) else {"path": m} for m in geo.get("meshes", []) or []],
        h=None if geo.get("h") is None else _float(geo["h"], "geometry.h"),
        jitter=_float(geo.get("jitter", 0.0), "geometry.jitter"),
        seed=int(geo.get("seed", 0)),
    )
    if geometry.count == 0:
        raise ConfigError("geometry lists no scatterers")
    for i, cube in enumerate(geometry.cubes):
        if "side" not in cube:
            raise ConfigError(f"geometry.cubes[{i}]: 'side' is required")
    if geometry.h is not None and not geometry.h > 0:
        raise ConfigError("geometry.h must be positive")

    wave = data.get("wave") or {}
    if "k_e" in wave and "frequency" in wave:
        raise ConfigError("wave: give either k_e or frequency, not both")
    if "k_e" in wave:
        k_e = _float(wave["k_e"], "wave.k_e")
    elif "frequency" in wave:
        freq = wave["frequency"]
        if "length_unit" not in wave:
            raise ConfigError("wave.frequency requires wave.length_unit (the unit of mesh coordinates)")
        if isinstance(freq, dict):
            k_e = wavenumber_from_frequency(freq.get("value"), freq.get("unit", "GHz"), wave["length_unit"])
        else:
            k_e = wavenumber_from_frequency(freq, "Hz", wave["length_unit"])
    else:
        raise ConfigError("wave.k_e or wave.frequency is required")
    if not (k_e > 0 and math.isfinite(k_e)):
        raise ConfigError(f"exterior wavenumber must be positive, got {k_e}")

    media = data.get("media") or {}
    n_raw = media.get("refractive_index", 1.311 + 2.289e-9j)
    n_list = n_raw if isinstance(n_raw, list) and not (
        len(n_raw) == 2 and all(isinstance(v, (int, float)) for v in n_raw)
    ) else [n_raw]
    refractive = [parse_complex(v, "media.refractive_index") for v in n_list]
    mu_raw = media.get("mu", 1.0)
    mu = [parse_complex(v, "media.mu") for v in (mu_raw if isinstance(mu_raw, list) else [mu_raw])]

    try:
        variant = Variant.parse(data.get("variant", "D"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    params = BiparametricParams(
        _operator_params(data.get("operator"), "operator"),
        _operator_params(data.get("preconditioner"), "preconditioner"),
    )
    g = data.get("gmres") or {}
    try:
        gmres = GmresParams(
            tol=_float(g.get("tol", 1e-5), "gmres.tol"),
            restart=int(g.get("restart", 200)),
            max_iterations=int(g.get("max_iterations", 2000)),
        )
    except ValueError as exc:
        raise ConfigError(f"gmres: {exc}") from None

    out = data.get("output") or {}
    sweep = data.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must be a mapping of parameter lists")
    unknown = set(sweep) - set(SWEEP_KEYS) - {"reference"}
    if unknown:
        raise ConfigError(f"sweep: unknown parameters {sorted(unknown)}; allowed {list(SWEEP_KEYS)}")
    for key in SWEEP_KEYS:
        if key in sweep and not isinstance(sweep[key], list):
            raise ConfigError(f"sweep.{key} must be a list")

    return ScenarioConfig(
        geometry=geometry,
        k_e=k_e,
        refractive_index=refractive,
        mu=mu,
        variant=variant,
        params=params,
        gmres=gmres,
        direction=_vector(wave.get("direction", (1, 0, 0)), "wave.direction"),
        polarization=_vector(wave.get("polarization", (0, 0, 1)), "wave.polarization"),
        amplitude=_float(wave.get("amplitude", 1.0), "wave.amplitude"),
        task=task,
        output_directory=str(out.get("directory", "results")),
        residual_csv=bool(out.get("residual_csv", True)),
        sweep=sweep,
        source=copy.deepcopy(data),
        base_path=Path(base_path) if base_path is not None else Path.cwd(),
    )


def load_config(path):
    """Read a YAML or JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data, base_path=path.parent)


def sweep_points(config):
    """Configurations for every point of the sweep grid (reference configuration first).

    Returns ``[(label, overrides, config)]``; the first entry has no overrides.
    A point whose overrides are invalid carries the :class:`ConfigError`
    instead of a configuration.
    """
    grid = {key: config.sweep[key] for key in SWEEP_KEYS if config.sweep.get(key)}
    points = [("reference", {}, config)]
    if not grid:
        return points
    keys = list(grid)
    for values in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, values))
        try:
            point = apply_overrides(config, overrides)
        except (ConfigError, ValueError) as exc:
            point = ConfigError(str(exc))  # reported for this point only
        points.append((_label(overrides), overrides, point))
    return points


def _label(overrides):
    return ",".join(f"{k}={v}" for k, v in overrides.items())


def apply_overrides(config, overrides):
    """Copy of ``config`` with sweep parameters replaced."""
    new = copy.copy(config)
    pre = config.params.for_preconditioner
    changes = {}
    for key, value in overrides.items():
        if key == "k_e":
            new.k_e = _float(value, "sweep.k_e")
            if not (new.k_e > 0 and math.isfinite(new.k_e)):
                raise ConfigError(f"sweep.k_e: exterior wavenumber must be positive, got {value}")
        elif key == "variant":
            try:
                new.variant = Variant.parse(value)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        elif key == "nu_P":
            changes["nu"] = _float(value, "sweep.nu_P")
        elif key == "chi_P":
            changes["chi"] = _float(value, "sweep.chi_P")
        elif key == "q_P":
            changes["orders"] = QuadOrders.from_sequence(value)
    if changes:
        fields = {
            "nu": pre.nu, "chi": pre.chi, "orders": pre.orders, "dense": pre.dense, "leaf_size": pre.leaf_size
        }
        fields.update(changes)
        if "nu" in changes or "chi" in changes:
            fields["dense"] = False
        new.params = BiparametricParams(config.params.for_operator, OperatorParams(**fields))
    return new
