"""Geometry and problem construction from a :class:`ScenarioConfig`."""

from __future__ import annotations

import math

from ..geometry import MeshError, MeshParseError, combine, generate_cube, generate_sphere, load_mesh
from ..operators import Medium
from ..pmchwt import TransmissionProblem
from .config import ConfigError, ScenarioConfig, parse_config

THREE_CUBES = {
    "geometry": {
        "cubes": [
            {"side": 0.4, "origin": [-1.0, 0.0, 0.0]},
            {"side": 0.4, "origin": [0.0, 0.0, 0.0]},
            {"side": 0.4, "origin": [1.0, 0.0, 0.0]},
        ]
    },
    "wave": {"k_e": 2.1, "direction": [1, 0, 0], "polarization": [0, 0, 1]},
    "media": {"refractive_index": "1.311+2.289e-9j"},
    "variant": "D",
}


def three_cubes_config(**changes):
    """The three-cube benchmark (side 0.4 at x = -1, 0, 1; k_e = 2.1; ice-like index)."""
    data = {key: dict(value) if isinstance(value, dict) else value for key, value in THREE_CUBES.items()}
    for key, value in changes.items():
        data[key] = value
    return parse_config(data)


def build_mesh(config: ScenarioConfig):
    """Combined, validated mesh of every scatterer in the configuration."""
    geo = config.geometry
    h = config.h
    parts = []
    try:
        for i, cube in enumerate(geo.cubes):
            origin = cube.get("origin", (0.0, 0.0, 0.0))
            parts.append(
                generate_cube(float(cube["side"]), origin, h, jitter=geo.jitter, seed=geo.seed + i)
            )
        for sphere in geo.spheres:
            radius = float(sphere.get("radius", 1.0))
            subdivisions = sphere.get("subdivisions")
            if subdivisions is None:
                subdivisions = sphere_subdivisions(radius, h)
            parts.append(generate_sphere(radius, int(subdivisions), sphere.get("center", (0.0, 0.0, 0.0))))
        for entry in geo.meshes:
            path = config.base_path / entry["path"]
            parts.append(load_mesh(path))
    except (MeshError, MeshParseError) as exc:
        raise ConfigError(f"geometry: {exc}") from None
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"geometry: {exc}") from None
    mesh = combine(parts)
    try:
        mesh.validate()
    except MeshError as exc:
        raise ConfigError(f"geometry: {exc}") from None
    return mesh


def sphere_subdivisions(radius, h):
    """Smallest icosphere level whose longest edge does not exceed ``h``."""
    # icosahedron edge for the unit circumradius is about 1.05; each level halves it
    edge = 1.0515 * radius
    level = 0
    while edge > h and level < 7:
        edge /= 2.0
        level += 1
    return level


def build_problem(config: ScenarioConfig, mesh=None):
    mesh = mesh if mesh is not None else build_mesh(config)
    indices, mus = config.indices(mesh.n_scatterers)
    exterior = Medium(config.k_e, 1.0)
    interior = [Medium(n * config.k_e, mu) for n, mu in zip(indices, mus)]
    try:
        polarization = tuple(config.amplitude * p for p in config.polarization)
        return TransmissionProblem(mesh, interior, exterior, config.direction, polarization)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def size_parameter(mesh, k_e):
    """``pi D_max / lambda_e`` of the largest scatterer."""
    best = 0.0
    for m in range(mesh.n_scatterers):
        lo, hi = mesh.submesh(m).bounding_box()
        best = max(best, float(((hi - lo) ** 2).sum() ** 0.5))
    return math.pi * best * k_e / (2.0 * math.pi)
