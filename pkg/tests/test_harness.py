import csv
import json
import math

import numpy as np
import pytest
import yaml

from calderon_bem.geometry import SurfaceMesh, generate_cube, save_mesh
from calderon_bem.harness import cli
from calderon_bem.harness.config import (
    SPEED_OF_LIGHT,
    ConfigError,
    load_config,
    parse_config,
    sweep_points,
    wavenumber_from_frequency,
)
from calderon_bem.harness.fields import FIELD_COLUMNS, Plane, evaluate_solution, field_grid, tangential_jump
from calderon_bem.harness.report import REPORT_VERSION, ReportError, normalise, read_report
from calderon_bem.harness.runner import run_solve, run_sweep, solve_config, worker_count
from calderon_bem.harness.scenarios import THREE_CUBES, build_mesh, sphere_subdivisions, three_cubes_config
from calderon_bem.harness.verify import run_suite
from calderon_bem.operators import plane_wave, potentials
from calderon_bem.pmchwt import Variant

SMALL = {
    "geometry": {"cubes": [{"side": 0.4}, {"side": 0.4, "origin": [1.0, 0, 0]}], "h": 0.4},
    "wave": {"k_e": 2.1},
    "gmres": {"tol": 1e-6},
}


def small_config(**changes):
    data = json.loads(json.dumps(SMALL))
    data.update(changes)
    return parse_config(data)


def write_config(tmp_path, data, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return path


# configuration


def test_benchmark_defaults():
    config = three_cubes_config()
    assert config.k_e == 2.1
    assert config.h == pytest.approx(2 * math.pi / 21)
    assert config.refractive_index == [1.311 + 2.289e-9j]
    assert config.variant is Variant.D
    assert (config.gmres.tol, config.gmres.restart, config.gmres.max_iterations) == (1e-5, 200, 2000)
    mesh = build_mesh(config)
    assert mesh.n_scatterers == 3 and mesh.max_edge_length <= config.h + 1e-12


def test_yaml_and_json_give_the_same_config(tmp_path):
    a = load_config(write_config(tmp_path, SMALL, "a.yaml"))
    b = load_config(write_config(tmp_path, SMALL, "b.json"))
    assert (a.k_e, a.h, a.geometry.cubes, a.gmres) == (b.k_e, b.h, b.geometry.cubes, b.gmres)


def test_frequency_converts_with_declared_length_unit():
    k = wavenumber_from_frequency(183, "GHz", "mm")
    assert k == pytest.approx(2 * math.pi * 183e9 / SPEED_OF_LIGHT * 1e-3, rel=1e-15)
    config = small_config(wave={"frequency": {"value": 183, "unit": "GHz"}, "length_unit": "mm"})
    assert config.k_e == pytest.approx(k)


@pytest.mark.parametrize(
    "change",
    [
        {"geometry": {"cubes": []}},
        {"geometry": {"cubes": [{"origin": [0, 0, 0]}]}},
        {"wave": {"frequency": 1e9}},
        {"wave": {"k_e": 2.0, "frequency": 1e9, "length_unit": "m"}},
        {"wave": {"k_e": -1.0}},
        {"wave": {"k_e": 2.0, "direction": [1, 0]}},
        {"variant": "X"},
        {"operator": {"nu": 2.0}},
        {"operator": {"orders": [4, 3, 2, 9]}},
        {"operator": {"tolerance": 1e-3}},
        {"gmres": {"restart": 0}},
        {"media": {"refractive_index": "abc"}},
        {"sweep": {"k_e": 2.0}},
        {"sweep": {"omega": [1.0]}},
        {"task": "plot"},
        {"colour": "red"},
    ],
)
def test_invalid_configs_raise(change):
    with pytest.raises(ConfigError):
        small_config(**change)


def test_refractive_index_count_must_match_scatterers():
    config = small_config(media={"refractive_index": ["1.3", "1.4", "1.5"]})
    with pytest.raises(ConfigError):
        config.indices(2)


def test_complex_index_formats():
    for value in ("1.311+2.289e-9j", "1.311+2.289e-9i", [1.311, 2.289e-9], {"re": 1.311, "im": 2.289e-9}):
        assert small_config(media={"refractive_index": value}).refractive_index == [1.311 + 2.289e-9j]


def test_sphere_level_follows_mesh_size():
    assert sphere_subdivisions(1.0, 2.0) == 0
    assert sphere_subdivisions(1.0, 0.3) == 2


# sweeps and reports


def test_sweep_grid_is_reference_plus_product():
    config = small_config(sweep={"variant": ["D", "Di"], "chi_P": [math.inf, 0.5, 0.0]})
    points = sweep_points(config)
    assert len(points) == 7 and points[0][0] == "reference"
    assert points[1][1] == {"variant": "D", "chi_P": math.inf}
    assert not points[1][2].params.for_preconditioner.dense


def test_empty_sweep_runs_only_the_reference(tmp_path):
    rows = run_sweep(small_config(), tmp_path)
    assert [r["label"] for r in rows] == ["reference"]
    assert rows[0]["iterations_rel"] == 1.0 and rows[0]["matvecs_rel"] == 1.0
    table = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert len(table) == 1 and table[0]["status"] == "ok"


def test_sweep_records_failures_and_continues(tmp_path):
    rows = run_sweep(small_config(sweep={"k_e": [2.0, -1.0]}), tmp_path)
    assert [r["status"] for r in rows] == ["ok", "ok", "failed"]
    assert "positive" in rows[2]["error"]


def test_normalisation_against_reference_row():
    rows = [
        {"iterations": 4, "matvecs": 100, "stored_entries_P": 10, "time_solve": 2.0},
        {"iterations": 8, "matvecs": 150, "stored_entries_P": 5, "time_solve": 1.0},
        {"error": "boom"},
    ]
    normalise(rows)
    assert (rows[1]["iterations_rel"], rows[1]["matvecs_rel"], rows[1]["memory_P_rel"]) == (2.0, 1.5, 0.5)
    assert rows[1]["time_total_rel"] == 0.5
    assert rows[2]["iterations_rel"] == ""


def test_report_round_trip(tmp_path):
    report, solution = run_solve(small_config(), tmp_path)
    data = read_report(tmp_path / "report.json")
    assert data["version"] == REPORT_VERSION
    assert data["matvecs"]["instrumented"] == data["matvecs"]["predicted"] == solution.report.bio_matvecs
    assert data["solve"]["iterations"] == solution.report.iterations
    assert data["memory"]["A"]["bytes"] == 16 * data["memory"]["A"]["stored_entries"]
    residuals = list(csv.reader(open(tmp_path / "residuals.csv")))
    assert residuals[0] == ["iteration", "relative_residual"]
    assert len(residuals) == solution.report.iterations + 2


def test_damaged_reports_rejected(tmp_path):
    run_solve(small_config(), tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    for broken in ({**data, "version": 99}, {k: v for k, v in data.items() if k != "memory"}, {**data, "format": "x"}):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(broken))
        with pytest.raises(ReportError):
            read_report(path)


def test_compress_task_reports_ratio(tmp_path):
    data = json.loads(json.dumps(SMALL))
    data.update(task="compress", geometry={"cubes": [{"side": 1.0}], "h": 0.25}, wave={"k_e": 5.0})
    data["preconditioner"] = {"chi": 0.0}
    path = write_config(tmp_path, data)
    assert cli.main(["solve", str(path), "-o", str(tmp_path / "out")]) == 0
    report = read_report(tmp_path / "out" / "report.json")
    assert 0.0 < report["compression"]["compression_ratio"] < 1.0


def test_solution_is_bitwise_reproducible():
    first = solve_config(small_config()).coefficients
    second = solve_config(small_config()).coefficients
    assert np.array_equal(first, second)


@pytest.mark.parametrize("value", ["0", "-2", "four"])
def test_worker_env_validation(monkeypatch, value):
    monkeypatch.setenv("CALDERON_BEM_WORKERS", value)
    with pytest.raises(ValueError):
        worker_count()


def test_worker_env_default(monkeypatch):
    monkeypatch.delenv("CALDERON_BEM_WORKERS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("CALDERON_BEM_WORKERS", "3")
    assert worker_count() == 3


# command line


def test_cli_solve_exit_codes(tmp_path, capsys):
    good = write_config(tmp_path, SMALL)
    assert cli.main(["--single-thread", "solve", str(good), "-o", str(tmp_path / "a")]) == 0
    assert "converged" in capsys.readouterr().out
    capped = write_config(tmp_path, {**SMALL, "gmres": {"max_iterations": 1}}, "capped.yaml")
    assert cli.main(["solve", str(capped), "-o", str(tmp_path / "b")]) == 2
    empty = write_config(tmp_path, {**SMALL, "geometry": {"cubes": []}}, "empty.yaml")
    assert cli.main(["solve", str(empty)]) == 1
    assert "geometry" in capsys.readouterr().err
    assert cli.main(["solve", str(tmp_path / "missing.yaml")]) == 1


def test_cli_unknown_suite_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["verify", "everything"])
    assert exc.value.code == 2


def test_cli_mesh_commands(tmp_path, capsys):
    cube = tmp_path / "cube.msh"
    assert cli.main(["mesh", "generate", "cube", "--h", "0.5", "-o", str(cube)]) == 0
    assert cli.main(["mesh", "refine", str(cube), "-o", str(tmp_path / "fine.msh")]) == 0
    assert cli.main(["mesh", "info", str(tmp_path / "fine.msh")]) == 0
    out = capsys.readouterr().out
    assert "48 triangles" in out and "288" in out and "valid        yes" in out


def test_cli_mesh_info_flags_invalid_mesh(tmp_path):
    cube = generate_cube(1.0)
    path = tmp_path / "open.msh"
    save_mesh(SurfaceMesh(cube.vertices, cube.triangles[:-1], cube.scatterer_ids[:-1]), path)
    assert cli.main(["mesh", "info", str(path)]) == 1


def test_cli_field_writes_csv(tmp_path):
    config = write_config(tmp_path, SMALL)
    out = tmp_path / "field.csv"
    assert cli.main(["field", str(config), "--plane", "z=0.2", "--resolution", "4", "3", "-o", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == FIELD_COLUMNS and len(rows) == 13
    assert all(np.isfinite(float(v)) for row in rows[1:] for v in row[:10])


def test_cli_field_from_saved_solution(tmp_path):
    config = write_config(tmp_path, SMALL)
    assert cli.main(["solve", str(config), "-o", str(tmp_path / "run")]) == 0
    args = ["field", str(config), "--resolution", "2", "2", "--solution", str(tmp_path / "run" / "solution.npz")]
    assert cli.main(args + ["-o", str(tmp_path / "f.csv")]) == 0
    other = write_config(tmp_path, {**SMALL, "geometry": {"cubes": [{"side": 0.4}], "h": 0.4}}, "other.yaml")
    assert cli.main(["field", str(other), "--solution", str(tmp_path / "run" / "solution.npz")]) == 1


# verification suites


@pytest.mark.parametrize("suite", ["counts", "quadrature", "mass", "aca"])
def test_verify_suites_pass(suite):
    checks = run_suite(suite)
    assert checks and all(c.passed for c in checks), [c.line() for c in checks if not c.passed]


def test_verify_counts_exit_code(capsys):
    assert cli.main(["verify", "quadrature"]) == 0
    assert "PASS" in capsys.readouterr().out


# fields


def test_plane_parsing():
    assert Plane.parse("y=0.2") == Plane(1, 0.2)
    assert Plane.parse(" Z = -1 ") == Plane(2, -1.0)
    for text in ("w=1", "y", "y=a"):
        with pytest.raises(ValueError):
            Plane.parse(text)


def test_zero_amplitude_gives_zero_field():
    config = small_config(wave={"k_e": 2.1, "amplitude": 0.0})
    solution = solve_config(config)
    _, field, region, _ = field_grid(solution, "y=0.2", resolution=(5, 5))
    assert np.all(field == 0)
    assert set(region.tolist()) >= {-1, 0}


def test_field_is_finite_and_flags_surface_points(three_cubes_solution):
    _, field, region, _ = field_grid(three_cubes_solution, "y=0.2", resolution=(13, 7))
    assert np.all(np.isfinite(field))
    assert set(region.tolist()) == {-1, 0, 1, 2}
    points = np.array([[0.4, 0.2, 0.2], [0.41, 0.2, 0.2], [0.7, 0.2, 0.2]])
    field, _, near = evaluate_solution(three_cubes_solution, points, min_distance=0.03)
    assert near.tolist() == [True, True, False]
    assert np.all(np.isfinite(field))


@pytest.mark.parametrize("normal", [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)])
def test_tangential_field_continuous_across_middle_cube(three_cubes_solution, normal):
    normal = np.array(normal, dtype=float)
    face_centre = np.array([0.2, 0.2, 0.2]) + 0.2 * normal
    assert tangential_jump(three_cubes_solution, face_centre, normal, 0.05) <= 0.05


@pytest.mark.parametrize("direction", [(1, 0, 0), (1, 1, 0)])
def test_scattered_field_decays_like_inverse_distance(three_cubes_solution, direction):
    # along y the three cubes interfere and the far-field pattern is nearly zero, so it is not sampled
    solution = three_cubes_solution
    unit = np.array(direction, dtype=float) / np.linalg.norm(direction)
    r = np.array([10.0, 20.0, 40.0])
    points = r[:, None] * unit + 0.2
    field, _, _ = evaluate_solution(solution, points)
    incident = plane_wave(solution.problem.direction, solution.problem.polarization, solution.problem.exterior.k, points)[0]
    scaled = np.linalg.norm(field - incident, axis=1) * r
    assert np.ptp(scaled) <= 0.02 * scaled.mean()


def test_scattered_representation_vanishes_inside(three_cubes_solution):
    solution = three_cubes_solution
    k = solution.problem.exterior.k
    inside = np.array([[0.2, 0.2, 0.2], [-0.8, 0.1, 0.3], [1.25, 0.2, 0.1]])
    scattered = np.zeros((3, 3), dtype=complex)
    for m, spaces in enumerate(solution.disc.scatterers):
        dirichlet, neumann = solution.traces(m)
        electric, _ = potentials(spaces.rwg, neumann, k, inside)
        _, magnetic = potentials(spaces.rwg, dirichlet, k, inside)
        scattered -= electric + magnetic
    incident = plane_wave(solution.problem.direction, solution.problem.polarization, k, inside)[0]
    assert np.all(np.linalg.norm(scattered, axis=1) <= 1e-2 * np.linalg.norm(incident, axis=1))


def test_three_cubes_benchmark_constants():
    assert THREE_CUBES["wave"]["k_e"] == 2.1
    assert [c["origin"] for c in THREE_CUBES["geometry"]["cubes"]] == [[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
