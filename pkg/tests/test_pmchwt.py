import numpy as np
import pytest

from calderon_bem.geometry import combine, generate_cube
from calderon_bem.harness.scenarios import build_problem, three_cubes_config
from calderon_bem.operators import BIO_COUNTER, Medium
from calderon_bem.pmchwt import (
    BiparametricParams,
    Discretization,
    OperatorParams,
    PreconditionedMap,
    TransmissionProblem,
    Variant,
    assemble_A,
    assemble_P,
    assemble_rhs,
    matvecs_per_application,
    preconditioned_map,
    predicted_matvecs,
    solve_problem,
    synthetic_system,
)
from calderon_bem.quadrature import QuadOrders
from calderon_bem.solver import GmresParams, gmres


def small_problem(M=2, polarization=(0.0, 0.0, 1.0), h=None):
    mesh = combine([generate_cube(0.4, (1.0 * m, 0.0, 0.0), h) for m in range(M)])
    exterior = Medium(2.1)
    interior = [Medium(1.311 * 2.1) for _ in range(M)]
    return TransmissionProblem(mesh, interior, exterior, (1.0, 0.0, 0.0), polarization)


@pytest.fixture(scope="module")
def two_cubes():
    problem = small_problem(2)
    disc = Discretization(problem)
    return problem, disc, assemble_A(problem, disc=disc)


def test_single_scatterer_holds_four_distinct_operators():
    problem = small_problem(1)
    assert assemble_A(problem).n_distinct == 4


@pytest.mark.parametrize("M, expected", [(1, 4), (2, 12), (3, 24)])
def test_synthetic_A_distinct_operators(M, expected):
    A, _, _ = synthetic_system("D", M)
    assert A.n_distinct == expected == 4 * M + 2 * M * (M - 1)


@pytest.mark.parametrize("variant, expected", [("D", 12), ("Di", 6), ("De", 6), ("Si", 3), ("Se", 3), ("FullA", 24)])
def test_preconditioner_distinct_operators_at_three_scatterers(variant, expected):
    _, P, _ = synthetic_system(variant, 3)
    assert P.n_distinct == expected


@pytest.mark.parametrize(
    "variant, expected", [("None", 48), ("D", 72), ("Di", 60), ("De", 60), ("Si", 54), ("Se", 54), ("FullA", 96)]
)
def test_applications_per_map_call(variant, expected):
    assert matvecs_per_application(variant, 3) == expected
    A, P, _ = synthetic_system(variant, 3)
    counted = A.matvecs_per_application + (0 if P is None else P.matvecs_per_application)
    assert counted == expected


@pytest.mark.parametrize("M", [1, 2, 3, 4])
def test_full_operator_preconditioner_doubles_cost(M):
    assert matvecs_per_application("FullA", M) == 8 * M * M + 8 * M


@pytest.mark.parametrize(
    "args, expected",
    [(("D", 3, 6, 200), 456), (("D", 3, 9, 200), 672), (("None", 1, 0, 1), 0), (("D", 1, 0, 200), 8)],
)
def test_predicted_matvec_examples(args, expected):
    assert predicted_matvecs(*args) == expected


@pytest.mark.parametrize("M", [1, 2, 3])
@pytest.mark.parametrize("R", [0, 5, 17])
def test_predicted_matvecs_closed_form_for_variant_D(M, R):
    assert predicted_matvecs("D", M, R, 4) == (4 * M * M + 12 * M) * (R + R // 4) + 8 * M


@pytest.mark.parametrize("args", [("D", 0, 1, 1), ("D", 1, -1, 1), ("D", 1, 1, 0), ("X", 1, 1, 1)])
def test_predicted_matvecs_rejects_invalid_arguments(args):
    with pytest.raises(ValueError):
        predicted_matvecs(*args)


def test_variant_parsing_is_case_insensitive():
    assert Variant.parse("di") is Variant.DI
    assert Variant.parse("none") is Variant.NONE
    with pytest.raises(ValueError):
        Variant.parse("Sx")


def test_operator_params_validation():
    for nu in (0.0, 1.0, -1e-3):
        with pytest.raises(ValueError):
            OperatorParams(nu=nu)
    with pytest.raises(ValueError):
        OperatorParams(chi=-1.0)


def test_problem_needs_one_medium_per_scatterer():
    mesh = combine([generate_cube(0.4), generate_cube(0.4, (1.0, 0, 0))])
    with pytest.raises(ValueError):
        TransmissionProblem(mesh, [Medium(2.0)], Medium(1.0))


def test_rhs_costs_four_applications_per_scatterer(two_cubes):
    problem, disc, A = two_cubes
    with BIO_COUNTER.measure() as counted:
        assemble_rhs(problem, A, disc)
    assert counted["count"] == 4 * problem.n_scatterers


def test_zero_incident_field_gives_zero_rhs():
    problem = small_problem(2, polarization=(0.0, 0.0, 0.0))
    disc = Discretization(problem)
    b, incident = assemble_rhs(problem, assemble_A(problem, disc=disc), disc)
    assert np.all(b == 0) and np.all(incident == 0)


def test_rhs_stable_under_quadrature_refinement():
    # benchmark mesh; the single-element cubes are too coarse for this comparison
    problem = build_problem(three_cubes_config())
    disc = Discretization(problem)
    A = assemble_A(problem, disc=disc)
    b, _ = assemble_rhs(problem, A, disc, QuadOrders(4, 3, 2, 6))
    fine = QuadOrders(6, 6, 6, 6)
    A_fine = assemble_A(problem, OperatorParams(orders=fine), disc)
    b_fine, _ = assemble_rhs(problem, A_fine, disc, fine)
    assert np.linalg.norm(b - b_fine) / np.linalg.norm(b_fine) <= 1e-3


def test_blocked_matvec_matches_dense_composition(two_cubes):
    _, disc, A = two_cubes
    dense = A.to_dense()
    for j in (0, 5, disc.total_dofs - 1):
        e = np.zeros(disc.total_dofs, dtype=complex)
        e[j] = 1.0
        np.testing.assert_allclose(A.matvec(e), dense[:, j], atol=1e-13)


@pytest.mark.parametrize("variant", ["None", "Di"])
def test_map_columns_match_dense_composition(two_cubes, variant):
    problem, disc, A = two_cubes
    P = assemble_P(variant, problem, disc=disc)
    pmap = preconditioned_map(P, A, disc)
    inv_A = np.linalg.inv(_block_mass(disc, "mass_A"))
    composed = inv_A @ A.to_dense()
    if P is not None:
        composed = np.linalg.inv(_block_mass(disc, "mass_P")) @ P.to_dense() @ composed
    for j in (0, 7, disc.total_dofs - 1):
        e = np.zeros(disc.total_dofs, dtype=complex)
        e[j] = 1.0
        column = pmap(e)
        assert np.linalg.norm(column - composed[:, j]) <= 1e-10 * np.linalg.norm(composed[:, j])
    assert pmap.applications == 3


def _block_mass(disc, attr):
    n = disc.total_dofs
    out = np.zeros((n, n))
    offset = 0
    for b, size in enumerate(disc.block_sizes):
        out[offset : offset + size, offset : offset + size] = getattr(disc.scatterers[b // 2], attr).matrix.toarray()
        offset += size
    return out


def test_map_rejects_mismatched_blocks(two_cubes):
    problem, disc, A = two_cubes
    other, _, _ = synthetic_system("D", 2, n=5)
    with pytest.raises(ValueError):
        preconditioned_map(None, other, disc)


def test_synthetic_counts_match_prediction():
    A, P, _ = synthetic_system("Si", 2, n=40, seed=3)
    identity = lambda x: x  # noqa: E731
    pmap = PreconditionedMap(A, P, identity, identity)
    with BIO_COUNTER.measure() as counted:
        report = gmres(pmap, pmap.prepare_rhs(np.ones(A.shape[0], dtype=complex)), GmresParams(1e-14, 4, 9))
    assert report.iterations == 9
    assert counted["count"] == predicted_matvecs("Si", 2, 9, 4)


def test_converged_solve_matches_prediction():
    problem = small_problem(2)
    solution = solve_problem(problem, "D")
    assert solution.report.converged
    assert solution.matvecs_match
    assert solution.rhs_matvecs == 8


@pytest.mark.slow
def test_reduced_variants_give_the_same_solution():
    problem = small_problem(2, h=0.2)
    disc = Discretization(problem)
    tight = GmresParams(tol=1e-8)
    vectors = {v: solve_problem(problem, v, BiparametricParams(), tight, disc).coefficients for v in ("D", "Di", "Si")}
    for a, b in (("D", "Di"), ("D", "Si"), ("Di", "Si")):
        assert np.linalg.norm(vectors[a] - vectors[b]) / np.linalg.norm(vectors[a]) <= 0.01


def test_traces_rescale_the_neumann_unknown():
    problem = small_problem(1)
    solution = solve_problem(problem, "Di")
    dirichlet, neumann = solution.traces(0)
    n = solution.disc.sizes[0]
    np.testing.assert_array_equal(dirichlet, solution.coefficients[:n])
    np.testing.assert_allclose(neumann, solution.coefficients[n:] * problem.exterior.mu / problem.exterior.k)
