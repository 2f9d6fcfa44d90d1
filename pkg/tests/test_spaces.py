import numpy as np
import pytest
import scipy.sparse as sp

from calderon_bem.geometry import MeshError, SurfaceMesh, barycentric_refine, generate_cube, generate_sphere
from calderon_bem.harness.verify import generator_meshes
from calderon_bem.spaces import FunctionSpace, assemble_mass, build_bc, build_rwg, mass_solve, on_refinement

TETRA = SurfaceMesh(
    np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]]),
    np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]),
    np.zeros(4, dtype=int),
)


def divergence_integrals(space):
    """``int div phi_j`` for every dof; each local shape has divergence 1/area, so this is the column sum."""
    return np.asarray(space.coefficients.sum(axis=0)).ravel()


def edge_flux_mismatch(space):
    """Largest normal-flux imbalance across edges of the evaluation mesh, over all dofs.

    A local-shape coefficient is the outward flux through the opposite edge,
    so a div-conforming function has opposite coefficients on the two sides.
    """
    mesh = space.eval_mesh
    c = space.coefficients.toarray()
    et, el = mesh.edge_triangles, mesh.edge_local_index
    both = c[3 * et[:, 0] + el[:, 0]] + c[3 * et[:, 1] + el[:, 1]]
    return np.abs(both).max()


@pytest.mark.parametrize(
    "mesh, dofs",
    [(TETRA, 6), (generate_cube(1.0), 18), (generate_sphere(1.0, 1), 120)],
    ids=["tetrahedron", "cube", "sphere1"],
)
def test_rwg_has_one_dof_per_edge(mesh, dofs):
    rwg = build_rwg(mesh)
    assert rwg.dof_count == dofs == 3 * mesh.n_triangles // 2
    assert build_bc(mesh).dof_count == dofs


def test_rwg_divergence_is_edge_length_over_area():
    mesh = generate_cube(1.0, h=0.5, jitter=0.2, seed=3)
    rwg = build_rwg(mesh)
    lengths = np.linalg.norm(np.diff(mesh.vertices[mesh.edges], axis=1)[:, 0], axis=1)
    c = rwg.coefficients.toarray()
    # divergence on a triangle is coefficient / area; coefficients are +-length
    np.testing.assert_allclose(np.sort(c, axis=0)[[0, -1]], np.stack([-lengths, lengths]), rtol=1e-14)
    assert np.all((c != 0).sum(axis=0) == 2)


@pytest.mark.parametrize("kind", ["RWG", "BC"])
def test_total_divergence_vanishes(kind):
    mesh = generate_cube(1.0, h=0.34, jitter=0.3, seed=1)
    space = build_rwg(mesh) if kind == "RWG" else build_bc(mesh)
    assert np.abs(divergence_integrals(space)).max() < 1e-10


@pytest.mark.parametrize("kind", ["RWG", "BC"])
def test_functions_are_div_conforming(kind):
    mesh = generate_sphere(1.0, 1)
    space = build_rwg(mesh) if kind == "RWG" else build_bc(mesh)
    assert edge_flux_mismatch(space) < 1e-13


def test_div_conformity_by_sampling_edge_midpoints():
    mesh = generate_cube(1.0)
    bc = build_bc(mesh)
    fine = bc.eval_mesh
    rng = np.random.default_rng(0)
    for dof in rng.choice(bc.dof_count, 5, replace=False):
        support = set(bc.support(dof).tolist())
        for e in range(fine.n_edges):
            t0, t1 = fine.edge_triangles[e]
            if t0 not in support and t1 not in support:
                continue
            p, q = fine.vertices[fine.edges[e]]
            mid = 0.5 * (p + q)
            flux = []
            for t in (t0, t1):
                bary = np.linalg.lstsq(np.vstack([fine.corners[t].T, np.ones(3)]), np.append(mid, 1.0), rcond=None)[0]
                value, _ = bc.evaluate(dof, t, bary)
                conormal = np.cross(q - p, fine.normals[t])
                conormal /= np.linalg.norm(conormal)
                if conormal @ (fine.centroids[t] - mid) > 0:
                    conormal = -conormal
                flux.append(value[0] @ conormal)
            assert flux[0] == pytest.approx(-flux[1], abs=1e-12)


def test_rwg_on_refinement_matches_primal_values():
    mesh = generate_cube(1.0, h=0.5)
    rwg = build_rwg(mesh)
    bary = barycentric_refine(mesh)
    fine = on_refinement(rwg, bary)
    third = np.full((1, 3), 1.0 / 3.0)
    for dof in (0, 7, 20):
        for child in range(bary.refined.n_triangles):
            parent = bary.parent[child, 0]
            x = bary.refined.centroids[child]
            coarse_bary = np.linalg.lstsq(np.vstack([mesh.corners[parent].T, np.ones(3)]), np.append(x, 1.0), rcond=None)[0]
            expected, _ = rwg.evaluate(dof, parent, coarse_bary)
            got, _ = fine.evaluate(dof, child, third)
            np.testing.assert_allclose(got, expected, atol=1e-13)


def test_dof_numbering_is_deterministic():
    a = build_bc(generate_cube(1.0, h=0.5))
    b = build_bc(generate_cube(1.0, h=0.5))
    assert (a.coefficients != b.coefficients).nnz == 0


def test_open_mesh_is_rejected():
    cube = generate_cube(1.0)
    open_mesh = SurfaceMesh(cube.vertices, cube.triangles[:-2], np.zeros(10, dtype=int))
    with pytest.raises(MeshError):
        build_rwg(open_mesh)


def test_mismatched_refinement_is_rejected():
    with pytest.raises(ValueError):
        build_bc(generate_cube(1.0), barycentric_refine(generate_cube(1.0, h=0.5)))


def test_rwg_pairing_is_antisymmetric():
    rwg = build_rwg(generate_sphere(1.0, 1))
    m = assemble_mass(rwg, rwg).matrix.toarray()
    assert np.abs(m + m.T).max() < 1e-14 * np.abs(m).max()
    assert np.all(np.diag(m) == 0)


def test_bc_rwg_pairing_invertible_on_cube():
    mesh = generate_cube(1.0)
    pairing = assemble_mass(build_bc(mesh), build_rwg(mesh)).matrix.toarray()
    assert np.linalg.svd(pairing, compute_uv=False).min() > 1e-3


def test_pairing_is_bilinear_in_basis_scaling():
    mesh = generate_cube(1.0)
    rwg, bc = build_rwg(mesh), build_bc(mesh)
    scale = np.ones(rwg.dof_count)
    scale[4] = 2.5
    scaled = FunctionSpace("RWG", rwg.mesh, rwg.eval_mesh, (rwg.coefficients @ sp.diags(scale)).tocsc())
    base = assemble_mass(bc, rwg).matrix.toarray()
    np.testing.assert_allclose(assemble_mass(bc, scaled).matrix.toarray(), base * scale[None, :], atol=1e-15)


def test_mass_on_different_meshes_rejected():
    with pytest.raises(ValueError):
        assemble_mass(build_rwg(generate_cube(1.0)), build_rwg(generate_sphere(1.0, 0)))


@pytest.mark.parametrize("name", list(generator_meshes()))
def test_bc_rwg_condition_bounded_on_generator_meshes(name):
    mesh = generator_meshes()[name]
    assert assemble_mass(build_bc(mesh), build_rwg(mesh)).condition_number() <= 100


def test_mass_solve_recovers_unit_vectors_and_zero():
    mesh = generate_sphere(1.0, 1)
    pairing = assemble_mass(build_bc(mesh), build_rwg(mesh))
    matrix = pairing.matrix.toarray()
    for j in (0, 33, 119):
        e = np.zeros(120)
        e[j] = 1.0
        np.testing.assert_allclose(mass_solve(pairing, matrix @ e), e, atol=1e-10)
    np.testing.assert_array_equal(mass_solve(pairing, np.zeros(120)), 0)


def test_mass_solve_residual():
    mesh = generate_cube(1.0, h=0.25, jitter=0.3, seed=2)
    pairing = assemble_mass(build_rwg(mesh), build_bc(mesh))
    rhs = np.random.default_rng(1).standard_normal((pairing.shape[0], 2)) @ [1, 1j]
    x = pairing.solve(rhs)
    assert np.linalg.norm(pairing.matrix @ x - rhs) / np.linalg.norm(rhs) <= 1e-12


def test_singular_mass_raises():
    rwg = build_rwg(generate_cube(1.0))
    pairing = assemble_mass(rwg, rwg)
    pairing.matrix = sp.csc_matrix(pairing.shape)
    with pytest.raises(np.linalg.LinAlgError):
        pairing.solve(np.ones(rwg.dof_count))
