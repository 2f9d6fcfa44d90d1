"""Verification suites run by ``calderon-bem verify``.

Each suite returns a list of :class:`Check` records holding the measured
value next to its tolerance.  Sizes are fixed and desk-scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import barycentric_refine, generate_cube, generate_sphere
from ..hmatrix import LeafKind, aca, build_block_tree, build_cluster_tree
from ..operators import BIO_COUNTER, GalerkinEvaluator, Medium
from ..operators import verify_calderon as calderon_residuals
from ..pmchwt import PreconditionedMap, Variant, predicted_matvecs, synthetic_system
from ..quadrature import SINGULAR_GAUSS_POINTS, PairClass, QuadOrders, pair_evaluation_count, sauter_schwab_rule, triangle_rule
from ..solver import GmresParams, gmres
from ..spaces import assemble_mass, build_bc, build_rwg

SUITES = ("calderon", "aca", "mass", "quadrature", "counts")


@dataclass
class Check:
    name: str
    measured: object
    tolerance: str
    passed: bool

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: measured {self.measured} (required {self.tolerance})"


def run_suite(name, **options):
    if name not in SUITES:
        raise ValueError(f"unknown verification suite {name!r}; choose from {list(SUITES)}")
    return globals()[f"verify_{name}"](**options)


# ---------------------------------------------------------------------------
# matvec counts


def count_case(variant, M, R, rho, block=None):
    """Instrumented and predicted operator applications for one synthetic solve.

    The synthetic map has random dense blocks large enough that GMRES runs
    the full ``R`` iterations without converging.
    """
    block = block or -(-160 // M)
    A, P, _ = synthetic_system(variant, M, n=block, seed=7 * M + R)
    identity = lambda x: x  # noqa: E731
    pmap = PreconditionedMap(A, P, identity, identity)
    b = np.ones(A.shape[0], dtype=complex)
    with BIO_COUNTER.measure() as counted:
        rhs = pmap.prepare_rhs(b)
        report = gmres(pmap, rhs, GmresParams(1e-14, rho, R))
    return report.iterations, counted["count"], predicted_matvecs(variant, M, report.iterations, rho)


def verify_counts(Ms=(1, 2, 3), Rs=(0, 1, 6, 9, 250), rhos=(1, 200), variants=None):
    variants = variants or [v.value for v in Variant]
    checks = []
    mismatches = []
    total = 0
    for variant in variants:
        for M in Ms:
            for R in Rs:
                for rho in rhos:
                    iterations, counted, predicted = count_case(variant, M, R, rho)
                    total += 1
                    if iterations != R or counted != predicted:
                        mismatches.append((variant, M, R, rho, iterations, counted, predicted))
    checks.append(
        Check(
            f"matvec formula over {total} synthetic solves",
            f"{total - len(mismatches)}/{total} exact",
            "all exact",
            not mismatches,
        )
    )
    for case in mismatches[:10]:
        variant, M, R, rho, it, counted, predicted = case
        checks.append(
            Check(f"{variant} M={M} R={R} rho={rho}", f"{counted} after {it} iterations", f"{predicted}", False)
        )
    return checks


# ---------------------------------------------------------------------------
# Calderon identities


def verify_calderon(subdivisions=(1, 2, 3), k=2.0, bound=0.1, bound_level=2, samples=10):
    checks = []
    r1 = []
    for level in subdivisions:
        rep = verify_calderon_level(level, k, samples)
        r1.append(rep.r1)
        checks.append(Check(f"sphere subdivisions={level} r1 (r2={rep.r2:.3g}, N={rep.dofs})", f"{rep.r1:.4g}", "report", True))
    if bound_level in subdivisions:
        value = r1[list(subdivisions).index(bound_level)]
        checks.append(Check(f"r1 at subdivisions={bound_level}", f"{value:.4g}", f"<= {bound}", value <= bound))
    decreasing = all(b < a for a, b in zip(r1, r1[1:]))
    checks.append(Check("r1 strictly decreasing under refinement", " > ".join(f"{v:.3g}" for v in r1), "strict", decreasing))
    return checks


def verify_calderon_level(level, k=2.0, samples=10):
    return calderon_residuals(generate_sphere(1.0, level), Medium(k), samples=samples)


# ---------------------------------------------------------------------------
# ACA


def aca_block_errors(nu, k=5.0, blocks=24, leaf_size=32, seed=0, jitter=0.3):
    """True errors of ACA on sampled admissible blocks of S on the unit cube.

    ACA runs to its own stopping rule (no rank cap).  Returns
    ``(errors, over_cap)``: relative errors ``|B_nu - B|_2 / |B|_F`` and how
    many of the sampled blocks needed a rank at which the H-matrix would
    store the block densely instead.
    """
    h = 2.0 * math.pi / (10.0 * k)
    mesh = generate_cube(1.0, h=h, jitter=jitter, seed=seed)
    rwg = build_rwg(mesh)
    tree = build_cluster_tree(*rwg.dof_boxes, leaf_size=leaf_size)
    leaves = [leaf for leaf in build_block_tree(tree, tree).leaves if leaf.kind is LeafKind.ADMISSIBLE]
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(leaves), size=min(blocks, len(leaves)), replace=False)
    evaluator = GalerkinEvaluator(rwg, rwg, k, QuadOrders())
    errors, over_cap = [], 0
    for idx in chosen:
        leaf = leaves[idx]
        rows, cols = tree.indices(leaf.rows), tree.indices(leaf.cols)
        B = evaluator.block(rows, cols, ("S",))["S"]
        approx = aca(lambda i: B[i], lambda j: B[:, j], B.shape, nu, min(B.shape))
        if approx.rank > (B.size - 1) // (B.shape[0] + B.shape[1]):
            over_cap += 1
        errors.append(np.linalg.norm(approx.to_dense() - B, 2) / np.linalg.norm(B))
    return np.array(errors), over_cap


def verify_aca(nus=(1e-3, 1e-1), blocks=24):
    checks = []
    for nu in nus:
        errors, over_cap = aca_block_errors(nu, blocks=blocks)
        checks.append(
            Check(f"nu={nu:g}: admissible blocks sampled ({over_cap} above the dense-storage rank)", len(errors), ">= 20", len(errors) >= 20)
        )
        if len(errors):
            med, worst = float(np.median(errors)), float(errors.max())
            checks.append(Check(f"nu={nu:g}: median block error", f"{med:.3g}", f"<= {nu:g}", med <= nu))
            checks.append(Check(f"nu={nu:g}: max block error", f"{worst:.3g}", f"<= {10 * nu:g}", worst <= 10 * nu))
    return checks


# ---------------------------------------------------------------------------
# mass matrices


def generator_meshes():
    return {
        "cube h=0.5": generate_cube(1.0, h=0.5),
        "cube h=0.25": generate_cube(1.0, h=0.25),
        "jittered cube h=0.25": generate_cube(1.0, h=0.25, jitter=0.3, seed=1),
        "box cube side 0.4 h=0.3": generate_cube(0.4, (1.0, 0.0, 0.0), h=0.3),
        "sphere subdivisions=1": generate_sphere(1.0, 1),
        "sphere subdivisions=2": generate_sphere(1.0, 2),
    }


def verify_mass(max_condition=100.0):
    checks = []
    rng = np.random.default_rng(0)
    for name, mesh in generator_meshes().items():
        rwg = build_rwg(mesh)
        bc = build_bc(mesh, barycentric_refine(mesh))
        pairing = assemble_mass(bc, rwg)
        cond = pairing.condition_number()
        checks.append(Check(f"{name}: cond of BC/RWG pairing", f"{cond:.3g}", f"<= {max_condition:g}", cond <= max_condition))
        rr = assemble_mass(rwg, rwg).matrix
        asym = abs(rr + rr.T).max() / abs(rr).max()
        checks.append(Check(f"{name}: RWG/RWG pairing antisymmetry", f"{asym:.2e}", "<= 1e-12", asym <= 1e-12))
        rhs = rng.standard_normal(rwg.dof_count) + 1j * rng.standard_normal(rwg.dof_count)
        x = pairing.solve(rhs)
        res = np.linalg.norm(pairing.matrix @ x - rhs) / np.linalg.norm(rhs)
        checks.append(Check(f"{name}: mass solve residual", f"{res:.2e}", "<= 1e-10", res <= 1e-10))
    return checks


# ---------------------------------------------------------------------------
# quadrature


def verify_quadrature():
    checks = []
    regular = QuadOrders(4, 3, 2, 6)
    got = tuple(pair_evaluation_count(c, regular) for c in (PairClass.NEAR, PairClass.MEDIUM, PairClass.FAR))
    checks.append(Check("regular pair counts at orders (4,3,2)", got, "(36, 16, 9)", got == (36, 16, 9)))
    ones = QuadOrders(1, 1, 1, 1)
    got = tuple(pair_evaluation_count(c, ones) for c in (PairClass.NEAR, PairClass.MEDIUM, PairClass.FAR))
    checks.append(Check("regular pair counts at order 1", got, "(1, 1, 1)", got == (1, 1, 1)))
    touching = (PairClass.SHARED_VERTEX, PairClass.SHARED_EDGE, PairClass.IDENTICAL)
    for order, expected in ((6, (512, 1280, 1536)), (1, (2, 5, 6))):
        orders = QuadOrders(singular=order)
        got = tuple(pair_evaluation_count(c, orders) for c in touching)
        checks.append(Check(f"singular counts (vertex, edge, identical) at order {order}", got, str(expected), got == expected))
    for order in range(1, 7):
        rule = triangle_rule(order)
        worst = _triangle_rule_error(rule)
        checks.append(Check(f"triangle rule order {order} monomial error", f"{worst:.1e}", "<= 1e-13", worst <= 1e-13))
        # the Duffy jacobians are polynomials of degree up to 3 per variable,
        # so a single Gauss point per direction cannot sum them exactly
        for c in touching if SINGULAR_GAUSS_POINTS[order] >= 2 else ():
            w = sauter_schwab_rule(c, order).weights.sum()
            checks.append(Check(f"{c.name} rule order {order} weight sum", f"{w:.15f}", "0.25", abs(w - 0.25) <= 1e-13))
    return checks


def _triangle_rule_error(rule):
    """Largest error over monomials s^a t^b with a + b <= order (exact value a! b! / (a+b+2)!)."""
    s, t = rule.points[:, 0], rule.points[:, 1]
    worst = 0.0
    for a in range(rule.order + 1):
        for b in range(rule.order + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            worst = max(worst, abs(rule.weights @ (s**a * t**b) - exact))
    return worst
