import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calderon_bem import quadrature as Q
from calderon_bem.quadrature import (
    PairClass,
    QuadOrders,
    classify_pair,
    pair_evaluation_count,
    sauter_schwab_rule,
    triangle_rule,
)

REFERENCE = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
TOUCHING = (PairClass.SHARED_VERTEX, PairClass.SHARED_EDGE, PairClass.IDENTICAL)


def tensor_duffy_rule(tri, n):
    """Independent product Gauss rule on a triangle via the collapsed square."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = (x + 1) / 2, w / 2
    u, v = (a.ravel() for a in np.meshgrid(x, x, indexing="ij"))
    weights = np.outer(w, w).ravel()
    points = tri[0] + u[:, None] * (tri[1] - tri[0]) + (u * v)[:, None] * (tri[2] - tri[1])
    area = 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    return points, weights * u * 2 * area


def helmholtz(k):
    def kernel(x, y):
        r = np.linalg.norm(x[:, None] - y[None], axis=2)
        return np.exp(1j * k * r) / r

    return kernel


def product_rule_integral(order, tri1, tri2, kernel):
    rule = triangle_rule(order)

    def scaled(tri):
        area = 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
        return rule.barycentric @ tri, 2 * area * rule.weights

    (x, wx), (y, wy) = scaled(tri1), scaled(tri2)
    return wx @ kernel(x, y) @ wy


def identical_pair_inverse_distance(order):
    rule = sauter_schwab_rule(PairClass.IDENTICAL, order)
    x = rule.test_barycentric @ REFERENCE
    y = rule.trial_barycentric @ REFERENCE
    # reference triangle has twice-area 1, so no jacobian factor
    return float(rule.weights @ (1.0 / np.linalg.norm(x - y, axis=1)))


@pytest.mark.parametrize("order, count", [(1, 1), (2, 3), (3, 4), (4, 6), (5, 7), (6, 12)])
def test_triangle_rule_sizes_and_weight_sum(order, count):
    rule = triangle_rule(order)
    assert rule.size == count
    assert abs(rule.weights.sum() - 0.5) <= 1e-14
    np.testing.assert_allclose(rule.barycentric.sum(axis=1), 1.0, atol=1e-15)


@pytest.mark.parametrize("order", range(1, 7))
def test_triangle_rule_integrates_monomials_exactly(order):
    rule = triangle_rule(order)
    s, t = rule.points[:, 0], rule.points[:, 1]
    for a in range(order + 1):
        for b in range(order + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert rule.weights @ (s**a * t**b) == pytest.approx(exact, abs=1e-14)


@pytest.mark.parametrize("order", [0, 7])
def test_unsupported_orders_rejected(order):
    with pytest.raises(ValueError):
        triangle_rule(order)
    with pytest.raises(ValueError):
        QuadOrders(near=order)


def test_regular_pair_counts():
    orders = QuadOrders(4, 3, 2, 6)
    counts = [pair_evaluation_count(c, orders) for c in (PairClass.NEAR, PairClass.MEDIUM, PairClass.FAR)]
    assert counts == [36, 16, 9]
    ones = QuadOrders(1, 1, 1, 1)
    assert [pair_evaluation_count(c, ones) for c in (PairClass.NEAR, PairClass.MEDIUM, PairClass.FAR)] == [1, 1, 1]


@pytest.mark.parametrize("order, expected", [(6, (512, 1280, 1536)), (1, (2, 5, 6))])
def test_singular_pair_counts(order, expected):
    orders = QuadOrders(singular=order)
    assert tuple(pair_evaluation_count(c, orders) for c in TOUCHING) == expected
    assert tuple(sauter_schwab_rule(c, order).size for c in TOUCHING) == expected


@pytest.mark.parametrize("order", range(1, 7))
def test_counts_follow_the_table_for_every_order(order):
    m = Q.SINGULAR_GAUSS_POINTS[order]
    subdomains = {PairClass.SHARED_VERTEX: 2, PairClass.SHARED_EDGE: 5, PairClass.IDENTICAL: 6}
    for c in TOUCHING:
        assert pair_evaluation_count(c, QuadOrders(singular=order)) == subdomains[c] * m**4
        assert sauter_schwab_rule(c, order).subdomains == subdomains[c]
    assert pair_evaluation_count(PairClass.NEAR, QuadOrders(near=order)) == triangle_rule(order).size ** 2


@pytest.mark.parametrize("order", [2, 4, 6])
@pytest.mark.parametrize("pair_class", TOUCHING)
def test_singular_weights_sum_to_reference_area_squared(pair_class, order):
    assert sauter_schwab_rule(pair_class, order).weights.sum() == pytest.approx(0.25, abs=1e-13)


def test_singular_rule_rejects_separated_pairs():
    with pytest.raises(ValueError):
        sauter_schwab_rule(PairClass.FAR, 6)


def test_classification_examples():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [-1, 0, 0], [-1, -1, 0]], dtype=float)
    assert classify_pair([0, 1, 2], [0, 1, 2], verts) is PairClass.IDENTICAL
    assert classify_pair([0, 1, 2], [1, 3, 2], verts) is PairClass.SHARED_EDGE
    assert classify_pair([0, 1, 2], [0, 4, 5], verts) is PairClass.SHARED_VERTEX
    far = REFERENCE + [10.0, 0.0, 0.0]
    assert classify_pair([0, 1, 2], [0, 1, 2], REFERENCE, far, same_mesh=False) is PairClass.FAR


def test_classification_by_coordinates_across_meshes():
    other = REFERENCE[[1, 0, 2]] + [0.0, 0.0, 0.0]
    assert classify_pair([0, 1, 2], [0, 1, 2], REFERENCE, other, same_mesh=False) is PairClass.IDENTICAL
    moved = REFERENCE + [1.0, 0.0, 0.0]
    assert classify_pair([0, 1, 2], [0, 1, 2], REFERENCE, moved, same_mesh=False) is PairClass.SHARED_VERTEX


@pytest.mark.parametrize("gap, expected", [(0.5, PairClass.NEAR), (2.0, PairClass.MEDIUM), (5.0, PairClass.FAR)])
def test_distance_thresholds(gap, expected):
    # diameter of the reference triangle is sqrt(2); the gap is the closest vertex distance
    d = math.sqrt(2.0)
    moved = REFERENCE + [1.0 + gap * d, 0.0, 0.0]
    assert classify_pair([0, 1, 2], [0, 1, 2], REFERENCE, moved, same_mesh=False) is expected


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=18, max_size=18))
def test_classification_is_symmetric(coords):
    verts = np.array(coords).reshape(6, 3)
    a, b = verts[:3], verts[3:]
    if min(np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0])) for t in (a, b)) < 1e-6:
        return
    forward = classify_pair([0, 1, 2], [0, 1, 2], a, b, same_mesh=False)
    backward = classify_pair([0, 1, 2], [0, 1, 2], b, a, same_mesh=False)
    assert forward is backward


def test_frozen_identical_pair_value_matches_fresh_oracle(reference_integrals):
    from make_reference_data import identical_pair_inverse_distance as oracle

    frozen = float(reference_integrals["identical_inverse_distance"])
    assert oracle(20) == pytest.approx(frozen, rel=1e-8)


@pytest.mark.xfail(strict=True, reason="default order-6 rule (4 points per direction) reaches 1.6e-4, see decisions ledger")
def test_identical_pair_inverse_distance_to_one_in_a_million(reference_integrals):
    reference = float(reference_integrals["identical_inverse_distance"])
    assert abs(identical_pair_inverse_distance(6) - reference) / reference <= 1e-6


def test_identical_pair_inverse_distance_default_accuracy(reference_integrals):
    reference = float(reference_integrals["identical_inverse_distance"])
    assert abs(identical_pair_inverse_distance(6) - reference) / reference <= 2e-4


def test_identical_pair_rule_converges_to_oracle(monkeypatch, reference_integrals):
    reference = float(reference_integrals["identical_inverse_distance"])
    errors = []
    for m in (4, 6, 8, 10):
        monkeypatch.setitem(Q.SINGULAR_GAUSS_POINTS, 6, m)
        sauter_schwab_rule.cache_clear()
        errors.append(abs(identical_pair_inverse_distance(6) - reference) / reference)
    sauter_schwab_rule.cache_clear()
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 1e-6


def test_singular_error_does_not_grow_with_order(reference_integrals):
    reference = float(reference_integrals["identical_inverse_distance"])
    errors = [abs(identical_pair_inverse_distance(o) - reference) for o in range(2, 7)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(errors, errors[1:]))


SMOOTH_PAIR = (REFERENCE, np.array([[0, 0, 0], [1, 0.2, 0], [0.1, 0.9, 0.3]]) + [4.0, 1.0, 0.5])


def smooth_pair_errors(k):
    x, wx = tensor_duffy_rule(SMOOTH_PAIR[0], 30)
    y, wy = tensor_duffy_rule(SMOOTH_PAIR[1], 30)
    kernel = helmholtz(k)
    reference = wx @ kernel(x, y) @ wy
    return [abs(product_rule_integral(o, *SMOOTH_PAIR, kernel) - reference) / abs(reference) for o in range(1, 7)]


@pytest.mark.xfail(
    strict=True,
    reason="the fixed 4-point degree-3 rule is less accurate than the 3-point rule on this kernel",
)
def test_regular_error_decreases_with_every_order():
    errors = smooth_pair_errors(2.0)
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_regular_error_decreases_over_even_orders():
    errors = smooth_pair_errors(2.0)
    even = [errors[o - 1] for o in (2, 4, 6)]
    assert errors[0] > even[0] > even[1] > even[2]
    assert errors[5] == min(errors) and errors[5] < 1e-6
