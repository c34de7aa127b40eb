import math

import numpy as np
import pytest


from localinv.inversion import (CertificationFailed, OutOfChart, build_chart,
                                dense_scale_check, discreteness_probe, hadamard_levy,
                                inverse_derivative, invert, newton_roots,
                                numerical_inverse_derivative, preimage_count,
                                segment_nondegeneracy_probe)
from localinv.maps import DegenerateDerivative
from localinv.spaces import NormedSpaceModel, interval
from localinv.suite import get_problem

from conftest import cubic_root, scalar

CUBIC = get_problem("cubic")
R2 = NormedSpaceModel(2)


@pytest.fixture(scope="module")
def cubic_chart_at_1():
    return build_chart(CUBIC.map, [1.0], initial_radius=0.4, seed=0)


def test_identity_chart_roundtrip():
    rec = get_problem("identity_2d")
    ch = build_chart(rec.map, [0.0, 0.0])
    assert ch.mode == "strong" and ch.s > 0
    y = np.array([0.03, -0.02])
    assert np.allclose(invert(ch, y), y, atol=1e-12)


def test_cubic_invert_far_target(cubic_chart_at_1):
    ch = cubic_chart_at_1
    assert ch.reaches([2.5])
    x = invert(ch, [2.5])
    # bisection oracle
    assert abs(x[0] - cubic_root(2.5)) <= 1e-10
    assert abs(x[0] - 1.11474711) <= 1e-8


def test_cubic_inverse_derivative_at_anchor(cubic_chart_at_1):
    ch = cubic_chart_at_1
    D = inverse_derivative(ch, ch.image)
    assert D[0, 0] == pytest.approx(0.25, abs=1e-12)
    Dn = numerical_inverse_derivative(ch)
    assert abs(Dn[0, 0] - 0.25) <= 1e-6


def test_inverse_derivative_matches_closed_form_over_targets(cubic_chart_at_1):
    ch = cubic_chart_at_1
    for y in np.linspace(1.6, 2.4, 9):
        x = cubic_root(y)
        D = inverse_derivative(ch, [y])
        assert D[0, 0] == pytest.approx(1 / (3 * x * x + 1), rel=1e-9)


def test_out_of_chart(cubic_chart_at_1):
    with pytest.raises(OutOfChart):
        invert(cubic_chart_at_1, [2.0 + 1.01 * cubic_chart_at_1.s])


def test_invert_rejects_batches(cubic_chart_at_1):
    with pytest.raises(ValueError):
        invert(cubic_chart_at_1, [[2.0], [2.1]])


def test_linear_conditioning_roundtrip():
    for name in ("linear_k1", "linear_k10", "linear_k1000"):
        rec = get_problem(name)
        ch = build_chart(rec.map, [0.0, 0.0])
        y = 0.5 * ch.s * np.array([math.cos(0.7), math.sin(0.7)])
        x = invert(ch, y)
        assert np.allclose(x, rec.oracles["inverse"](y), atol=1e-9 * max(1, ch.A.operator_norm))


def test_fold_chart_degenerate_at_origin():
    fold = get_problem("fold").map
    with pytest.raises(DegenerateDerivative):
        build_chart(fold, [0.0, 0.0])
    ch = build_chart(fold, [0.5, 0.0])
    y = np.array([0.26, 0.01])
    assert np.allclose(invert(ch, y), get_problem("fold").oracles["inverse"](y), atol=1e-10)


def test_ha_gets_no_strong_chart():
    ha = get_problem("ha_weakA")
    with pytest.raises(CertificationFailed):
        build_chart(ha.map, [0.0], A=[[1.0]], levels=3)


def test_chart_to_dict_and_inv_tol(cubic_chart_at_1):
    d = cubic_chart_at_1.to_dict()
    assert d["mode"] == "strong" and d["certificate"]["classification"] == "StrongA"
    assert cubic_chart_at_1.inv_tol == pytest.approx(
        cubic_chart_at_1.tol.inv_tol * cubic_chart_at_1.A.operator_norm)


def test_newton_roots_cubic():
    roots = newton_roots(CUBIC.map, np.array([2.5]), np.linspace(-2, 2, 9)[:, None])
    assert len(roots) and np.allclose(roots[:, 0], cubic_root(2.5), atol=1e-10)


def test_complex_square_two_sheets():
    rec = get_problem("complex_square")
    y = np.array([1.0, 0.0])
    cl, sep = discreteness_probe(rec.map, y, rec.region)
    assert len(cl) == 2 and sep == pytest.approx(2.0, abs=1e-8)
    expect = rec.oracles["roots"](y)
    for r in expect:
        assert np.min(np.linalg.norm(cl - r, axis=1)) <= 1e-8


def test_preimage_count_complex_square_constant():
    rec = get_problem("complex_square")
    sc = preimage_count(rec.map, rec.region, 12, seed=4)
    assert sc.constant and np.all(sc.counts == 2)
    assert "lower bounds" in sc.to_dict()["note"]
    assert len(list(sc.rows())) == 12


def test_preimage_count_cubic_single_sheet():
    sc = preimage_count(CUBIC.map, interval(-2, 2), np.array([[0.0], [1.0], [-3.0]]))
    assert sc.constant and np.all(sc.counts == 1) and np.all(np.isinf(sc.separations))


def test_hadamard_levy_cubic_diverges():
    hl = hadamard_levy(CUBIC.map, interval(-2, 2), s_max=10, ds=0.01, seed=1)
    # |D f| >= 1 everywhere, so the running minimum is 1 once the level reaches 0
    assert hl.verdict == "divergence-consistent"
    assert hl.partial_sums[-1] == pytest.approx(10.0, abs=1e-9)
    assert np.all(np.diff(hl.m_hat) <= 1e-15)


def test_hadamard_levy_atan_not_established():
    rec = get_problem("atan")
    hl = hadamard_levy(rec.map, rec.options["hl_sampler"], s_max=10, ds=0.01, seed=1)
    # no level beyond pi/2 adds information the derivative could not reach
    assert hl.verdict == "not-established"
    assert hl.partial_sums[-1] < math.pi / 2 + 0.01
    with pytest.raises(ValueError):
        hadamard_levy(rec.map, interval(-1, 1), quantity="trace")


def test_hadamard_levy_empty_sublevel_is_zero():
    shifted = scalar(lambda x: x + 5.0, lambda x: np.ones_like(x))
    hl = hadamard_levy(shifted, interval(-1, 1), s_max=6, ds=0.5, seed=0)
    assert np.all(hl.m_hat[hl.levels < 4.0] == 0.0)
    assert hl.verdict == "not-established"


def test_dense_scale_cubic():
    pts = np.linspace(-1, 1, 5)[:, None]
    res = dense_scale_check(CUBIC.map, pts, seed=2)
    assert res.passed and res.alpha == pytest.approx(0.25) and res.beta == pytest.approx(0.5)
    assert len(res.image_radii) == 5 and all(r > 0 for r in res.image_radii)


def test_dense_scale_fold_fails():
    fold = get_problem("fold").map
    res = dense_scale_check(fold, [[0.0, 0.0], [0.5, 0.0]])
    assert not res.passed and res.failures


def test_segment_probe_verdicts():
    cubic_pure = get_problem("cubic_pure").map
    seg = segment_nondegeneracy_probe(CUBIC.map, [-1.0], [1.0])
    assert seg.verdict == "nondegenerate" and seg.fraction_nondegenerate == 1.0
    seg = segment_nondegeneracy_probe(cubic_pure, [-1.0], [1.0], dd_floor=1e-6)
    assert seg.verdict in ("dense", "nondegenerate") and not seg.collapsed
    flat = scalar(lambda x: np.where(np.abs(x) < 0.3, 0.0, x - np.sign(x) * 0.3))
    seg = segment_nondegeneracy_probe(flat, [-1.0], [1.0])
    assert seg.verdict == "collapsed"
    (lo, hi), = seg.collapsed
    # |x| < 0.3 is t in (0.35, 0.65)
    assert abs(lo - 0.35) <= 0.02 and abs(hi - 0.65) <= 0.02
    with pytest.raises(ValueError):
        segment_nondegeneracy_probe(CUBIC.map, [0.0], [0.0])
