import dataclasses
import math

import numpy as np
import pytest

from localinv import _rng
from localinv.cert import (Budgets, Classification, build_tilde, certify, certify_on_scales,
                           check_self_map, estimate_lipschitz, pair_certificates, pair_tilde,
                           quasi_nonexpansive_check)
from localinv.maps import DegenerateDerivative, LinearMap, inverse_jacobian_map
from localinv.spaces import NormedSpaceModel, ball, interval

from conftest import ha, scalar

ONE = LinearMap([[1.0]])
CUBIC = scalar(lambda x: x ** 3 + x, lambda x: 3 * x ** 2 + 1, name="cubic")


def test_build_tilde_identity_zero_and_sign():
    body = interval(-1, 1)
    X = np.linspace(-1, 1, 11)[:, None]
    with pytest.raises(DegenerateDerivative):
        build_tilde(CUBIC, [0.0], [0.2], LinearMap([[0.0]]), body)
    t = build_tilde(CUBIC, [0.0], [0.2], ONE, body)
    assert np.allclose(t(X), X - (X ** 3 + X - 0.2), atol=1e-15)
    # fixed points of the tilde map are preimages
    ident = scalar(lambda x: x, lambda x: np.ones_like(x))
    t = build_tilde(ident, [0.0], [0.3], ONE, body)
    assert np.allclose(t(X), 0.3, atol=1e-15)


def test_lipschitz_constant_map_zero():
    t = build_tilde(scalar(lambda x: np.zeros_like(x)), [0.0], [0.0], ONE, interval(-1, 1))
    # x - A(0 - 0) is the identity, so use a constant map directly
    assert estimate_lipschitz(lambda x: np.full_like(x, 0.4), interval(-1, 1)) == 0.0
    assert estimate_lipschitz(t, interval(-1, 1)) == pytest.approx(1.0, abs=1e-9)


def test_lipschitz_cubic_tilde_from_below():
    # y - x^3 on [-0.2, 0.2] has Lipschitz constant 3 * 0.2^2 = 0.12
    L = estimate_lipschitz(lambda x: 0.1 - x ** 3, interval(-0.2, 0.2), 4096)
    assert L <= 0.12 + 1e-12 and L >= 0.12 * 0.98


def test_lipschitz_half():
    L = estimate_lipschitz(lambda x: x / 2, ball(NormedSpaceModel(2), [0, 0], 1))
    assert abs(L - 0.5) <= 1e-9


def test_lipschitz_monotone_in_budget():
    T = lambda x: np.sin(3 * x) / 2
    body = interval(-1, 1)
    vals = [estimate_lipschitz(T, body, b, seed=5) for b in (64, 256, 1024, 4096)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 1.5 + 1e-12


def test_self_map_examples():
    body = interval(-0.2, 0.2)
    ok, viol = check_self_map(lambda x: 0.1 - x ** 3, body)
    assert ok and viol == 0.0
    ok, viol = check_self_map(lambda x: 0.25 - x ** 3, body)
    # worst image is 0.25 + 0.008 = 0.258, which overshoots 0.2 by 0.058
    assert not ok and viol >= 0.042 and viol == pytest.approx(0.058, abs=1e-12)


def test_certify_identity_strong():
    ident = scalar(lambda x: x, lambda x: np.ones_like(x))
    c = certify(ident, [0.0], ONE, interval(-1, 1), 0.5)
    assert c.classification is Classification.STRONG and c.lipschitz <= 1e-9  # rounding only


def test_certify_cubic_small_ball_strong():
    c = certify(CUBIC, [0.0], ONE, interval(-0.2, 0.2), 0.09, seed=3)
    assert c.classification is Classification.STRONG
    assert c.lipschitz <= 0.12 + 1e-12
    assert c.to_dict()["classification"] == "StrongA"


def test_certify_cubic_large_target_radius_fails_strong():
    c = certify(CUBIC, [0.0], ONE, interval(-0.2, 0.2), 0.5, seed=3)
    assert c.classification is not Classification.STRONG
    assert c.self_map_worst_violation > 0


def test_certify_ha_weak_no_fixed_point():
    c = certify(ha(0.0, 1.0), [0.0], ONE, interval(-1, 1), 0.49, seed=42, target_center=[0.0])
    assert c.classification is Classification.WEAK_NO_FIXED_POINT
    assert c.min_residual >= 0.01 - 1e-12


def test_certify_rejects_boundary_anchor_and_bad_radius():
    c = certify(CUBIC, [0.2], ONE, interval(-0.2, 0.2), 0.05)
    assert c.classification is Classification.UNCERTIFIED
    c = certify(CUBIC, [0.0], ONE, interval(-0.2, 0.2), 0.0)
    assert c.classification is Classification.UNCERTIFIED


def test_certify_deterministic_per_seed():
    a = certify(CUBIC, [0.0], ONE, interval(-0.2, 0.2), 0.09, seed=11).to_dict()
    b = certify(CUBIC, [0.0], ONE, interval(-0.2, 0.2), 0.09, seed=11).to_dict()
    assert a == b


def test_quasi_examples():
    body = interval(-1, 1)
    ok, r = quasi_nonexpansive_check(lambda x: -x, body, [[0.0]])
    assert ok and r == pytest.approx(1.0)
    ok, r = quasi_nonexpansive_check(lambda x: 2 * x, body, [[0.0]])
    assert not ok and r == pytest.approx(2.0)
    with pytest.raises(ValueError):
        quasi_nonexpansive_check(lambda x: x + 1, body, [[0.0]])


def test_scales_cubic():
    prof = certify_on_scales(CUBIC, [0.0], lambda x: inverse_jacobian_map(CUBIC, x),
                             [0.4, 0.2, 0.1], seed=1)
    assert prof.certified
    assert prof.alpha == pytest.approx(0.25) and prof.beta == pytest.approx(0.5)
    assert prof.eta <= prof.gamma and prof.r_max == 0.4


def test_scales_identity_2d():
    ident = scalar(lambda x: x, lambda x: np.ones_like(x))
    prof = certify_on_scales(ident, [0.0], lambda x: ONE, [0.4, 0.2, 0.1, 0.05], seed=2)
    assert prof.certified and all(r.certificate.classification is Classification.STRONG
                                  for r in prof.records)


def test_scales_fold_degenerate():
    fold = scalar(lambda x: x ** 2, lambda x: 2 * x)
    prof = certify_on_scales(fold, [0.0], lambda x: inverse_jacobian_map(fold, x), [0.4])
    assert not prof.certified and "degenerate" in prof.reason


def test_pair_tilde_componentwise():
    t1 = build_tilde(CUBIC, [0.0], [0.05], ONE, interval(-0.2, 0.2))
    t2 = build_tilde(scalar(np.sin, np.cos), [0.0], [0.05], ONE, interval(-0.2, 0.2))
    tp = pair_tilde(t1, t2)
    X = tp.body.sample(_rng.stream(0, "t"), 500)
    assert np.array_equal(tp(X), np.concatenate([t1(X[:, :1]), t2(X[:, 1:])], axis=-1))


def test_pairing_formula_example():
    p = certify_on_scales(CUBIC, [0.0], lambda x: inverse_jacobian_map(CUBIC, x), [0.4], seed=0)
    p1 = dataclasses.replace(p, alpha=0.25, beta=0.5, eta=0.5, gamma=1.0)
    pp = pair_certificates(p1, p)
    rt2 = math.sqrt(2)
    assert pp.constants == pytest.approx((rt2 / 8, rt2 / 4, rt2 / 4, rt2), abs=1e-15)
    assert pp.notes["lipschitz_combination"]["rule"] == "max"
    rung = pp.notes["lipschitz_combination"]["per_rung"][0]
    assert rung["combined_max"] == max(rung["factor_estimates"])


def test_budgets_grid_step():
    b = Budgets()
    assert b.grid_step(interval(-1, 1)) == pytest.approx(2 / 2000)
