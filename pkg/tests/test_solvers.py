import numpy as np
import pytest

from hybridfp.problems import Bifunction, affine_operator, duality_operator, example_problem, inverse_duality_bifunction
from hybridfp.sets import Ball, Box, HalfSpace, Region
from hybridfp.solvers import (
    InfeasibleRegion,
    LedgerLimitExceeded,
    NonconvergedInnerSolve,
    SolverSettings,
    dykstra,
    eq_resolvent,
    generalized_projection,
    halfspace_from_iterates,
    polyhedral_projection,
    retraction_certificate,
    sunny_retraction,
    vi_resolvent,
    without_closed_forms,
)
from hybridfp.space import hilbert, lp


def test_halfspace_from_iterates():
    S = hilbert(2)
    h = halfspace_from_iterates(S, np.array([1.0, 0.0]), np.zeros(2))
    np.testing.assert_allclose(h.normal, [1.0, 0.0])
    assert h.offset == pytest.approx(1.0)
    x = np.array([0.3, -0.2])
    triv = halfspace_from_iterates(S, x, x)
    assert not np.any(triv.normal) and triv.offset == 0.0


def test_halfspace_sign_matches_lyapunov():
    S = lp(4, 3.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        z, xn, yn = rng.normal(size=(3, 4))
        h = halfspace_from_iterates(S, xn, yn)
        gap = S.lyapunov(z, xn) - S.lyapunov(z, yn)
        assert h.slack(z) == pytest.approx(gap, abs=1e-10)


def test_hilbert_halfspace_retraction():
    S = hilbert(2)
    reg = Region(Ball(S, np.zeros(2), 1e6), (HalfSpace([0.5, 0.0], 0.0),))
    z, cert = sunny_retraction(S, np.array([2.0, 3.0]), reg)
    np.testing.assert_allclose(z, [0.0, 3.0], atol=1e-12)
    assert cert.passed
    z2, _ = sunny_retraction(lp(2, 2.0), np.array([2.0, 3.0]), Region(Ball(lp(2, 2.0), np.zeros(2), 1e6), reg.constraints))
    np.testing.assert_allclose(z2, [0.0, 3.0], atol=1e-7)


def test_retraction_fixes_region_points():
    S = lp(3, 3.0)
    reg = Region(Ball(S, np.zeros(3), 1.0), (HalfSpace([0.1, 0.2, 0.0], 0.3),))
    x = np.array([0.2, 0.1, -0.4])
    z, cert = sunny_retraction(S, x, reg)
    np.testing.assert_array_equal(z, x)
    assert cert.passed


def test_radial_retraction_lp3():
    S = lp(3, 3.0)
    x = np.array([1.0, -1.0, 0.5])
    x = 2 * x / S.norm(x)
    z, cert = sunny_retraction(S, x, Ball(S, np.zeros(3), 1.0))
    np.testing.assert_allclose(z, x / 2, atol=1e-14)
    # dense boundary check of the defining inequality
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(5000, 3))
    Y /= np.array([S.norm(y) for y in Y])[:, None]
    Jz = S.J(z)
    assert max(float(np.dot(x - z, S.J(y) - Jz)) for y in Y) <= 1e-12
    assert cert.passed


def test_polyhedral_projection_box_and_ball():
    rng = np.random.default_rng(4)
    for trial in range(30):
        d = 4
        cuts = tuple(HalfSpace(rng.normal(size=d), rng.uniform(0.1, 1.0)) for _ in range(8))
        base = Box(-np.ones(d), np.ones(d)) if trial % 2 else Ball(hilbert(d), np.zeros(d), 1.0)
        reg = Region(base, cuts)
        x = 3 * rng.normal(size=d)
        z = polyhedral_projection(x, reg)
        assert reg.slack(z) >= -1e-12
        # optimality: no feasible point is closer, tested against Dykstra
        zd, _, ok = dykstra(x, reg, tol=1e-13, max_iters=200000)
        assert ok
        assert np.linalg.norm(z - x) <= np.linalg.norm(zd - x) + 1e-9
        np.testing.assert_allclose(z, zd, atol=1e-5)


def test_polyhedral_projection_detects_empty_region():
    S = hilbert(2)
    reg = Region(Ball(S, np.zeros(2), 1.0), (HalfSpace([-0.5, 0.0], -4.0),))
    with pytest.raises(InfeasibleRegion):
        polyhedral_projection(np.zeros(2), reg)


def test_dykstra_halfspace():
    reg = Region(Ball(hilbert(2), np.zeros(2), 1e6), (HalfSpace([0.5, 0.0], 0.0),))
    z, its, ok = dykstra(np.array([2.0, 3.0]), reg)
    assert ok
    np.testing.assert_allclose(z, [0.0, 3.0], atol=1e-10)


def test_generalized_projection_radial_on_ball():
    S = lp(3, 4.0)
    v = np.array([2.0, 1.0, -1.0])
    z = generalized_projection(S, Ball(S, np.zeros(3), 1.0), v)
    np.testing.assert_allclose(z, v / S.norm(v), atol=1e-12)


def test_ledger_limit():
    S = hilbert(2)
    reg = Region(Ball(S, np.zeros(2), 1.0), (HalfSpace([0.1, 0.0], 1.0), HalfSpace([0.0, 0.1], 1.0)))
    with pytest.raises(LedgerLimitExceeded):
        sunny_retraction(S, np.array([2.0, 0.0]), reg, SolverSettings(max_ledger=1))


def test_eq_resolvent_hilbert_example():
    S = hilbert(2)
    f = Bifunction(lambda w, v: float(np.dot(w, v - w)), operator=lambda w: w)
    z, cert = eq_resolvent(S, f, 1.0, np.array([0.5, 0.0]), Ball(S, np.zeros(2), 1.0))
    np.testing.assert_allclose(z, [0.25, 0.0], atol=1e-7)
    assert cert.passed


def test_eq_resolvent_zero_and_trivial_bifunction():
    S = lp(3, 3.0)
    C = Ball(S, np.zeros(3), 1.0)
    f = inverse_duality_bifunction(S)
    z, _ = eq_resolvent(S, f, 2.0, np.zeros(3), C)
    np.testing.assert_allclose(z, 0.0, atol=1e-12)
    zero = Bifunction(lambda w, v: 0.0, operator=lambda w: np.zeros_like(w))
    x = np.array([0.2, -0.3, 0.1])
    z, cert = eq_resolvent(S, zero, 1.0, x, C)
    np.testing.assert_allclose(z, x, atol=1e-9)
    assert cert.passed


def test_eq_resolvent_without_operator_form_needs_closed_form():
    S = hilbert(2)
    f = Bifunction(lambda w, v: 0.0)
    with pytest.raises(NotImplementedError):
        eq_resolvent(S, f, 1.0, np.array([0.3, 0.0]), Ball(S, np.zeros(2), 1.0))


@pytest.mark.parametrize("p", [2.0, 3.0])
@pytest.mark.parametrize("r", [1.0, 7.5])
def test_example_resolvents_closed_form_vs_iterative(p, r):
    P = example_problem(p, 4)
    S, C = P.space, P.C
    x = np.array([0.4, -0.3, 0.2, 0.1])
    target = x / (1 + r)
    u, c1 = vi_resolvent(S, P.operators[0], r, x, C)
    u2, c2 = vi_resolvent(S, without_closed_forms(P.operators[0]), r, x, C)
    z, c3 = eq_resolvent(S, P.bifunctions[0], r, x, C)
    z2, c4 = eq_resolvent(S, without_closed_forms(P.bifunctions[0]), r, x, C)
    for pt in (u, u2, z, z2):
        np.testing.assert_allclose(pt, target, atol=1e-6)
    assert all(c.passed for c in (c1, c2, c3, c4))


def test_vi_resolvent_affine():
    S = hilbert(2)
    C = Ball(S, np.zeros(2), 10.0)
    A = affine_operator(S, np.eye(2), np.zeros(2))
    u, cert = vi_resolvent(S, A, 1.0, np.array([2.0, 0.0]), C)
    np.testing.assert_allclose(u, [1.0, 0.0], atol=1e-12)
    u2, cert2 = vi_resolvent(S, without_closed_forms(A), 1.0, np.array([2.0, 0.0]), C)
    np.testing.assert_allclose(u2, [1.0, 0.0], atol=1e-6)
    assert cert.passed and cert2.passed
    u0, _ = vi_resolvent(S, A, 1.0, np.zeros(2), C)
    np.testing.assert_allclose(u0, 0.0)


def test_vi_resolvent_zero_operator_is_projection():
    S = hilbert(2)
    A = affine_operator(S, np.zeros((2, 2)), np.zeros(2))
    u, _ = vi_resolvent(S, A, 1.0, np.array([3.0, 4.0]), Ball(S, np.zeros(2), 1.0))
    np.testing.assert_allclose(u, [0.6, 0.8], atol=1e-6)


def test_bad_r_rejected():
    S = hilbert(2)
    with pytest.raises(ValueError):
        vi_resolvent(S, duality_operator(S), 0.0, np.zeros(2), Ball(S, np.zeros(2), 1.0))


def test_retraction_certificate_flags_wrong_point():
    S = hilbert(2)
    reg = Region(Ball(S, np.zeros(2), 1.0))
    cert = retraction_certificate(S, np.array([2.0, 0.0]), np.array([0.0, 1.0]), reg)
    assert not cert.passed


def test_strict_retraction_raises_on_nonconvex_image():
    # at p = 3 the J-image of this cut ball is not convex and no point
    # satisfies the variational characterisation
    S = lp(2, 3.0)
    x = np.array([0.5, 0.0])
    reg = Region(Ball(S, np.zeros(2), 1.0), (HalfSpace([2.0 / 9, -1.0 / 18], 0.1635030356112992),))
    with pytest.raises(NonconvergedInnerSolve):
        sunny_retraction(S, x, reg)
    z, cert = sunny_retraction(S, x, reg, SolverSettings(strict_retraction=False))
    assert reg.contains(z, 1e-9) and not cert.passed
