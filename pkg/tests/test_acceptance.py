"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or directly as a script.
Iteration budgets for the convergence runs were pinned from oracle runs
of the same configuration; see the constants below.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hybridfp.cli import main as cli_main
from hybridfp.config import ConfigError, parse_config
from hybridfp.hybrid import AlgorithmParams, Status, check_trace_invariants, run
from hybridfp.problems import builtin_problem, example_problem, inverse_duality_bifunction, verify_problem
from hybridfp.problems import ProblemInstance
from hybridfp.sets import Ball, Region
from hybridfp.solvers import (
    SolverSettings,
    dykstra,
    eq_certificate,
    eq_resolvent,
    halfspace_from_iterates,
    polyhedral_projection,
    retract,
    retraction_certificate,
    vi_certificate,
    vi_resolvent,
    without_closed_forms,
)
from hybridfp.space import hilbert, lp

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# pinned budgets: p = 2 reaches ||x|| <= 1e-3 at n ~ 250, p = 3 reaches
# ||x|| <= 1e-2 at n ~ 20 (oracle runs with the settings used below)
BUDGET_P2 = 300
BUDGET_P3 = 60

BACKENDS = [("hilbert", None), ("lp", 1.5), ("lp", 2.0), ("lp", 3.0), ("lp", 4.0)]


def make_space(kind, p, d):
    return hilbert(d) if kind == "hilbert" else lp(d, p)


def backend_name(kind, p):
    return "hilbert" if kind == "hilbert" else f"lp{p:g}"


def emit(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    capture = getattr(sys.modules[__name__], "_capsys", None)
    if capture is not None:
        with capture.disabled():
            print("\n" + line)
    else:
        print(line)


@pytest.fixture(autouse=True)
def _expose_capsys(capsys):
    sys.modules[__name__]._capsys = capsys
    yield
    sys.modules[__name__]._capsys = None


# -- 1 ------------------------------------------------------------------------


def test_criterion_1_duality_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for kind, p in BACKENDS:
        for d in (2, 8, 32):
            S = make_space(kind, p, d)
            X = rng.normal(size=(1000, d)) * rng.lognormal(0.0, 2.0, size=(1000, 1))
            for x in X:
                nx = S.norm(x)
                Jx = S.J(x)
                worst = max(
                    worst,
                    abs(S.pair(x, Jx) - nx**2) / nx**2,
                    abs(S.dual_norm(Jx) - nx) / nx,
                    float(np.max(np.abs(S.J_inv(Jx) - x))) / float(np.max(np.abs(x))),
                )
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5.0
    emit(1, ok, f"worst relative error {worst:.2e} (tol 1e-10), {elapsed:.2f} s (limit 5 s)")
    assert ok


# -- 2 ------------------------------------------------------------------------


def test_criterion_2_lyapunov():
    rng = np.random.default_rng(202)
    worst_bound = -np.inf
    worst_hilbert = 0.0
    worst_dual = 0.0
    for kind, p in BACKENDS:
        S = make_space(kind, p, 8)
        for _ in range(1000):
            x, y = rng.normal(size=(2, 8))
            nx, ny = S.norm(x), S.norm(y)
            phi = S.lyapunov(x, y)
            worst_bound = max(worst_bound, (nx - ny) ** 2 - phi, phi - (nx + ny) ** 2)
            worst_dual = max(worst_dual, abs(S.dual_lyapunov(S.J(y), S.J(x)) - phi))
            if S.hilbert:
                worst_hilbert = max(worst_hilbert, abs(phi - float(np.sum((x - y) ** 2))))
    ok = worst_bound <= 1e-12 and worst_hilbert <= 1e-12 and worst_dual <= 1e-10
    emit(
        2,
        ok,
        f"bound slack {-worst_bound:.2e} (>= -1e-12), Hilbert |phi - |x-y|^2| {worst_hilbert:.2e}, "
        f"|phi*(Jz,Jx) - phi(x,z)| {worst_dual:.2e}",
    )
    assert ok


# -- 3 ------------------------------------------------------------------------


def _resolvent_checks(P, rng, count=200):
    S, C = P.space, P.C
    sols = P.known_common_solutions
    worst_cert = 0.0
    worst_comp = -np.inf
    worst_match = 0.0
    for _ in range(count):
        x = C.sample(rng, 1)[0] * 1.5
        r = float(rng.uniform(1.0, 10.0))
        pts = []
        for A in P.operators:
            u, cert = vi_resolvent(S, A, r, x, C)
            worst_cert = max(worst_cert, cert.worst_violation)
            pts.append(u)
            if A.closed_form_resolvent is not None and A.closed_form_resolvent(x, r, C) is not None:
                u2, cert2 = vi_resolvent(S, without_closed_forms(A), r, x, C)
                worst_match = max(worst_match, float(np.max(np.abs(u - u2))))
                worst_cert = max(worst_cert, cert2.worst_violation)
        for f in P.bifunctions:
            z, cert = eq_resolvent(S, f, r, x, C)
            worst_cert = max(worst_cert, cert.worst_violation)
            pts.append(z)
            if f.closed_form_resolvent is not None and f.closed_form_resolvent(x, r, C) is not None:
                z2, cert2 = eq_resolvent(S, without_closed_forms(f), r, x, C)
                worst_match = max(worst_match, float(np.max(np.abs(z - z2))))
                worst_cert = max(worst_cert, cert2.worst_violation)
        for q in pts:
            for u in sols:
                worst_comp = max(worst_comp, S.lyapunov(u, q) + S.lyapunov(q, x) - S.lyapunov(u, x))
    return worst_cert, worst_comp, worst_match


def test_criterion_3_resolvent_certificates():
    problems = [
        builtin_problem("lp-example", p=2, d=8),
        builtin_problem("lp-example", p=3, d=8),
        builtin_problem("hilbert-affine-vi", d=4, seed=0),
    ]
    rng = np.random.default_rng(303)
    parts = []
    ok = True
    for P in problems:
        cert, comp, match = _resolvent_checks(P, rng)
        good = cert <= 1e-6 and comp <= 1e-6 and match <= 1e-6
        ok &= good
        parts.append(f"{P.name}: cert {cert:.1e}, composite {comp:.1e}, closed-vs-iterative {match:.1e}")
    emit(3, ok, "; ".join(parts) + " (all tol 1e-6)")
    assert ok


# -- 4 ------------------------------------------------------------------------


def random_ledger(S, C, rng, k):
    """k cuts {phi(z, y) <= phi(z, x)} from random pairs, all containing a random u in C."""
    u = C.sample(rng, 1)[0] * 0.5
    cuts = []
    while len(cuts) < k:
        a, b = C.sample(rng, 2)
        if S.lyapunov(u, b) > S.lyapunov(u, a):
            a, b = b, a
        cuts.append(halfspace_from_iterates(S, a, b, len(cuts) + 1))
    return Region(C, tuple(cuts)), u


@pytest.fixture(scope="module")
def retraction_sweep():
    """Worst values of every retraction check, per backend, on one shared sample."""
    rng = np.random.default_rng(404)
    settings = SolverSettings(certificate_samples=64)
    d = 4
    results = {}
    for kind, p in BACKENDS:
        S = make_space(kind, p, d)
        C = Ball(S, np.zeros(d), 1.0)
        worst = dict.fromkeys(("idempotence", "sunny", "sunny_forward", "inequality"), 0.0)
        failures = 0
        for trial in range(100):
            reg, u = random_ledger(S, C, rng, int(rng.integers(1, 6)))
            x = rng.normal(size=d) * 1.5
            z = retract(S, x, reg, settings)
            vals = {
                "inequality": retraction_certificate(S, x, z, reg, settings, extra=(u,)).worst_violation,
                "idempotence": float(np.max(np.abs(retract(S, z, reg, settings) - z))),
            }
            for key, ts in (("sunny", (-1.0, -0.5, -0.1)), ("sunny_forward", (0.5, 1.0, 2.0))):
                vals[key] = max(float(np.max(np.abs(retract(S, z + t * (x - z), reg, settings) - z))) for t in ts)
            for key, v in vals.items():
                worst[key] = max(worst[key], v)
            failures += max(vals["idempotence"], vals["sunny"], vals["inequality"]) > 1e-6
        results[backend_name(kind, p)] = (worst, failures)

    # the Hilbert projections (exact and Dykstra) against the generic l_p
    # code path at p = 2, with the euclidean shortcut switched off
    generic = SolverSettings(certificate_samples=64, euclidean_shortcut=False)
    agree = dict.fromkeys(("exact", "dykstra", "shortcut"), 0.0)
    for trial in range(100):
        H, L = hilbert(d), lp(d, 2.0)
        regH, _ = random_ledger(H, Ball(H, np.zeros(d), 1.0), rng, int(rng.integers(1, 6)))
        regL = Region(Ball(L, np.zeros(d), 1.0), regH.constraints)
        x = rng.normal(size=d) * 1.5
        zL = retract(L, x, regL, generic)
        zH = polyhedral_projection(x, regH)
        zD, _, _ = dykstra(x, regH, tol=1e-12, max_iters=100000)
        agree["exact"] = max(agree["exact"], float(np.max(np.abs(zH - zL))))
        agree["dykstra"] = max(agree["dykstra"], float(np.max(np.abs(zD - zL))))
        agree["shortcut"] = max(agree["shortcut"], float(np.max(np.abs(retract(L, x, regL, settings) - zL))))
    return results, agree


# Two parts of this criterion cannot hold. For t < 0 the point Rx + t(x - Rx)
# moves from Rx away from x, against the outward normal and typically into
# the region, where R is the identity, so the sampled sunny check fails
# whenever x lies outside; the forward rays t > 0 are checked separately
# below. For p != 2 the image J(C_n) of a cut ball is generally not convex
# and no point satisfies the variational inequality. The test still runs
# the literal checks and reports them.
@pytest.mark.xfail(strict=True, reason="sunny check at t < 0 and the l_p (p != 2) inequality are unattainable")
def test_criterion_4_retraction_certificates(retraction_sweep):
    results, agree = retraction_sweep
    ok = True
    parts = []
    for name, (worst, failures) in results.items():
        ok &= failures == 0
        parts.append(
            f"{name}: idempotence {worst['idempotence']:.1e}, sunny {worst['sunny']:.1e}, "
            f"inequality {worst['inequality']:.1e}, failing configs {failures}/100"
        )
    ok &= agree["exact"] <= 1e-6 and agree["dykstra"] <= 1e-6
    parts.append(f"Hilbert vs generic lp2: exact {agree['exact']:.1e}, Dykstra {agree['dykstra']:.1e}")
    emit(4, ok, "; ".join(parts) + " (tol 1e-6)")
    assert ok


def test_criterion_4_attainable_parts(retraction_sweep):
    results, agree = retraction_sweep
    for name, (worst, _) in results.items():
        assert worst["idempotence"] <= 1e-6, name
    for name in ("hilbert", "lp2"):
        worst = results[name][0]
        assert worst["sunny_forward"] <= 1e-6, name
        assert worst["inequality"] <= 1e-6, name
    assert max(agree.values()) <= 1e-6, agree


# -- 5 and 6 ------------------------------------------------------------------


CRITERION_6_CHECKS = ("anchor_monotone", "key_decrease", "iterate_feasible", "solutions_in_ledger")


def example_run(p, budget, settings):
    P = example_problem(p, 8)
    params = AlgorithmParams(anchor=np.eye(8)[0] / 2, alpha=(1 / 3, 1 / 3, 1 / 3), max_iters=budget)
    t0 = time.perf_counter()
    trace = run(P, params, settings)
    return P, trace, time.perf_counter() - t0


@pytest.fixture(scope="module")
def run_p2():
    return example_run(2.0, BUDGET_P2, SolverSettings())


@pytest.fixture(scope="module")
def run_p3():
    # the certificate of the retraction is recorded rather than enforced:
    # the J-image of a cut l_3 ball is not convex (see test_solvers)
    return example_run(3.0, BUDGET_P3, SolverSettings(strict_retraction=False))


def test_criterion_5_example_convergence(run_p2, run_p3):
    P2, tr2, t2 = run_p2
    P3, tr3, t3 = run_p3
    n2 = P2.space.norm(tr2.final_point)
    n3 = P3.space.norm(tr3.final_point)
    last = tr2.records[-2]
    ok2 = tr2.status in (Status.CONVERGED, Status.MAX_ITERS) and n2 <= 1e-3 and t2 < 60
    ok_res = last.residual_xy <= 1e-3 and last.residual_fixed_point <= 1e-3
    ok3 = tr3.status in (Status.CONVERGED, Status.MAX_ITERS) and n3 <= 1e-2 and t3 < 300
    cert3 = max(r.cert_retraction for r in tr3.records if r.cert_retraction is not None)
    ok = ok2 and ok_res and ok3
    emit(
        5,
        ok,
        f"p=2: ||x_final|| {n2:.2e} after {tr2.iterations} its in {t2:.1f} s, residuals xy {last.residual_xy:.1e} "
        f"fp {last.residual_fixed_point:.1e}; p=3: ||x_final|| {n3:.2e} after {tr3.iterations} its in {t3:.1f} s "
        f"(largest retraction certificate {cert3:.1e})",
    )
    assert ok


def test_criterion_6_trace_invariants(run_p2, run_p3, hilbert_pair):
    ok = True
    parts = []
    traces = [("p=2", *run_p2[:2]), ("p=3", *run_p3[:2]), ("affine-vi lp2", hilbert_pair[0], hilbert_pair[1])]
    for label, P, tr in traces:
        rep = check_trace_invariants(tr, P, tol=1e-8)
        worst = {name: rep[name].worst_violation for name in CRITERION_6_CHECKS}
        good = all(rep[name].passed for name in CRITERION_6_CHECKS)
        ok &= good
        parts.append(f"{label}: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    emit(6, ok, "; ".join(parts) + " (tol 1e-8)")
    assert ok


# -- 7 ------------------------------------------------------------------------


def direct_hilbert_scheme(M, C, anchor, alpha, r, iterations):
    """The Hilbert-space scheme written out with Euclidean formulas only.

    u_n = (I + rM)^{-1} x_n (interior resolvent), z_n = x_n (no bifunction),
    y_n = a1 x_n + a2 z_n + a3 u_n, C_{n+1} = C_n ∩ {|z - y_n| <= |z - x_n|},
    x_{n+1} = metric projection of the anchor onto C_{n+1}.
    """
    H = hilbert(anchor.size)
    region = Region(C)
    x = anchor.copy()
    xs = [x]
    a1, a2, a3 = alpha
    for n in range(1, iterations + 1):
        u = np.linalg.solve(np.eye(x.size) + r * M, x)
        assert C.slack(u) > 0
        y = a1 * x + a2 * x + a3 * u
        # |z - y|^2 <= |z - x|^2  <=>  2<z, x - y> <= |x|^2 - |y|^2
        region = region.with_constraint(halfspace_from_iterates(H, x, y, n))
        x = polyhedral_projection(anchor, region)
        xs.append(x)
    return np.array(xs)


@pytest.fixture(scope="module")
def hilbert_pair():
    P = builtin_problem("hilbert-affine-vi", d=4, seed=0, geometry="lp2")
    anchor = np.array([2.0, -1.0, 0.5, 1.0])
    params = AlgorithmParams(anchor=anchor, max_iters=100, stop_tol=1e-300)
    trace = run(P, params)
    M = P.operators[0](np.eye(4)).T  # columns A(e_i) = M e_i since c = 0
    H = hilbert(4)
    direct = direct_hilbert_scheme(M, Ball(H, np.zeros(4), P.C.radius), anchor, params.alpha, 1.0, 100)
    return P, trace, direct


def test_criterion_7_hilbert_corollary(hilbert_pair):
    P, trace, direct = hilbert_pair
    engine = np.array([r.x for r in trace.records])
    ok = trace.iterations == 100 and engine.shape == direct.shape
    worst = float(np.max(np.abs(engine - direct))) if ok else np.inf
    ok = ok and worst <= 1e-8
    emit(7, ok, f"{trace.iterations} iterations, max coordinate difference {worst:.2e} (tol 1e-8)")
    assert ok


# -- 8 ------------------------------------------------------------------------


def test_criterion_8_negative_controls():
    S = lp(4, 3.0)
    wrong = ProblemInstance(S, Ball(S, np.zeros(4), 1.0), bifunctions=(inverse_duality_bifunction(S, -1.0),))
    a2 = verify_problem(wrong, samples=200)["bifunction[1] (A2) monotone"]
    wrong_sign_caught = not a2.passed

    P = example_problem(2.0, 4)
    tr = run(P, AlgorithmParams(anchor=np.eye(4)[0] / 2, max_iters=10))
    h = tr.ledger(P.space)[3]
    tr.records[4].x = tr.records[4].x + h.normal / np.dot(h.normal, h.normal)
    corrupted_caught = not check_trace_invariants(tr, P)["iterate_feasible"].passed

    try:
        parse_config({"problem": {"builtin": "lp-example"}, "params": {"alpha": [0.3, 0.3, 0.3]}})
        alpha_caught, msg = False, ""
    except ConfigError as exc:
        alpha_caught, msg = "simplex" in str(exc), str(exc)

    ok = wrong_sign_caught and corrupted_caught and alpha_caught
    emit(
        8,
        ok,
        f"wrong-sign (A2) violation {a2.worst_violation:.2e}; corrupted trace flagged {corrupted_caught}; "
        f"alpha rejected: {msg!r}",
    )
    assert ok


# -- 9 ------------------------------------------------------------------------


def test_criterion_9_reproducibility(tmp_path):
    config = CONFIGS / "example_p3.json"
    codes = [
        cli_main(["run", "--config", str(config), "--seed", "7", "--out", str(tmp_path / name)]) for name in "ab"
    ]
    a = (tmp_path / "a" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / "trace.csv").read_bytes()
    ok = a == b and codes[0] == codes[1] and len(a) > 0
    emit(9, ok, f"{config.name} twice with seed 7: {len(a)} bytes each, identical {a == b}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
