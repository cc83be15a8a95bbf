"""Outer hybrid projection loop and trace diagnostics.

Each step computes, from the current iterate x_n,

    z_n = T_{r_n} x_n                      (equilibrium resolvent of f_n)
    u_n = F_{r_n} x_n                      (VI resolvent of A_n)
    y_n = J*(a1 J x_n + a2 J z_n + a3 T_n u_n)
    C_{n+1} = C_n ∩ {z : phi(z, y_n) <= phi(z, x_n)}
    x_{n+1} = R_{C_{n+1}} x

where x is the fixed anchor and the families are visited cyclically.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .problems import ProblemInstance, cyclic_operator_index, verify_problem
from .sets import Region
from .solvers import (
    InfeasibleRegion,
    LedgerLimitExceeded,
    NonconvergedInnerSolve,
    SolverSettings,
    eq_resolvent,
    halfspace_from_iterates,
    sunny_retraction,
    vi_resolvent,
)

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    INNER_SOLVE_FAILED = "InnerSolveFailed"
    INFEASIBLE_LEDGER = "InfeasibleLedger"


def constant_rule(value: float) -> Callable[[int], float]:
    def rule(n):
        return value

    rule.__name__ = f"constant({value:g})"
    return rule


@dataclass(frozen=True)
class AlgorithmParams:
    """Parameters of the outer iteration.

    ``alpha`` must be strictly inside the simplex; ``r_rule(n)`` must stay
    at or above ``a > 0``; the stopping rule is ||x_{n+1} - x_n|| <= stop_tol.
    """

    anchor: np.ndarray
    alpha: tuple = (1.0 / 3, 1.0 / 3, 1.0 / 3)
    r_rule: Callable[[int], float] = field(default_factory=lambda: constant_rule(1.0))
    a: float = 1.0
    max_iters: int = 1000
    stop_tol: float = 1e-8

    def __post_init__(self):
        alpha = tuple(float(v) for v in self.alpha)
        if len(alpha) != 3 or not all(0.0 < v < 1.0 for v in alpha):
            raise ValueError(f"alpha must be three numbers in (0, 1), got {self.alpha!r}")
        if abs(sum(alpha) - 1.0) > 1e-12:
            raise ValueError(f"alpha must sum to 1 (simplex constraint), got sum {sum(alpha)!r}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        if not self.a > 0:
            raise ValueError("a must be positive")
        for n in (1, 2, 3, 10, 100, 1000):
            if not self.r_rule(n) >= self.a:
                raise ValueError(f"r_rule({n}) = {self.r_rule(n)!r} is below a = {self.a!r}")
        if self.max_iters < 0 or not self.stop_tol > 0:
            raise ValueError("max_iters must be >= 0 and stop_tol > 0")

    def validate_for(self, instance: ProblemInstance):
        instance.space.check(self.anchor)
        if not instance.C.contains(self.anchor):
            raise ValueError("anchor must lie in C")


@dataclass
class IterationRecord:
    """Diagnostics attached to the iterate x_n.

    Step quantities (y_n, z_n, u_n, residuals, certificate values) are None
    on the final record of a trace, where no step was taken from x_n.
    ``step_norm`` is ||x_n - x_{n-1}|| and is None for n = 1.
    """

    n: int
    x: np.ndarray
    phi_anchor: float
    step_norm: Optional[float] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    residual_fixed_point: Optional[float] = None
    residual_xy: Optional[float] = None
    cert_eq: Optional[float] = None
    cert_vi: Optional[float] = None
    cert_retraction: Optional[float] = None
    solution_distance: Optional[float] = None


@dataclass
class IterationTrace:
    records: list
    status: Status
    final_point: np.ndarray
    anchor: np.ndarray
    message: str = ""

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.records if r.y is not None)

    def ledger(self, space) -> list:
        return [halfspace_from_iterates(space, r.x, r.y, r.n) for r in self.records if r.y is not None]


def _record(instance, anchor, n, x, prev):
    S = instance.space
    rec = IterationRecord(n=n, x=x, phi_anchor=S.lyapunov(anchor, x))
    if prev is not None:
        rec.step_norm = S.norm(x - prev)
    if instance.known_common_solutions:
        rec.solution_distance = S.norm(x - instance.known_common_solutions[0])
    return rec


def step(n: int, x_n, region: Region, instance: ProblemInstance, params: AlgorithmParams, settings: SolverSettings):
    """One outer iteration from x_n; returns (x_{n+1}, extended region, record data).

    The returned record carries x_n and every quantity computed from it.
    """
    S = instance.space
    C = instance.C
    r = params.r_rule(n)
    a1, a2, a3 = params.alpha
    known = instance.known_common_solutions

    if instance.bifunctions:
        f = instance.bifunctions[cyclic_operator_index(n, len(instance.bifunctions)) - 1]
        z_n, cert_eq = eq_resolvent(S, f, r, x_n, C, settings, extra=known)
        cert_eq = cert_eq.worst_violation
    else:
        z_n, cert_eq = x_n.copy(), 0.0
    if instance.operators:
        A = instance.operators[cyclic_operator_index(n, len(instance.operators)) - 1]
        u_n, cert_vi = vi_resolvent(S, A, r, x_n, C, settings, extra=known)
        cert_vi = cert_vi.worst_violation
    else:
        u_n, cert_vi = x_n.copy(), 0.0

    Tu = instance.maps(n, u_n)
    y_n = S.J_inv(a1 * S.J(x_n) + a2 * S.J(z_n) + a3 * Tu)
    region = region.with_constraint(halfspace_from_iterates(S, x_n, y_n, n))
    x_next, cert_R = sunny_retraction(S, params.anchor, region, settings, start=x_n, extra=known)

    data = dict(
        y=y_n,
        z=z_n,
        u=u_n,
        residual_fixed_point=S.dual_norm(S.J(u_n) - Tu),
        residual_xy=S.norm(x_n - y_n),
        cert_eq=cert_eq,
        cert_vi=cert_vi,
        cert_retraction=cert_R.worst_violation,
    )
    return x_next, region, data


def run(
    instance: ProblemInstance,
    params: AlgorithmParams,
    settings: SolverSettings = SolverSettings(),
    verify_samples: int = 32,
) -> IterationTrace:
    """Iterate :func:`step` from the anchor until the step norm drops below
    ``stop_tol`` or ``max_iters`` steps were taken. Inner-solver failures end
    the run with the matching status instead of raising."""
    params.validate_for(instance)
    if verify_samples:
        report = verify_problem(instance, verify_samples, settings.rng_seed)
        for line in report.lines():
            if line.startswith("FAIL"):
                log.warning("instance check: %s", line)

    anchor = params.anchor.copy()
    region = Region(instance.C)
    x = anchor.copy()
    records = [_record(instance, anchor, 1, x, None)]
    status, message = Status.MAX_ITERS, ""
    for n in range(1, params.max_iters + 1):
        try:
            x_next, region, data = step(n, x, region, instance, params, settings)
        except NonconvergedInnerSolve as exc:
            status, message = Status.INNER_SOLVE_FAILED, f"iteration {n}: {exc}"
            break
        except (InfeasibleRegion, LedgerLimitExceeded) as exc:
            status, message = Status.INFEASIBLE_LEDGER, f"iteration {n}: {exc}"
            break
        for k, v in data.items():
            setattr(records[-1], k, v)
        records.append(_record(instance, anchor, n + 1, x_next, x))
        x = x_next
        if records[-1].step_norm <= params.stop_tol:
            status = Status.CONVERGED
            break
    if message:
        log.warning("run stopped: %s", message)
    return IterationTrace(records, status, x.copy(), anchor, message)


# -- trace diagnostics ---------------------------------------------------------


@dataclass
class TraceCheck:
    name: str
    worst_violation: float
    tolerance: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.worst_violation <= self.tolerance)


@dataclass
class TraceReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        return [
            f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst violation {c.worst_violation:.3e} (tol {c.tolerance:.0e})"
            for c in self.checks
        ]


def _track(check, value, n):
    if value > check.worst_violation:
        check.worst_violation = value
    if value > check.tolerance:
        check.violations.append(n)


def check_trace_invariants(trace: IterationTrace, instance: ProblemInstance, tol: float = 1e-8) -> TraceReport:
    """Numerical instances of the convergence argument along a trace.

    * anchor_monotone: phi(x, x_n) <= phi(x, x_{n+1})
    * key_decrease: phi(u, y_n) <= phi(u, x_n) for known solutions u
    * solutions_in_ledger: every known solution satisfies every cut
    * iterate_feasible: x_{n+1} satisfies every cut made up to step n
    * cauchy_bound: phi(x_n, x_m) <= phi(x, x_m) - phi(x, x_n) for m = n+1 and m = last
    """
    S = instance.space
    x = trace.anchor
    recs = trace.records
    names = ["anchor_monotone", "key_decrease", "solutions_in_ledger", "iterate_feasible", "cauchy_bound"]
    checks = {k: TraceCheck(k, -np.inf, tol) for k in names}
    ledger = []
    last = recs[-1]
    for i, rec in enumerate(recs[:-1]):
        nxt = recs[i + 1]
        _track(checks["anchor_monotone"], rec.phi_anchor - nxt.phi_anchor, rec.n)
        for m_rec in {id(nxt): nxt, id(last): last}.values():
            bound = S.lyapunov(x, m_rec.x) - S.lyapunov(x, rec.x)
            _track(checks["cauchy_bound"], S.lyapunov(rec.x, m_rec.x) - bound, rec.n)
        if rec.y is None:
            continue
        for u in instance.known_common_solutions:
            _track(checks["key_decrease"], S.lyapunov(u, rec.y) - S.lyapunov(u, rec.x), rec.n)
        ledger.append(halfspace_from_iterates(S, rec.x, rec.y, rec.n))
        for u in instance.known_common_solutions:
            _track(checks["solutions_in_ledger"], -min(h.slack(u) for h in ledger), rec.n)
        _track(checks["iterate_feasible"], -min(h.slack(nxt.x) for h in ledger), rec.n)
    for c in checks.values():
        if c.worst_violation == -np.inf:
            c.worst_violation = 0.0
    return TraceReport(list(checks.values()))
