"""Inner solvers: equilibrium and VI resolvents, and the sunny retraction.

Every solve returns its point together with a :class:`Certificate`: the
worst violation of the defining variational inequality over a set of test
points (random feasible points, known solutions, the input, and boundary
points of the base set). The certificate, not the iteration that produced
the point, decides acceptance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, lsq_linear, minimize

from .sets import Ball, Box, HalfSpace, Region, as_region
from .space import SpaceDescriptor

log = logging.getLogger(__name__)

EQ_RESOLVENT = "eq_resolvent"
VI_RESOLVENT = "vi_resolvent"
RETRACTION = "retraction"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and budgets for the inner solvers.

    ``inner_tol`` stops the iterative paths, ``closed_form_tol`` is the
    acceptance tolerance of projections with exact formulas; certificates
    pass when the worst sampled violation is at most ``certificate_tol``.
    ``max_ledger`` caps the number of accumulated half-spaces (None means
    unlimited). With ``strict_retraction`` off, a retraction whose
    certificate fails is still returned (with a warning): in l_p with
    p != 2 the image J(C_n) of a cut region need not be convex, and then no
    point satisfies the variational inequality although the minimiser of
    phi(x, .) exists. The same non-convexity creates local minima, so for
    p != 2 the retraction is restarted from ``retraction_starts`` random
    feasible points besides the warm start, keeping the best value.
    ``euclidean_shortcut`` sends l_p spaces with p = 2 to the exact
    polyhedral projection used for Hilbert spaces; switching it off keeps
    them on the generic l_p path, which is mainly useful for cross-checks.
    """

    inner_tol: float = 1e-8
    closed_form_tol: float = 1e-10
    max_inner_iters: int = 10000
    certificate_samples: int = 64
    certificate_tol: float = 1e-6
    rng_seed: int = 0
    max_ledger: int | None = None
    strict_retraction: bool = True
    retraction_starts: int = 6
    euclidean_shortcut: bool = True

    def __post_init__(self):
        for name in ("inner_tol", "closed_form_tol", "certificate_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_inner_iters < 1 or self.certificate_samples < 0:
            raise ValueError("max_inner_iters must be >= 1 and certificate_samples >= 0")


@dataclass(frozen=True)
class Certificate:
    kind: str
    worst_violation: float
    samples_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.worst_violation <= self.tolerance)


class NonconvergedInnerSolve(RuntimeError):
    """The inner solver could not produce a point passing its certificate."""

    def __init__(self, message, best=None, certificate=None):
        super().__init__(message)
        self.best = best
        self.certificate = certificate


class InfeasibleRegion(RuntimeError):
    """The base set intersected with the ledger is empty."""


class LedgerLimitExceeded(RuntimeError):
    """The half-space ledger reached ``max_ledger``."""


def halfspace_from_iterates(space: SpaceDescriptor, x_n, y_n, index: int = 0) -> HalfSpace:
    """Cut {z : phi(z, y_n) <= phi(z, x_n)} written as 2<z, Jx_n - Jy_n> <= ||x_n||^2 - ||y_n||^2."""
    c = space.J(x_n) - space.J(y_n)
    b = space.norm(x_n) ** 2 - space.norm(y_n) ** 2
    return HalfSpace(c, b, index)


# -- certificate machinery -----------------------------------------------------


def certificate_points(space, region: Region, anchor, extra=(), settings=SolverSettings()):
    """Feasible test points: random samples, boundary points and ``extra``.

    Points outside the ledger are pulled toward the feasible ``anchor``.
    """
    rng = np.random.default_rng(settings.rng_seed)
    base = region.base
    pts = [base.sample(rng, settings.certificate_samples), base.boundary_points()]
    extra = [space.check(e) for e in extra]
    extra = [e for e in extra if base.contains(e)]
    if extra:
        pts.append(np.array(extra))
    pts = np.vstack([p for p in pts if len(p)])
    return region.pull_inside(pts, np.asarray(anchor, dtype=float))


def _certificate(kind, violations, settings):
    worst = float(np.max(violations)) if len(violations) else 0.0
    return Certificate(kind, worst, len(violations), settings.certificate_tol)


def retraction_certificate(space, x, z, region, settings=SolverSettings(), extra=()):
    """Worst <x - z, Jy - Jz> over sampled feasible y (should be <= 0)."""
    region = as_region(region)
    Y = certificate_points(space, region, z, tuple(extra) + (x,), settings)
    Jz = space.J(z)
    d = np.asarray(x) - z
    viol = np.array([float(np.dot(d, space.J(y) - Jz)) for y in Y])
    return _certificate(RETRACTION, viol, settings)


def vi_certificate(space, A, r, x, u, C, settings=SolverSettings(), extra=()):
    """Worst -(<y - u, Au> + <y - u, Ju - Jx>/r) over sampled y in C."""
    Y = certificate_points(space, as_region(C), u, tuple(extra) + (x,), settings)
    g = A(u) + (space.J(u) - space.J(x)) / r
    viol = -((Y - u) @ g)
    return _certificate(VI_RESOLVENT, viol, settings)


def eq_certificate(space, f, r, x, z, C, settings=SolverSettings(), extra=()):
    """Worst -(f(Jz, Jy) + <z - x, Jy - Jz>/r) over sampled y in C."""
    Y = certificate_points(space, as_region(C), z, tuple(extra) + (x,), settings)
    Jz = space.J(z)
    d = (np.asarray(z) - x) / r
    viol = []
    for y in Y:
        Jy = space.J(y)
        viol.append(-(f(Jz, Jy) + float(np.dot(d, Jy - Jz))))
    return _certificate(EQ_RESOLVENT, np.array(viol), settings)


# -- projections ---------------------------------------------------------------


def _euclid_base_projection(base, x):
    if isinstance(base, Ball):
        d = x - base.center
        n = float(np.linalg.norm(d))
        return x.copy() if n <= base.radius else base.center + d * (base.radius / n)
    return np.clip(x, base.lower, base.upper)


def _ledger_arrays(region):
    if not region.constraints:
        return np.zeros((0, region.base.interior_point().size)), np.zeros(0)
    c = np.array([h.normal for h in region.constraints])
    b = np.array([h.offset for h in region.constraints])
    return c, b


def dykstra(x, region: Region, tol: float = 1e-10, max_iters: int = 10000):
    """Euclidean projection onto base ∩ half-spaces by Dykstra's algorithm.

    Returns ``(z, iterations, converged)``. Half-space corrections are kept
    as scalar multiples of the constraint normals. The run stops when both
    the iterate and the corrections have settled to ``tol``.
    """
    x = np.asarray(x, dtype=float)
    region = as_region(region)
    c, b = _ledger_arrays(region)
    a = 2.0 * c
    nrm2 = np.einsum("ij,ij->i", a, a)
    zero = nrm2 == 0
    if np.any(zero & (b < 0)):
        raise InfeasibleRegion("ledger contains an empty half-space (zero normal, negative offset)")
    keep = np.flatnonzero(~zero)
    a, b, nrm2 = a[keep], b[keep], nrm2[keep]
    m = len(b)
    base = region.base

    z = x.copy()
    e0 = np.zeros_like(z)
    e = np.zeros(m)
    for it in range(1, max_iters + 1):
        z_prev, e_prev, e0_prev = z, e.copy(), e0
        y = z + e0
        z = _euclid_base_projection(base, y)
        e0 = y - z
        # with no active corrections and z feasible a full cycle is the identity
        if m and (np.any(e) or np.any(a @ z > b)):
            for k in range(m):
                y = z + e[k] * a[k]
                v = float(a[k] @ y) - b[k]
                t = v / nrm2[k] if v > 0 else 0.0
                z = y - t * a[k]
                e[k] = t
        if not np.any(e) and not np.any(e0):
            return z, it, True
        change = float(np.max(np.abs(z - z_prev)))
        corr = float(np.sum((e - e_prev) ** 2 * nrm2) + np.sum((e0 - e0_prev) ** 2))
        if change <= tol and corr <= tol * tol and region.slack(z) >= -tol:
            return z, it, True
    return z, max_iters, False


def _least_distance(x, A, b):
    """Euclidean projection of x onto {z : Az <= b} as a least-distance program.

    Lawson and Hanson reduce min ||w|| s.t. Gw >= h to one nonnegative least
    squares solve; here w = z - x, G = -A and h = Ax - b. Returns None when
    the polyhedron is empty.
    """
    if len(b) == 0:
        return x.copy()
    h = A @ x - b
    if np.all(h <= 0):
        return x.copy()
    scale = np.linalg.norm(A, axis=1)
    G, h = -A / scale[:, None], h / scale
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    # bounded-variable least squares; scipy's nnls can stop short of the KKT point
    u = lsq_linear(E, f, bounds=(0.0, np.inf), method="bvls", tol=1e-15).x
    res = E @ u - f
    if abs(res[-1]) < 1e-14:
        return None
    return x - res[:-1] / res[-1]


def polyhedral_projection(x, region: Region):
    """Exact Euclidean projection onto a ball or box cut by the ledger half-spaces.

    Box bounds join the half-spaces of the least-distance program. For a
    ball the multiplier mu of the sphere is found by root search: the
    projection is the polyhedral projection of c + (x - c)/(1 + mu).
    """
    x = np.asarray(x, dtype=float)
    region = as_region(region)
    c, b = _ledger_arrays(region)
    A = 2.0 * c
    base = region.base
    empty = InfeasibleRegion("base ∩ ledger is empty")
    if isinstance(base, Box):
        eye = np.eye(x.size)
        z = _least_distance(x, np.vstack([A, eye, -eye]), np.concatenate([b, base.upper, -base.lower]))
        if z is None:
            raise empty
        return np.clip(z, base.lower, base.upper)

    ctr, R = base.center, base.radius

    def at(mu):
        z = _least_distance(ctr + (x - ctr) / (1.0 + mu), A, b)
        if z is None:
            raise empty
        return z

    z = at(0.0)
    if np.linalg.norm(z - ctr) <= R:
        return z
    hi = 1.0
    while np.linalg.norm(at(hi) - ctr) > R:
        hi *= 4.0
        if hi > 1e16:
            raise empty
    mu = brentq(lambda t: np.linalg.norm(at(t) - ctr) - R, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    z = at(mu)
    nz = np.linalg.norm(z - ctr)
    return ctr + (z - ctr) * min(1.0, R / nz)


def _find_feasible_point(space, region):
    """Some point of the region, or None when the solver finds none."""
    base = region.base
    z0 = base.interior_point()
    if region.contains(z0):
        return z0
    cons = _constraints_primal(space, region)
    bounds = list(zip(base.lower, base.upper)) if isinstance(base, Box) else None
    res = minimize(
        lambda z: (float(np.dot(z - z0, z - z0)), 2 * (z - z0)),
        z0,
        jac=True,
        method="SLSQP",
        constraints=cons,
        bounds=bounds,
        options={"maxiter": 500, "ftol": 1e-14},
    )
    return res.x if region.contains(res.x, 1e-9) else None


def _constraints_primal(space, region):
    cons = []
    c, b = _ledger_arrays(region)
    if len(b):
        cons.append({"type": "ineq", "fun": lambda z: b - 2.0 * (c @ z), "jac": lambda z: -2.0 * c})
    base = region.base
    if isinstance(base, Ball):
        ctr, R = base.center, base.radius
        cons.append(
            {
                "type": "ineq",
                "fun": lambda z: np.array([R * R - space.norm(z - ctr) ** 2]),
                "jac": lambda z: (-2.0 * space.J(z - ctr))[None, :],
            }
        )
    return cons


def _constraints_dual(space, region):
    # constraints on w with z = J*(w)
    cons = []
    c, b = _ledger_arrays(region)
    Jinv, Hq = space.J_inv, space.inverse_duality_jacobian
    if len(b):
        cons.append(
            {
                "type": "ineq",
                "fun": lambda w: b - 2.0 * (c @ Jinv(w)),
                "jac": lambda w: -2.0 * c @ Hq(w),
            }
        )
    base = region.base
    if isinstance(base, Ball):
        ctr, R = base.center, base.radius
        if base.centered:
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda w: np.array([R * R - space.dual_norm(w) ** 2]),
                    "jac": lambda w: (-2.0 * Jinv(w))[None, :],
                }
            )
        else:
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda w: np.array([R * R - space.norm(Jinv(w) - ctr) ** 2]),
                    "jac": lambda w: (-2.0 * Hq(w) @ space.J(Jinv(w) - ctr))[None, :],
                }
            )
    else:
        lo, hi = base.lower, base.upper
        cons.append(
            {
                "type": "ineq",
                "fun": lambda w: np.concatenate([Jinv(w) - lo, hi - Jinv(w)]),
                "jac": lambda w: np.vstack([Hq(w), -Hq(w)]),
            }
        )
    return cons


def _slsqp(fun, x0, cons, bounds, settings):
    res = minimize(
        fun,
        x0,
        jac=True,
        method="SLSQP",
        constraints=cons,
        bounds=bounds,
        options={"maxiter": min(settings.max_inner_iters, 1000), "ftol": 1e-16},
    )
    return res.x


def _polish_feasible(region, z, anchor, tol):
    # pull a marginally infeasible optimizer onto the region along the segment
    # to a feasible anchor; moves are of the size of the infeasibility
    if region.slack(z) >= 0 or anchor is None:
        return z
    zz = region.pull_inside(np.asarray([z]), anchor)[0]
    if isinstance(region.base, Box):
        zz = np.clip(zz, region.base.lower, region.base.upper)
    return zz if np.max(np.abs(zz - z)) <= 1e3 * tol else z


def generalized_projection(space: SpaceDescriptor, C, v, settings=SolverSettings(), start=None):
    """argmin over z in C of phi(z, v); the metric projection in Hilbert space."""
    region = as_region(C)
    v = space.check(v)
    if region.contains(v):
        return v.copy()
    if _euclidean(space, settings):
        return _hilbert_projection(region, v, settings)
    base = region.base
    if not region.constraints and isinstance(base, Ball) and base.centered:
        return v * (base.radius / space.norm(v))
    Jv = space.J(v)

    def fun(z):
        return space.norm(z) ** 2 - 2.0 * float(np.dot(z, Jv)), 2.0 * (space.J(z) - Jv)

    bounds = list(zip(base.lower, base.upper)) if isinstance(base, Box) else None
    z0 = start if start is not None else _euclid_base_projection(base, v)
    z = _slsqp(fun, z0, _constraints_primal(space, region), bounds, settings)
    return _polish_feasible(region, z, _find_feasible_point(space, region), settings.inner_tol)


def _euclidean(space, settings):
    return space.hilbert or (space.p == 2.0 and settings.euclidean_shortcut)


def _hilbert_projection(region, x, settings):
    return polyhedral_projection(x, region)


def _lp_retraction(space, x, region, start, settings):
    base = region.base
    bounds_p = list(zip(base.lower, base.upper)) if isinstance(base, Box) else None
    if space.p >= 2.0:
        # derivative of J is bounded for p >= 2: optimise over z directly
        nx2 = space.norm(x) ** 2

        def fun(z):
            Jz = space.J(z)
            val = nx2 - 2.0 * float(np.dot(x, Jz)) + space.norm(z) ** 2
            grad = 2.0 * Jz - 2.0 * space.duality_jacobian(z) @ x
            return val, grad

        return _slsqp(fun, start, _constraints_primal(space, region), bounds_p, settings)

    # p < 2: optimise over w = Jz where the objective is convex and smooth
    def fun(w):
        return space.dual_norm(w) ** 2 - 2.0 * float(np.dot(x, w)), 2.0 * (space.J_inv(w) - x)

    w = _slsqp(fun, space.J(start), _constraints_dual(space, region), None, settings)
    return space.J_inv(w)


def retract(space: SpaceDescriptor, x, region, settings=SolverSettings(), start=None):
    """The sunny generalized nonexpansive retraction R x onto ``region``, uncertified."""
    region = as_region(region)
    x = space.check(x)
    if region.contains(x):
        return x.copy()
    if _euclidean(space, settings):
        # phi(x, z) = |x - z|^2 whenever the norm is euclidean
        return _hilbert_projection(region, x, settings)
    base = region.base
    if not region.constraints and isinstance(base, Ball) and base.centered:
        return x * (base.radius / space.norm(x))
    feasible = _find_feasible_point(space, region)
    if feasible is None:
        raise InfeasibleRegion("no feasible point found in base ∩ ledger")
    starts = [feasible]
    if start is not None:
        start = np.asarray(start, dtype=float)
        starts.insert(0, region.pull_inside(start[None, :], feasible)[0])
    if space.p != 2.0 and settings.retraction_starts:
        # half of the restarts in a cloud around the warm start, half global
        rng = np.random.default_rng([settings.rng_seed, len(region.constraints)])
        k = settings.retraction_starts
        cloud = base.sample(rng, k - k // 2)
        if start is not None:
            cloud = start + (cloud - base.interior_point()) * (space.norm(start - feasible) / base.radius
                                                              if isinstance(base, Ball) else 0.5)
        starts.extend(region.pull_inside(np.vstack([cloud, base.sample(rng, k // 2)]), feasible))
    best, best_val = None, np.inf
    for s0 in starts:
        z = _polish_feasible(region, _lp_retraction(space, x, region, s0, settings), feasible, settings.inner_tol)
        val = space.lyapunov(x, z) if region.slack(z) >= -settings.inner_tol else np.inf
        if best is None or val < best_val:
            best, best_val = z, val
    return best


def sunny_retraction(space: SpaceDescriptor, x, region, settings=SolverSettings(), start=None, extra=()):
    """Retract ``x`` onto ``region`` and certify <x - Rx, Jy - JRx> <= tol.

    Euclidean norms (Hilbert, or l_p with p = 2) use an exact polyhedral
    projection; other l_p spaces minimise phi(x, z)
    over the region with SLSQP. Raises :class:`InfeasibleRegion` for an
    empty region and :class:`NonconvergedInnerSolve` when the certificate
    fails.
    """
    region = as_region(region)
    if settings.max_ledger is not None and len(region.constraints) > settings.max_ledger:
        raise LedgerLimitExceeded(f"ledger holds {len(region.constraints)} > {settings.max_ledger} half-spaces")
    z = retract(space, x, region, settings, start)
    if region.slack(z) < -settings.certificate_tol:
        raise NonconvergedInnerSolve("retraction left the region", z, None)
    cert = retraction_certificate(space, x, z, region, settings, extra)
    if not cert.passed and not settings.strict_retraction:
        log.warning("retraction certificate %.3e above tolerance, keeping the minimiser", cert.worst_violation)
    elif not cert.passed:
        raise NonconvergedInnerSolve(f"retraction certificate failed ({cert.worst_violation:.3e})", z, cert)
    return z, cert


# -- resolvents ----------------------------------------------------------------


def _lipschitz_estimate(pairs, num, den):
    best = 0.0
    for a, b in pairs:
        d = den(a, b)
        if d > 1e-12:
            best = max(best, num(a, b) / d)
    return best


def _extragradient(G, prox, dist, z0, tau, settings):
    """Mirror extragradient z+ = prox(z, tau, G(prox(z, tau, G(z)))).

    ``prox(z, tau, g)`` is the prox step in the mirror geometry and
    ``dist(a, b)`` the norm used for the step-size safeguard.
    """
    z = z0
    g = G(z)
    for it in range(1, settings.max_inner_iters + 1):
        while True:
            zh = prox(z, tau, g)
            gh = G(zh)
            dz = dist(zh, z)
            if tau * dist(gh, g, dual=True) <= 0.9 * dz or dz == 0.0:
                break
            tau *= 0.5
        z_new = prox(z, tau, gh)
        step = float(np.max(np.abs(zh - z)))
        z = z_new
        g = G(z)
        if step <= settings.inner_tol * min(1.0, tau):
            return z, it
    return z, settings.max_inner_iters


def vi_resolvent(space: SpaceDescriptor, A, r: float, x, C, settings=SolverSettings(), extra=()):
    """Point u in C with <y - u, Au> + <y - u, Ju - Jx>/r >= 0 for all y in C.

    Uses ``A.closed_form_resolvent`` when it applies, otherwise a mirror
    extragradient on z -> Az + (Jz - Jx)/r with generalized projections.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    x = space.check(x)
    Jx = space.J(x)
    rng = np.random.default_rng(settings.rng_seed)

    if A.closed_form_resolvent is not None:
        u = A.closed_form_resolvent(x, r, C)
        if u is not None:
            cert = vi_certificate(space, A, r, x, u, C, settings, extra)
            if cert.passed:
                return u, cert
            log.debug("closed-form VI resolvent failed its certificate, trying iterative path")

    lam = A.lipschitz
    if lam is None:
        S = C.sample(rng, 16)
        lam = _lipschitz_estimate(
            zip(S[:8], S[8:]),
            lambda a, b: space.dual_norm(A(a) - A(b)),
            lambda a, b: space.dual_norm(space.J(a) - space.J(b)),
        )
    tau = 0.5 / (1.0 / r + lam)

    def G(z):
        return A(z) + (space.J(z) - Jx) / r

    def prox(z, t, g):
        return generalized_projection(space, C, space.J_inv(space.J(z) - t * g), settings)

    def dist(a, b, dual=False):
        return space.dual_norm(a - b) if dual else space.dual_norm(space.J(a) - space.J(b))

    u, its = _extragradient(G, prox, dist, generalized_projection(space, C, x, settings), tau, settings)
    cert = vi_certificate(space, A, r, x, u, C, settings, extra)
    log.debug("VI resolvent: %d extragradient steps, certificate %.2e", its, cert.worst_violation)
    if not cert.passed:
        raise NonconvergedInnerSolve(f"VI resolvent certificate failed ({cert.worst_violation:.3e})", u, cert)
    return u, cert


def eq_resolvent(space: SpaceDescriptor, f, r: float, x, C, settings=SolverSettings(), extra=()):
    """Point z in C with f(Jz, Jy) + <z - x, Jy - Jz>/r >= 0 for all y in C.

    Operator-form bifunctions f(w, w') = <G(w), w' - w> are solved as a
    variational inequality on JC by mirror extragradient whose prox step is
    the sunny retraction onto C. Other bifunctions need a closed form.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    x = space.check(x)
    rng = np.random.default_rng(settings.rng_seed)

    if f.closed_form_resolvent is not None:
        z = f.closed_form_resolvent(x, r, C)
        if z is not None:
            cert = eq_certificate(space, f, r, x, z, C, settings, extra)
            if cert.passed:
                return z, cert
            log.debug("closed-form EP resolvent failed its certificate, trying iterative path")
    if f.operator is None:
        raise NotImplementedError(
            f"bifunction {f.name!r} has no operator form and no applicable closed-form resolvent"
        )
    Gf = f.operator
    lam = f.lipschitz
    if lam is None:
        S = C.sample(rng, 16)
        lam = _lipschitz_estimate(
            zip(S[:8], S[8:]),
            lambda a, b: space.norm(Gf(space.J(a)) - Gf(space.J(b))),
            lambda a, b: space.norm(a - b),
        )
    tau = 0.5 / (1.0 / r + lam)

    def F(z):
        return Gf(space.J(z)) + (z - x) / r

    def prox(z, t, g):
        return retract(space, z - t * g, C, settings)

    def dist(a, b, dual=False):
        return space.norm(a - b)

    z, its = _extragradient(F, prox, dist, retract(space, x, C, settings), tau, settings)
    cert = eq_certificate(space, f, r, x, z, C, settings, extra)
    log.debug("EP resolvent: %d extragradient steps, certificate %.2e", its, cert.worst_violation)
    if not cert.passed:
        raise NonconvergedInnerSolve(f"EP resolvent certificate failed ({cert.worst_violation:.3e})", z, cert)
    return z, cert


def without_closed_forms(obj):
    """Copy of an operator or bifunction with its closed-form resolvent removed."""
    return replace(obj, closed_form_resolvent=None)
