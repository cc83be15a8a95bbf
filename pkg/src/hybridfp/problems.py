"""Problem ingredients and built-in test problems.

A :class:`ProblemInstance` bundles a feasible set ``C``, a finite family of
monotone operators ``A_k : C -> E*``, a finite family of bifunctions
``f_l : JC x JC -> R`` and a countable family of maps ``T_n : C -> E*``
together with its limit family. :func:`verify_problem` runs sampled checks
of the standing assumptions on an instance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .sets import Ball, Box
from .space import SpaceDescriptor, hilbert, lp

log = logging.getLogger(__name__)

Vector = np.ndarray


class DegenerateFamilyError(ValueError):
    """Raised when cycling over an empty family."""


@dataclass(frozen=True)
class MonotoneOperator:
    """A continuous monotone map A: C -> E*.

    ``closed_form_resolvent(x, r, C)`` may return the resolvent point or
    None when the closed form does not apply at that input. ``lipschitz``
    is an optional bound on ||A(a) - A(b)||_* / ||Ja - Jb||_*.
    """

    evaluate: Callable[[Vector], Vector]
    name: str = "operator"
    closed_form_resolvent: Optional[Callable] = None
    lipschitz: Optional[float] = None

    def __call__(self, x):
        return self.evaluate(x)


@dataclass(frozen=True)
class Bifunction:
    """A bifunction f(w, w') on JC x JC.

    When ``operator`` is given the bifunction has the form
    f(w, w') = <G(w), w' - w> with G: E* -> E, which lets the generic
    resolvent solver handle it.
    """

    evaluate: Callable[[Vector, Vector], float]
    name: str = "bifunction"
    operator: Optional[Callable[[Vector], Vector]] = None
    closed_form_resolvent: Optional[Callable] = None
    lipschitz: Optional[float] = None

    def __call__(self, w, w2):
        return self.evaluate(w, w2)


@dataclass(frozen=True)
class MapFamily:
    """Maps T_n: C -> E* (n >= 1) with limit family Gamma.

    ``nst_constant`` is the factor kappa in the finite-sample NST proxy
    ||Jx - T_n x||_* >= kappa ||Jx - T x||_* checked by :func:`verify_problem`.
    """

    member: Callable[[int, Vector], Vector]
    limit_family: tuple = ()
    known_j_fixed_points: tuple = ()
    name: str = "maps"
    nst_constant: float = 0.5

    def __call__(self, n, x):
        return self.member(n, x)


@dataclass(frozen=True)
class ProblemInstance:
    space: SpaceDescriptor
    C: Ball | Box
    operators: tuple = ()
    bifunctions: tuple = ()
    maps: MapFamily = None
    known_common_solutions: tuple = ()
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "bifunctions", tuple(self.bifunctions))
        object.__setattr__(
            self,
            "known_common_solutions",
            tuple(self.space.check(u) for u in self.known_common_solutions),
        )
        if self.maps is None:
            object.__setattr__(self, "maps", identity_family(self.space))
        if isinstance(self.C, Ball) and self.C.space != self.space:
            raise ValueError("feasible set and instance live in different spaces")


def cyclic_operator_index(n: int, N: int) -> int:
    """One-based cyclic index ((n - 1) mod N) + 1."""
    if N < 1:
        raise DegenerateFamilyError("cannot cycle over an empty family")
    if n < 1:
        raise ValueError(f"iteration index must be >= 1, got {n}")
    return (n - 1) % N + 1


def identity_family(space: SpaceDescriptor) -> MapFamily:
    """T_n = J for every n; every point is a J-fixed point."""
    J = space.duality_map
    return MapFamily(
        member=lambda n, x: J(x),
        limit_family=(J,),
        known_j_fixed_points=(np.zeros(space.dim),),
        name="identity",
    )


def _radial(space, C, v):
    # both the retraction and the generalized projection onto a centred
    # norm ball are radial shrinkage
    nv = space.norm(v)
    if nv <= C.radius:
        return np.array(v, dtype=float)
    return v * (C.radius / nv)


def duality_operator(space: SpaceDescriptor, scale: float = 1.0) -> MonotoneOperator:
    """A(x) = scale * J(x); monotone for scale >= 0.

    Its resolvent on a centred ball is the shrinkage of x / (1 + scale*r).
    """
    J = space.duality_map
    return MonotoneOperator(
        evaluate=lambda x: scale * J(x),
        name=f"{scale:g}*J" if scale != 1.0 else "J",
        closed_form_resolvent=_scaled_ball_resolvent(space, scale) if scale >= 0 else None,
        lipschitz=abs(scale),
    )


def inverse_duality_bifunction(space: SpaceDescriptor, scale: float = 1.0) -> Bifunction:
    """f(w, w') = scale * <J*w, w' - w>.

    ``scale = 1`` is the orientation satisfying (A2); ``scale = -1`` gives
    f(w, w') + f(w', w) = <J*w - J*w', w - w'> >= 0, a deliberate negative
    control.
    """
    Jinv = space.inverse_duality_map
    return Bifunction(
        evaluate=lambda w, w2: scale * space.pair(Jinv(w), np.asarray(w2) - w),
        name=f"{scale:g}*<J*w, w'-w>",
        operator=lambda w: scale * Jinv(w),
        closed_form_resolvent=_scaled_ball_resolvent(space, scale) if scale >= 0 else None,
        lipschitz=abs(scale),
    )


def _scaled_ball_resolvent(space, scale):
    def resolvent(x, r, C):
        if not (isinstance(C, Ball) and C.centered and C.space == space):
            return None
        return _radial(space, C, np.asarray(x) / (1.0 + scale * r))

    return resolvent


def shift_family(space: SpaceDescriptor, alpha_rule: Callable[[int], float]) -> MapFamily:
    """T x = J(0, x_1, ..., x_{d-1}) and T_n = a_n J + (1 - a_n) T."""
    J = space.duality_map

    def shift(x):
        s = np.zeros(space.dim)
        s[1:] = np.asarray(x)[:-1]
        return s

    def T(x):
        return J(shift(x))

    def member(n, x):
        a = alpha_rule(n)
        return a * J(x) + (1.0 - a) * T(x)

    return MapFamily(
        member=member,
        limit_family=(T,),
        known_j_fixed_points=(np.zeros(space.dim),),
        name="truncated-shift",
        nst_constant=0.5,
    )


def default_alpha_rule(n: int) -> float:
    return 1.0 / (n + 2.0)


def _check_alpha_rule(alpha_rule, checked=1000):
    for n in range(1, checked + 1):
        a = alpha_rule(n)
        if not (0.0 < a < 1.0) or 1.0 - a < 0.5:
            raise ValueError(f"alpha_rule({n}) = {a!r} violates 0 < a < 1, 1 - a >= 1/2")


def example_problem(p: float, d: int, alpha_rule: Callable[[int], float] | None = None) -> ProblemInstance:
    """The l_p example truncated to d coordinates.

    C is the unit ball of l_p^d, A = J, f(w, w') = <J*w, w' - w>,
    T = J o shift and T_n = a_n J + (1 - a_n) T. The origin is the unique
    common solution.
    """
    if not (1.0 < p < np.inf):
        raise ValueError(f"p must lie in (1, inf), got {p!r}")
    if int(d) != d or d < 2:
        raise ValueError(f"d must be an integer >= 2, got {d!r}")
    alpha_rule = alpha_rule or default_alpha_rule
    _check_alpha_rule(alpha_rule)
    space = lp(int(d), p)
    return ProblemInstance(
        space=space,
        C=Ball(space, np.zeros(space.dim), 1.0),
        operators=(duality_operator(space),),
        bifunctions=(inverse_duality_bifunction(space),),
        maps=shift_family(space, alpha_rule),
        known_common_solutions=(np.zeros(space.dim),),
        name=f"lp-example(p={p:g}, d={d})",
    )


def affine_operator(space: SpaceDescriptor, M, c) -> MonotoneOperator:
    """A(x) = M x + c with M positive semidefinite.

    The closed-form resolvent (I + rM)^{-1}(x - rc) is only offered on
    Hilbert-like spaces (p = 2) and only when it lands in the interior of C.
    """
    M = np.asarray(M, dtype=float)
    c = space.check(np.asarray(c, dtype=float))
    if M.shape != (space.dim, space.dim):
        raise ValueError(f"M must be {space.dim}x{space.dim}")
    sym = 0.5 * (M + M.T)
    lam_min = float(np.min(np.linalg.eigvalsh(sym)))
    if lam_min < -1e-12 * max(1.0, float(np.max(np.abs(sym)))):
        raise ValueError(f"M is not positive semidefinite (min eigenvalue {lam_min:.3g})")

    def resolvent(x, r, C):
        if space.p != 2.0:
            return None
        z = np.linalg.solve(np.eye(space.dim) + r * M, np.asarray(x) - r * c)
        return z if C.slack(z) > 0 else None

    return MonotoneOperator(
        evaluate=lambda x: M @ np.asarray(x) + c,
        name="affine",
        closed_form_resolvent=resolvent,
        lipschitz=float(np.linalg.norm(M, 2)) if space.p == 2.0 else None,
    )


def hilbert_affine_vi_problem(M, c, C, space: SpaceDescriptor | None = None) -> ProblemInstance:
    """Affine VI test problem: A(x) = Mx + c, no bifunctions, T_n = J.

    ``space`` defaults to the Hilbert backend of matching dimension; pass
    ``lp(d, 2)`` to run the same instance through the l_p code path.
    """
    M = np.asarray(M, dtype=float)
    space = space or hilbert(M.shape[0])
    if isinstance(C, Ball) and C.space != space:
        C = Ball(space, C.center, C.radius)
    c = np.asarray(c, dtype=float)
    known = ()
    if not np.any(c) and C.contains(np.zeros(space.dim)):
        known = (np.zeros(space.dim),)
    return ProblemInstance(
        space=space,
        C=C,
        operators=(affine_operator(space, M, c),),
        bifunctions=(),
        maps=identity_family(space),
        known_common_solutions=known,
        name=f"hilbert-affine-vi(d={space.dim})",
    )


def random_psd(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    B = rng.normal(size=(d, d))
    return scale * (B @ B.T) / d


def builtin_problem(name: str, **params) -> ProblemInstance:
    """Construct a built-in problem by name.

    ``lp-example`` takes p, d; ``hilbert-affine-vi`` takes d, seed,
    radius and ``geometry`` ("hilbert" or "lp2").
    """
    if name == "lp-example":
        return example_problem(float(params.get("p", 2.0)), int(params.get("d", 8)))
    if name == "hilbert-affine-vi":
        d = int(params.get("d", 4))
        rng = np.random.default_rng(int(params.get("seed", 0)))
        space = lp(d, 2.0) if params.get("geometry", "hilbert") == "lp2" else hilbert(d)
        C = Ball(space, np.zeros(d), float(params.get("radius", 10.0)))
        return hilbert_affine_vi_problem(random_psd(d, rng), np.zeros(d), C, space=space)
    raise KeyError(f"unknown built-in problem {name!r}")


# -- sampled verification ------------------------------------------------------


@dataclass
class PropertyCheck:
    """Outcome of one sampled property; ``worst_violation`` > tolerance fails."""

    name: str
    worst_violation: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(self.worst_violation <= self.tolerance)


@dataclass
class VerificationReport:
    instance: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.checks]

    def lines(self):
        return [
            f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst violation {c.worst_violation:.3e} "
            f"(tol {c.tolerance:.0e}, {c.samples} samples)"
            for c in self.checks
        ]


def verify_problem(instance: ProblemInstance, samples: int = 1000, rng_seed: int = 0) -> VerificationReport:
    """Sampled checks of monotonicity, (A1), (A2), (A4) and the map-family
    assumptions, plus membership certificates for the known solutions."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    S = instance.space
    rng = np.random.default_rng(rng_seed)
    X = instance.C.sample(rng, samples)
    Y = instance.C.sample(rng, samples)
    Z = instance.C.sample(rng, samples)
    report = VerificationReport(instance.name)
    add = report.checks.append

    for k, A in enumerate(instance.operators, start=1):
        worst = max(-S.pair(x - y, A(x) - A(y)) for x, y in zip(X, Y))
        add(PropertyCheck(f"operator[{k}] monotone", worst, 1e-10, samples))

    for l, f in enumerate(instance.bifunctions, start=1):
        W = [S.J(x) for x in X]
        W2 = [S.J(y) for y in Y]
        W3 = [S.J(z) for z in Z]
        worst = max(abs(f(w, w)) for w in W)
        add(PropertyCheck(f"bifunction[{l}] (A1) f(w,w)=0", worst, 1e-12, samples))
        worst = max(f(a, b) + f(b, a) for a, b in zip(W, W2))
        add(PropertyCheck(f"bifunction[{l}] (A2) monotone", worst, 1e-10, samples))
        worst = max(f(a, 0.5 * (b + c)) - 0.5 * (f(a, b) + f(a, c)) for a, b, c in zip(W, W2, W3))
        add(PropertyCheck(f"bifunction[{l}] (A4) convex in 2nd arg", worst, 1e-10, samples))

    fam = instance.maps
    fixed = [S.check(p) for p in fam.known_j_fixed_points]
    if fixed:
        worst = max(S.dual_norm(T(p) - S.J(p)) for T in fam.limit_family for p in fixed)
        add(PropertyCheck("maps: J-fixed points of limit family", worst, 1e-10, len(fixed)))
        ns = rng.integers(1, 10 * samples + 1, size=samples)
        worst = max(
            S.lyapunov(p, S.J_inv(fam(int(n), x))) - S.lyapunov(p, x) for p in fixed for n, x in zip(ns, X)
        )
        add(PropertyCheck("maps: generalized J*-nonexpansive", worst, 1e-10, samples * len(fixed)))
    ns = rng.integers(1, 10 * samples + 1, size=samples)
    worst = -np.inf
    for T in fam.limit_family:
        for n, x in zip(ns, X):
            Jx = S.J(x)
            worst = max(worst, fam.nst_constant * S.dual_norm(Jx - T(x)) - S.dual_norm(Jx - fam(int(n), x)))
    if fam.limit_family:
        add(PropertyCheck("maps: NST proxy", worst, 1e-10, samples * len(fam.limit_family)))

    for i, u in enumerate(instance.known_common_solutions):
        tag = f"solution[{i}]"
        add(PropertyCheck(f"{tag} in C", -instance.C.slack(u), 1e-12, 1))
        if fam.limit_family:
            worst = max(S.dual_norm(T(u) - S.J(u)) for T in fam.limit_family)
            add(PropertyCheck(f"{tag} J-fixed residual", worst, 1e-10, len(fam.limit_family)))
        for k, A in enumerate(instance.operators, start=1):
            Au = A(u)
            worst = max(-S.pair(y - u, Au) for y in Y)
            add(PropertyCheck(f"{tag} VI[{k}] residual", worst, 1e-10, samples))
        for l, f in enumerate(instance.bifunctions, start=1):
            Ju = S.J(u)
            worst = max(-f(Ju, S.J(y)) for y in Y)
            add(PropertyCheck(f"{tag} EP[{l}] residual", worst, 1e-10, samples))

    for line in report.lines():
        log.debug(line)
    return report
