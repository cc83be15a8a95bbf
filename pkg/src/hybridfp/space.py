"""Finite-dimensional Hilbert and l_p backends.

A :class:`SpaceDescriptor` owns every geometric primitive the solvers need:
norms on E and E*, the duality pairing, the normalized duality map ``J``
and its inverse ``J*``, and the Lyapunov functionals ``phi`` and ``phi*``.

Points of E and E* are plain 1-d float64 arrays; which space a vector
lives in is determined by the method it is passed to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when a vector does not match the dimension of its space."""


@dataclass(frozen=True)
class SpaceDescriptor:
    """Geometry of E = R^dim with either the Euclidean or the l_p norm.

    Args:
        dim: Dimension of the space.
        p: Exponent of the norm on E. Ignored (forced to 2) for Hilbert.
        hilbert: If True the space is Euclidean and ``J`` is the identity.
    """

    dim: int
    p: float = 2.0
    hilbert: bool = False

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if self.hilbert:
            object.__setattr__(self, "p", 2.0)
        p = float(self.p)
        if not np.isfinite(p) or p <= 1.0:
            raise ValueError(f"p must lie in (1, inf), got {self.p!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def q(self) -> float:
        """Conjugate exponent, 1/p + 1/q = 1."""
        return self.p / (self.p - 1.0)

    @property
    def name(self) -> str:
        return f"hilbert(d={self.dim})" if self.hilbert else f"lp(p={self.p:g}, d={self.dim})"

    # -- validation -------------------------------------------------------

    def check(self, x) -> np.ndarray:
        """Return ``x`` as a float64 array after dimension and finiteness checks."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionError(f"expected shape ({self.dim},) for {self.name}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("vector has non-finite entries")
        return x

    # -- norms and pairing ------------------------------------------------

    def norm(self, x) -> float:
        x = self.check(x)
        return _pnorm(x, self.p)

    def dual_norm(self, w) -> float:
        w = self.check(w)
        return _pnorm(w, self.q)

    def pair(self, x, w) -> float:
        """Duality pairing <x, w> for x in E and w in E*."""
        return float(np.dot(self.check(x), self.check(w)))

    # -- duality maps -----------------------------------------------------

    def duality_map(self, x) -> np.ndarray:
        """Normalized duality map J: E -> E*. J(0) = 0."""
        x = self.check(x)
        if self.hilbert or self.p == 2.0:
            return x.copy()
        return _lp_duality(x, self.p)

    def inverse_duality_map(self, w) -> np.ndarray:
        """J* = J^{-1}: E* -> E, the duality map of the dual norm."""
        w = self.check(w)
        if self.hilbert or self.p == 2.0:
            return w.copy()
        return _lp_duality(w, self.q)

    J = duality_map
    J_inv = inverse_duality_map

    def duality_jacobian(self, x) -> np.ndarray:
        """Derivative of J at x (Hessian of 0.5*||x||_p^2).

        Bounded for p >= 2; for p < 2 the diagonal blows up at zero
        coordinates. At x = 0 the derivative does not exist and the
        identity scaled by (p - 1) is returned.
        """
        x = self.check(x)
        return _lp_hessian(x, self.p)

    def inverse_duality_jacobian(self, w) -> np.ndarray:
        """Derivative of J* at w (Hessian of 0.5*||w||_q^2)."""
        w = self.check(w)
        return _lp_hessian(w, self.q)

    # -- Lyapunov functionals ---------------------------------------------

    def lyapunov(self, x, y) -> float:
        """phi(x, y) = ||x||^2 - 2<x, Jy> + ||y||^2."""
        x = self.check(x)
        y = self.check(y)
        if self.hilbert or self.p == 2.0:
            d = x - y
            return float(np.dot(d, d))
        nx = _pnorm(x, self.p)
        ny = _pnorm(y, self.p)
        val = nx * nx - 2.0 * float(np.dot(x, _lp_duality(y, self.p))) + ny * ny
        return max(val, 0.0)

    def dual_lyapunov(self, w, v) -> float:
        """phi*(w, v) = ||w||*^2 - 2<J*v, w> + ||v||*^2 on E*."""
        w = self.check(w)
        v = self.check(v)
        if self.hilbert or self.p == 2.0:
            d = w - v
            return float(np.dot(d, d))
        nw = _pnorm(w, self.q)
        nv = _pnorm(v, self.q)
        val = nw * nw - 2.0 * float(np.dot(_lp_duality(v, self.q), w)) + nv * nv
        return max(val, 0.0)


def hilbert(dim: int) -> SpaceDescriptor:
    return SpaceDescriptor(dim=dim, hilbert=True)


def lp(dim: int, p: float) -> SpaceDescriptor:
    return SpaceDescriptor(dim=dim, p=p)


def _pnorm(x: np.ndarray, p: float) -> float:
    if p == 2.0:
        return float(np.linalg.norm(x))
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    if scale == 0.0:
        return 0.0
    # rescale to avoid overflow in |x|^p
    return scale * float(np.sum(np.abs(x / scale) ** p) ** (1.0 / p))


def _lp_duality(x: np.ndarray, p: float) -> np.ndarray:
    n = _pnorm(x, p)
    if n == 0.0:
        return np.zeros_like(x)
    # w_i = ||x||^{2-p} |x_i|^{p-1} sign(x_i), written as ||x|| * |x_i/||x|||^{p-1}
    t = x / n
    return n * np.sign(t) * np.abs(t) ** (p - 1.0)


def _lp_hessian(x: np.ndarray, p: float) -> np.ndarray:
    d = x.size
    if p == 2.0:
        return np.eye(d)
    n = _pnorm(x, p)
    if n == 0.0:
        return (p - 1.0) * np.eye(d)
    t = np.abs(x / n)
    with np.errstate(divide="ignore"):
        diag = (p - 1.0) * t ** (p - 2.0)
    g = _lp_duality(x, p) / n
    return np.diag(diag) + (2.0 - p) * np.outer(g, g)
