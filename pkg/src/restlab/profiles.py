"""Smooth density profiles with exact derivative oracles.

Polynomials are stored as ``{multi_index: coefficient}`` dictionaries so
presets can differentiate them exactly to any order.  Test densities are
polynomials times a piecewise-polynomial bump of configurable smoothness,
which keeps first and second derivatives in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

__all__ = [
    "poly_eval",
    "poly_diff",
    "poly_partial",
    "BumpPolyProfile",
    "random_profile",
]

Poly = Dict[Tuple[int, ...], complex]


def poly_eval(coeffs: Poly, pts: np.ndarray) -> np.ndarray:
    """Evaluate a coefficient-dictionary polynomial on points (..., dim)."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    out = np.zeros(pts.shape[:-1], dtype=complex)
    for alpha, c in coeffs.items():
        term = np.ones(pts.shape[:-1])
        for d, e in enumerate(alpha):
            if e:
                term = term * pts[..., d] ** e
        out = out + c * term
    return out


def poly_diff(coeffs: Poly, axis: int) -> Poly:
    """Differentiate a coefficient dictionary along one axis."""
    out: Poly = {}
    for alpha, c in coeffs.items():
        e = alpha[axis]
        if e == 0:
            continue
        beta = tuple(a - 1 if d == axis else a for d, a in enumerate(alpha))
        out[beta] = out.get(beta, 0.0) + c * e
    return out


def poly_partial(coeffs: Poly, alpha: Tuple[int, ...]) -> Poly:
    """Repeated differentiation for a multi-index."""
    out = coeffs
    for axis, reps in enumerate(alpha):
        for _ in range(reps):
            out = poly_diff(out, axis)
            if not out:
                return {}
    return out


@dataclass(frozen=True)
class BumpPolyProfile:
    """P(xi) times a separable bump ((1-u^2)_+)^s per axis, u = (xi-a)/w.

    ``exponent`` >= 3 keeps the profile twice continuously differentiable;
    values and the first two derivatives along any axis are exact.  The
    support box is the product of [a - w, a + w].
    """

    center: np.ndarray
    halfwidth: np.ndarray
    exponent: int = 6
    poly: Poly = field(default_factory=lambda: {(): 1.0})

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        w = np.atleast_1d(np.asarray(self.halfwidth, dtype=float))
        if w.shape != c.shape or np.any(w <= 0):
            raise ValueError("halfwidths must be positive and match the center")
        if self.exponent < 3:
            raise ValueError("exponent must be at least 3 for two derivatives")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "halfwidth", w)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def support_lo(self) -> np.ndarray:
        return self.center - self.halfwidth

    @property
    def support_hi(self) -> np.ndarray:
        return self.center + self.halfwidth

    def _u(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        return (pts - self.center) / self.halfwidth

    def value(self, pts: np.ndarray) -> np.ndarray:
        u = self._u(pts)
        inside = np.all(np.abs(u) < 1.0, axis=-1)
        g = np.prod(np.maximum(1.0 - u * u, 0.0) ** self.exponent, axis=-1)
        out = poly_eval(self.poly, np.atleast_2d(np.asarray(pts, dtype=float))) * g
        return np.where(inside, out, 0.0)

    def deriv(self, pts: np.ndarray, axis: int) -> np.ndarray:
        s = self.exponent
        u = self._u(pts)
        inside = np.all(np.abs(u) < 1.0, axis=-1)
        base = np.maximum(1.0 - u * u, 0.0)
        other = np.prod(np.delete(base, axis, -1) ** s, axis=-1)
        ua = u[..., axis]
        ba = base[..., axis]
        w = self.halfwidth[axis]
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        p_val = poly_eval(self.poly, pts2)
        dp_val = poly_eval(poly_diff(self.poly, axis), pts2)
        # d/dxi [P * b^s] = (P' b - 2 s u / w P) b^(s-1), per-axis factor b.
        out = (dp_val * ba - (2.0 * s * ua / w) * p_val) * ba ** (s - 1) * other
        return np.where(inside, out, 0.0)

    def deriv2(self, pts: np.ndarray, axis: int) -> np.ndarray:
        s = self.exponent
        u = self._u(pts)
        inside = np.all(np.abs(u) < 1.0, axis=-1)
        base = np.maximum(1.0 - u * u, 0.0)
        other = np.prod(np.delete(base, axis, -1) ** s, axis=-1)
        ua = u[..., axis]
        ba = base[..., axis]
        w = self.halfwidth[axis]
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        d0 = self.poly
        d1 = poly_diff(d0, axis)
        d2 = poly_diff(d1, axis)
        p = poly_eval(d0, pts2)
        dp = poly_eval(d1, pts2)
        ddp = poly_eval(d2, pts2)
        g1 = -2.0 * s * ua / w * ba ** (s - 1)
        g2 = (-2.0 * s / w**2) * ba ** (s - 2) * (ba - 2.0 * (s - 1) * ua * ua)
        out = (ddp * ba**s + 2.0 * dp * g1 + p * g2) * other
        return np.where(inside, out, 0.0)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.value(pts)


def random_profile(
    box_lo: np.ndarray,
    box_hi: np.ndarray,
    seed: int,
    degree: int = 3,
    exponent: int = 6,
    margin: float = 0.9,
) -> BumpPolyProfile:
    """Random complex polynomial times a bump filling ``margin`` of the box."""
    lo = np.atleast_1d(np.asarray(box_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(box_hi, dtype=float))
    rng = np.random.default_rng(seed)
    dim = lo.size
    center = 0.5 * (lo + hi)
    halfwidth = margin * 0.5 * (hi - lo)
    poly: Poly = {}
    # Scale monomials so all degrees contribute comparably on the support.
    for alpha in _multi_indices(dim, degree):
        scale = np.prod(halfwidth ** np.array(alpha))
        c = (rng.standard_normal() + 1j * rng.standard_normal()) / max(scale, 1e-300)
        poly[alpha] = c
    poly[(0,) * dim] = poly.get((0,) * dim, 0.0) + 3.0
    return BumpPolyProfile(center=center, halfwidth=halfwidth, exponent=exponent, poly=poly)


def _multi_indices(dim: int, max_degree: int):
    import itertools

    for total in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            alpha = [0] * dim
            for c in combo:
                alpha[c] += 1
            yield tuple(alpha)
