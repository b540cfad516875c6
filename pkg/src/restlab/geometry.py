"""Graph-parametrized hypersurface patches and transversal families.

Surfaces are graphs ``xi_i = phi(xi')`` over an axis-aligned box in the
hyperplane orthogonal to a chosen coordinate axis.  Lower-dimensional
submanifolds of a patch domain are graphs as well, over the leading block
of domain coordinates.  Everything here is plain numpy; objects are frozen
and safe to share across worker threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.stats import qmc

__all__ = [
    "Box",
    "HypersurfacePatch",
    "SubmanifoldSpec",
    "TransversalFamily",
    "OrthogonalizedFrame",
    "wedge_norm",
    "normal_space",
    "check_transversality",
    "orthogonalize_normals",
    "finite_type_order",
    "neighborhood_contains",
    "submanifold_distance",
    "unit_sphere_grid",
]

# Default tolerances.  TAU_TYPE is relative to the patch smoothness bound.
ORTHO_TOL = 1e-12
TAU_TYPE = 1e-8
GN_TOL = 1e-10
GN_MAX_ITER = 50


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box given by per-axis bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(hi < lo):
            raise ValueError("box needs hi >= lo on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, pts: np.ndarray, pad: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lo - pad) & (pts <= self.hi + pad), axis=-1)

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance from points to the box."""
        pts = np.asarray(pts, dtype=float)
        excess = np.maximum(np.maximum(self.lo - pts, pts - self.hi), 0.0)
        return np.linalg.norm(excess, axis=-1)

    def clip(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(pts, dtype=float), self.lo, self.hi)

    def sample_points(self, count: int) -> np.ndarray:
        """Deterministic sample set: box center, then unscrambled Halton.

        Sample sets are nested as ``count`` grows, so any minimum taken
        over them is non-increasing in the sample density.
        """
        if count < 1:
            raise ValueError("need at least one sample point")
        pts = [self.center]
        if count > 1:
            halton = qmc.Halton(d=self.dim, scramble=False)
            halton.fast_forward(1)  # skip the corner point at the origin
            unit = halton.random(count - 1)
            pts.append(self.lo + unit * (self.hi - self.lo))
        return np.vstack([np.atleast_2d(p) for p in pts])

    def uniform_grid(self, per_axis: int) -> np.ndarray:
        """Tensor grid including endpoints, flattened to (per_axis**dim, dim)."""
        axes = [np.linspace(self.lo[d], self.hi[d], per_axis) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _as_points(pts: np.ndarray, dim: int) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != dim:
        raise ValueError(f"expected points in R^{dim}, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class HypersurfacePatch:
    """Graph patch ``xi_normal_axis = phi(xi')`` over ``domain``.

    ``phi``/``phi_grad``/``phi_hess`` are vectorized callables on arrays of
    shape (..., dim_domain).  ``phi_partial`` optionally supplies exact
    higher-order partial derivatives ``(alpha, pts) -> array`` and is
    required by :func:`finite_type_order` beyond order two.
    """

    dim_ambient: int
    domain: Box
    phi: Callable[[np.ndarray], np.ndarray]
    phi_grad: Callable[[np.ndarray], np.ndarray]
    phi_hess: Callable[[np.ndarray], np.ndarray]
    normal_axis: int
    smooth_bound: float = 1.0
    phi_partial: Optional[Callable[[tuple, np.ndarray], np.ndarray]] = None
    delta_geom: float = 0.25
    flat: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        n = self.dim_ambient
        if n < 2:
            raise ValueError("ambient dimension must be at least 2")
        if self.domain.dim != n - 1:
            raise ValueError("domain dimension must be dim_ambient - 1")
        if not 0 <= self.normal_axis < n:
            raise ValueError("normal_axis out of range")
        if self.domain.diameter > self.delta_geom + 1e-12:
            raise ValueError(
                f"domain diameter {self.domain.diameter:.4g} exceeds the "
                f"configured small-diameter bound {self.delta_geom:.4g}"
            )
        origin = np.zeros(n - 1)
        if not bool(self.domain.contains(origin)):
            raise ValueError("domain must contain the origin (normalized patch)")
        if abs(float(np.asarray(self.phi(origin)))) > 1e-12:
            raise ValueError("patch not normalized: phi(0) != 0")
        if float(np.max(np.abs(self.phi_grad(origin)))) > 1e-12:
            raise ValueError("patch not normalized: grad phi(0) != 0")
        grid = self.domain.uniform_grid(5 if n - 1 <= 3 else 3)
        slopes = np.linalg.norm(np.atleast_2d(self.phi_grad(grid)), axis=-1)
        if float(np.max(slopes)) > self.delta_geom + 1e-12:
            raise ValueError("patch slope exceeds the small-slope bound on the domain")

    @property
    def dim_domain(self) -> int:
        return self.dim_ambient - 1

    @property
    def slice_axes(self) -> tuple:
        """Ambient axes spanned by the graph domain, in increasing order."""
        return tuple(a for a in range(self.dim_ambient) if a != self.normal_axis)

    def embed(self, pts: np.ndarray) -> np.ndarray:
        """Map domain points to ambient surface points."""
        pts = _as_points(pts, self.dim_domain)
        out = np.empty(pts.shape[:-1] + (self.dim_ambient,))
        out[..., list(self.slice_axes)] = pts
        out[..., self.normal_axis] = np.asarray(self.phi(pts))
        return out

    def unit_normal(self, pts: np.ndarray) -> np.ndarray:
        """Unit normal field, oriented toward positive ``normal_axis``."""
        pts = _as_points(pts, self.dim_domain)
        grad = np.atleast_2d(self.phi_grad(pts))
        out = np.empty(pts.shape[:-1] + (self.dim_ambient,))
        out[..., list(self.slice_axes)] = -grad
        out[..., self.normal_axis] = 1.0
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def tangent_frame(self, pts: np.ndarray) -> np.ndarray:
        """Tangent vectors d(embed)/d(xi'_j), shape (..., dim_domain, dim_ambient)."""
        pts = _as_points(pts, self.dim_domain)
        grad = np.atleast_2d(self.phi_grad(pts))
        out = np.zeros(pts.shape[:-1] + (self.dim_domain, self.dim_ambient))
        for j, axis in enumerate(self.slice_axes):
            out[..., j, axis] = 1.0
        out[..., :, self.normal_axis] = grad
        return out

    def partial(self, alpha: Sequence[int], pts: np.ndarray) -> np.ndarray:
        """Partial derivative of phi for a multi-index, exact orders 1..2 built in."""
        alpha = tuple(int(a) for a in alpha)
        order = sum(alpha)
        pts = _as_points(pts, self.dim_domain)
        if order == 0:
            return np.asarray(self.phi(pts))
        if order == 1:
            axis = alpha.index(1)
            return np.atleast_2d(self.phi_grad(pts))[..., axis]
        if order == 2:
            hess = np.asarray(self.phi_hess(pts))
            if hess.ndim == 2:
                hess = hess[None, :, :]
            nz = [d for d, a in enumerate(alpha) if a > 0]
            if len(nz) == 1:
                return hess[..., nz[0], nz[0]]
            return hess[..., nz[0], nz[1]]
        if self.phi_partial is None:
            raise ValueError(
                "derivative oracle required beyond order 2; construct the patch "
                "with phi_partial (polynomial presets provide it)"
            )
        return np.asarray(self.phi_partial(alpha, pts))


@dataclass(frozen=True)
class SubmanifoldSpec:
    """Codimension-``codim`` graph submanifold of a patch domain.

    The first ``dim_domain - codim`` domain coordinates parametrize the
    manifold; ``graph_map`` fills in the trailing ``codim`` coordinates.
    ``codim = 0`` means the whole domain and ``graph_map`` is ignored.
    """

    patch: HypersurfacePatch
    codim: int
    graph_map: Optional[Callable[[np.ndarray], np.ndarray]] = None
    graph_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mu: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.codim <= self.patch.dim_domain:
            raise ValueError("codim out of range for the patch domain")
        if self.mu < 0:
            raise ValueError("half-width mu must be nonnegative")
        if self.codim > 0:
            if self.graph_map is None:
                raise ValueError("positive codimension needs a graph map")
            origin = np.zeros(self.dim_param)
            val = np.atleast_1d(np.asarray(self.graph_map(origin), dtype=float))
            if val.shape[-1] != self.codim:
                raise ValueError("graph map must produce codim values")
            if float(np.max(np.abs(val))) > 1e-12:
                raise ValueError("submanifold not normalized: graph_map(0) != 0")

    @property
    def dim_param(self) -> int:
        return self.patch.dim_domain - self.codim

    @property
    def param_box(self) -> Box:
        dom = self.patch.domain
        m = self.dim_param
        return Box(dom.lo[:m], dom.hi[:m])

    def graph_values(self, u: np.ndarray) -> np.ndarray:
        u = _as_points(u, self.dim_param)
        if self.codim == 0:
            return np.zeros(u.shape[:-1] + (0,))
        return np.atleast_2d(np.asarray(self.graph_map(u), dtype=float)).reshape(
            u.shape[:-1] + (self.codim,)
        )

    def graph_jacobian(self, u: np.ndarray) -> np.ndarray:
        """d(graph_map)/du, shape (..., codim, dim_param); finite differences
        when no jacobian callable was supplied."""
        u = _as_points(u, self.dim_param)
        if self.codim == 0:
            return np.zeros(u.shape[:-1] + (0, self.dim_param))
        if self.graph_jac is not None:
            return np.asarray(self.graph_jac(u), dtype=float).reshape(
                u.shape[:-1] + (self.codim, self.dim_param)
            )
        h = 1e-6
        cols = []
        for j in range(self.dim_param):
            e = np.zeros(self.dim_param)
            e[j] = h
            cols.append((self.graph_values(u + e) - self.graph_values(u - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def embed_param(self, u: np.ndarray) -> np.ndarray:
        """Parameter points -> patch-domain points (xi', Phi(xi''))."""
        u = _as_points(u, self.dim_param)
        if self.codim == 0:
            return u
        return np.concatenate([u, self.graph_values(u)], axis=-1)

    def domain_tangents(self, u: np.ndarray) -> np.ndarray:
        """Tangent vectors of the submanifold inside the patch domain,
        shape (..., dim_param, dim_domain)."""
        u = _as_points(u, self.dim_param)
        m, c = self.dim_param, self.codim
        out = np.zeros(u.shape[:-1] + (m, m + c))
        for j in range(m):
            out[..., j, j] = 1.0
        if c > 0:
            jac = self.graph_jacobian(u)
            out[..., :, m:] = np.swapaxes(jac, -1, -2)
        return out


def wedge_norm(spaces: Sequence[np.ndarray]) -> float:
    """Parallelepiped volume spanned by the union of orthonormal bases.

    Each entry is an array of basis rows in the common ambient space; the
    result is the square root of the Gram determinant of all rows pooled
    together.  Bases must be orthonormal to 1e-12 and the total number of
    vectors must not exceed the ambient dimension.
    """
    mats = [np.atleast_2d(np.asarray(s, dtype=float)) for s in spaces]
    if not mats:
        raise ValueError("need at least one subspace")
    n = mats[0].shape[1]
    for m in mats:
        if m.shape[1] != n:
            raise ValueError("subspace bases live in different ambient dimensions")
        gram = m @ m.T
        if float(np.max(np.abs(gram - np.eye(m.shape[0])))) > ORTHO_TOL * 10:
            raise ValueError("basis rows are not orthonormal to tolerance")
    stacked = np.vstack(mats)
    if stacked.shape[0] > n:
        raise ValueError("total basis size exceeds the ambient dimension")
    gram = stacked @ stacked.T
    det = float(np.linalg.det(gram))
    return math.sqrt(max(det, 0.0))


def _oriented(rows: np.ndarray) -> np.ndarray:
    """Fix the sign of each basis row: largest-magnitude entry positive."""
    rows = np.atleast_2d(rows).copy()
    for r in rows:
        k = int(np.argmax(np.abs(r)))
        if r[k] < 0:
            r *= -1.0
    return rows


def normal_space(spec: SubmanifoldSpec, point: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the normal space of the lifted submanifold.

    ``point`` is a parameter point of the submanifold.  The first row is the
    hypersurface unit normal; the remaining ``codim`` rows complete the
    normal space of the lift inside ambient space.
    """
    u = np.atleast_1d(np.asarray(point, dtype=float))
    patch = spec.patch
    zeta = spec.embed_param(u)[0]
    dom_tan = spec.domain_tangents(u)[0]          # (m, dim_domain)
    surf_frame = patch.tangent_frame(zeta)[0]     # (dim_domain, n)
    lifted = dom_tan @ surf_frame                 # (m, n)
    basis = null_space(lifted) if lifted.size else np.eye(patch.dim_ambient)
    basis = basis.T                               # rows span the normal space
    expected = spec.codim + 1
    if basis.shape[0] != expected:
        raise ValueError("degenerate tangent frame: normal space has wrong dimension")
    n_vec = patch.unit_normal(zeta)[0]
    # Re-orthonormalize with the surface normal as the leading row.
    rows = [n_vec]
    for b in basis:
        v = b.copy()
        for r in rows:
            v -= np.dot(v, r) * r
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            rows.append(v / norm)
        if len(rows) == expected:
            break
    if len(rows) != expected:
        raise ValueError("failed to orthonormalize the normal space basis")
    out = np.vstack(rows)
    if expected > 1:
        out[1:] = _oriented(out[1:])
    return out


def _tuple_min_wedge(frames_per_surface: Sequence[np.ndarray]) -> float:
    """Min wedge norm over all tuples of per-surface frames.

    ``frames_per_surface[i]`` has shape (s_i, d_i, n).
    """
    counts = [f.shape[0] for f in frames_per_surface]
    total = 1
    for c in counts:
        total *= c
    if total > 4_000_000:
        raise ValueError("sample tuple count too large; reduce samples_per_surface")
    best = math.inf
    n = frames_per_surface[0].shape[2]
    for combo in itertools.product(*[range(c) for c in counts]):
        stacked = np.vstack([frames_per_surface[i][j] for i, j in enumerate(combo)])
        gram = stacked @ stacked.T
        det = float(np.linalg.det(gram))
        val = math.sqrt(max(det, 0.0))
        if val < best:
            best = val
    return best


def check_transversality(
    surfaces: Sequence[HypersurfacePatch], samples_per_surface: int = 9
) -> float:
    """Lower bound for the wedge of unit normals over sampled point tuples.

    Samples are the nested deterministic set of :meth:`Box.sample_points`,
    so the estimate is non-increasing in the sample count.
    """
    if not surfaces:
        raise ValueError("need at least one surface")
    n = surfaces[0].dim_ambient
    if any(s.dim_ambient != n for s in surfaces):
        raise ValueError("surfaces live in different ambient dimensions")
    if len(surfaces) > n:
        raise ValueError("more surfaces than ambient dimensions")
    frames = []
    for s in surfaces:
        pts = s.domain.sample_points(samples_per_surface)
        frames.append(s.unit_normal(pts)[:, None, :])
    return _tuple_min_wedge(frames)


@dataclass(frozen=True)
class TransversalFamily:
    """A transversal family of patches with localization submanifolds.

    ``nu`` is the measured transversality lower bound: the minimum wedge
    norm of the pooled normal spaces over sampled tuples of base points.
    """

    surfaces: tuple
    submanifolds: tuple
    nu: float
    samples_per_surface: int = 9

    def __post_init__(self) -> None:
        k = len(self.surfaces)
        if k == 0:
            raise ValueError("empty family")
        n = self.surfaces[0].dim_ambient
        if any(s.dim_ambient != n for s in self.surfaces):
            raise ValueError("mixed ambient dimensions")
        if k > n:
            raise ValueError("family size exceeds ambient dimension")
        if len(self.submanifolds) != k:
            raise ValueError("need one submanifold spec per surface")
        for s, m in zip(self.surfaces, self.submanifolds):
            if m.patch is not s:
                raise ValueError("submanifold specs must reference their surfaces")
        total_codim = sum(m.codim for m in self.submanifolds)
        if total_codim > n - k:
            raise ValueError(
                f"codimension budget violated: sum c_i = {total_codim} > n - k = {n - k}"
            )
        if not self.nu > 0:
            raise ValueError("family rejected: measured transversality is not positive")

    @property
    def dim_ambient(self) -> int:
        return self.surfaces[0].dim_ambient

    @property
    def size(self) -> int:
        return len(self.surfaces)

    @classmethod
    def build(
        cls,
        submanifolds: Sequence[SubmanifoldSpec],
        samples_per_surface: int = 9,
    ) -> "TransversalFamily":
        """Measure ``nu`` over sampled tuples of normal spaces and validate."""
        subs = tuple(submanifolds)
        if not subs:
            raise ValueError("empty family")
        frames = []
        for m in subs:
            pts = m.param_box.sample_points(samples_per_surface)
            frames.append(np.stack([normal_space(m, p) for p in pts]))
        nu = _tuple_min_wedge(frames)
        return cls(
            surfaces=tuple(m.patch for m in subs),
            submanifolds=subs,
            nu=nu,
            samples_per_surface=samples_per_surface,
        )


@dataclass(frozen=True)
class OrthogonalizedFrame:
    """Linear change of coordinates sending normal frames to coordinate axes.

    ``matrix`` is A with A^T e_(i,j) = n_(i,j): the prescribed normal
    vectors are the leading columns of A^T, completed to a basis by
    Gram-Schmidt over the standard axes.  ``axis_of`` maps (surface index,
    frame row) to the assigned coordinate axis.
    """

    matrix: np.ndarray
    axis_of: dict
    norm_bound: float
    kappa_nu: float
    flagged: bool
    frames: tuple

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.matrix.T


def orthogonalize_normals(
    family: TransversalFamily,
    base_points: Optional[Sequence[np.ndarray]] = None,
    flag_threshold: float = 1e8,
) -> OrthogonalizedFrame:
    """Build the frame map A with A^T e_(i,j) = n_(i,j) at base points.

    Surface normals take the leading axes 0..k-1; the extra normal-space
    rows follow in surface order; remaining axes are completed from the
    standard basis.  The conditioning report (||A|| + ||A^-1||) * nu is
    returned and the result is flagged when the norm bound exceeds
    ``flag_threshold``.
    """
    n = family.dim_ambient
    k = family.size
    if base_points is None:
        base_points = [np.zeros(m.dim_param) for m in family.submanifolds]
    frames = [normal_space(m, p) for m, p in zip(family.submanifolds, base_points)]

    prescribed = []
    axis_of = {}
    for i, f in enumerate(frames):
        prescribed.append(f[0])
        axis_of[(i, 0)] = i
    next_axis = k
    for i, f in enumerate(frames):
        for j in range(1, f.shape[0]):
            prescribed.append(f[j])
            axis_of[(i, j)] = next_axis
            next_axis += 1
    pres = np.vstack(prescribed) if prescribed else np.zeros((0, n))
    if pres.shape[0] > n:
        raise ValueError("more normal directions than ambient dimensions")

    # Complete A^T columns: prescribed vectors first, then standard axes
    # orthogonalized against the prescribed span and each other.
    completion = []
    if pres.shape[0] < n:
        q_pres, _ = np.linalg.qr(pres.T) if pres.shape[0] else (np.zeros((n, 0)), None)
        for axis in range(n):
            w = np.zeros(n)
            w[axis] = 1.0
            if q_pres.shape[1]:
                w -= q_pres @ (q_pres.T @ w)
            for c in completion:
                w -= np.dot(w, c) * c
            norm = np.linalg.norm(w)
            if norm > 1e-8:
                completion.append(w / norm)
            if pres.shape[0] + len(completion) == n:
                break
    cols = list(pres) + completion
    if len(cols) != n:
        raise ValueError("failed to complete the normal frames to a basis")
    a_T = np.column_stack(cols)
    a = a_T.T

    svals = np.linalg.svd(a, compute_uv=False)
    norm_bound = float(svals[0] + (1.0 / svals[-1] if svals[-1] > 0 else np.inf))
    return OrthogonalizedFrame(
        matrix=a,
        axis_of=axis_of,
        norm_bound=norm_bound,
        kappa_nu=norm_bound * family.nu,
        flagged=not np.isfinite(norm_bound) or norm_bound > flag_threshold,
        frames=tuple(frames),
    )


def unit_sphere_grid(n: int, count: int) -> np.ndarray:
    """Deterministic direction grid on the unit sphere of R^n.

    Dimension 2 uses equally spaced angles, dimension 3 a Fibonacci
    lattice, higher dimensions a Halton sequence pushed through the
    Gaussian quantile.  Coordinate directions (both signs) are always
    included.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    axes = np.vstack([np.eye(n), -np.eye(n)])
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        theta = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
    elif n == 3:
        golden = (1 + 5 ** 0.5) / 2
        i = np.arange(count)
        z = 1 - 2 * (i + 0.5) / count
        r = np.sqrt(np.maximum(1 - z * z, 0.0))
        phi = 2 * np.pi * i / golden
        pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        from scipy.special import ndtri

        halton = qmc.Halton(d=n, scramble=False)
        halton.fast_forward(1)
        u = np.clip(halton.random(count), 1e-12, 1 - 1e-12)
        g = ndtri(u)
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([axes, pts])


def finite_type_order(
    patch: HypersurfacePatch,
    point: np.ndarray,
    max_order: int,
    tau: float = TAU_TYPE,
    directions: Optional[np.ndarray] = None,
):
    """Smallest order of non-degeneracy of the patch at a domain point.

    Returns the smallest ``l <= max_order`` such that for every sampled
    unit direction some derivative of the pinned embedding pairing of
    order between 1 and ``l`` exceeds ``tau`` relative to the smoothness
    bound; returns the string ``"infinite up to {max_order}"`` when no
    such order exists in the search range.
    """
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    x0 = np.atleast_1d(np.asarray(point, dtype=float))
    n = patch.dim_ambient
    d = patch.dim_domain
    if directions is None:
        directions = unit_sphere_grid(n, 64 * n)
    normal = patch.unit_normal(x0)[0]
    directions = np.vstack([directions, normal])
    threshold = tau * max(patch.smooth_bound, 1e-300)

    # Pairing with a direction eta: sum over slice axes of xi_d eta_(axis d)
    # plus phi(xi) eta_(normal axis).  First-order terms carry the linear
    # part; all higher orders are eta_i times the phi partials.
    grad0 = np.atleast_2d(patch.phi_grad(x0))[0]
    eta_slice = directions[:, list(patch.slice_axes)]
    eta_norm = directions[:, patch.normal_axis]
    first = np.abs(eta_slice + eta_norm[:, None] * grad0[None, :])
    alive = np.max(first, axis=1) <= threshold  # directions still degenerate

    multi_indices_by_order = {}
    for order in range(2, max_order + 1):
        idx = []
        for combo in itertools.combinations_with_replacement(range(d), order):
            alpha = [0] * d
            for c in combo:
                alpha[c] += 1
            idx.append(tuple(alpha))
        multi_indices_by_order[order] = idx

    if np.count_nonzero(alive) == 0:
        return 1
    for order in range(2, max_order + 1):
        vals = []
        for alpha in multi_indices_by_order[order]:
            vals.append(abs(float(np.atleast_1d(patch.partial(alpha, x0))[0])))
        biggest = max(vals) if vals else 0.0
        # eta_i * partial exceeds threshold for an alive direction only if
        # |eta_i| is itself not tiny; all alive directions are near-normal
        # so test each individually.
        still = []
        for di in np.nonzero(alive)[0]:
            e_i = eta_norm[di]
            if abs(e_i) * biggest > threshold:
                continue
            still.append(di)
        new_alive = np.zeros_like(alive)
        new_alive[still] = True
        alive = new_alive
        if np.count_nonzero(alive) == 0:
            return order
    return f"infinite up to {max_order}"


def submanifold_distance(spec: SubmanifoldSpec, points: np.ndarray) -> np.ndarray:
    """Distance from patch-domain points to the submanifold.

    Damped Gauss-Newton on the squared distance, batched over points, with
    multi-start from a coarse parameter grid plus the points' own leading
    coordinates.  Codimension zero reduces to the box distance.
    """
    pts = _as_points(points, spec.patch.dim_domain)
    if spec.codim == 0:
        return spec.patch.domain.distance(pts)
    m = spec.dim_param
    box = spec.param_box
    p_lead = pts[:, :m]
    p_tail = pts[:, m:]

    starts = [box.clip(p_lead)]
    for g in box.uniform_grid(5 if m <= 2 else 3):
        starts.append(np.broadcast_to(g, p_lead.shape).copy())

    best = np.full(pts.shape[0], np.inf)
    for u0 in starts:
        u = u0.copy()
        lam = np.full(pts.shape[0], 1e-3)
        for _ in range(GN_MAX_ITER):
            val = spec.graph_values(u)
            r_lead = u - p_lead
            r_tail = val - p_tail
            f_now = np.sum(r_lead**2, axis=1) + np.sum(r_tail**2, axis=1)
            jac = spec.graph_jacobian(u)  # (P, c, m)
            # Normal equations: (I + J^T J + lam I) du = -(r_lead + J^T r_tail)
            jtj = np.einsum("pcm,pcn->pmn", jac, jac)
            rhs = -(r_lead + np.einsum("pcm,pc->pm", jac, r_tail))
            a_mat = jtj + np.eye(m)[None, :, :] * (1.0 + lam)[:, None, None]
            du = np.linalg.solve(a_mat, rhs[..., None])[..., 0]
            u_new = box.clip(u + du)
            val_new = spec.graph_values(u_new)
            f_new = np.sum((u_new - p_lead) ** 2, axis=1) + np.sum(
                (val_new - p_tail) ** 2, axis=1
            )
            improved = f_new <= f_now
            u = np.where(improved[:, None], u_new, u)
            lam = np.where(improved, np.maximum(lam * 0.5, 1e-12), lam * 4.0)
            if float(np.max(np.abs(du))) < GN_TOL:
                break
        val = spec.graph_values(u)
        dist2 = np.sum((u - p_lead) ** 2, axis=1) + np.sum((val - p_tail) ** 2, axis=1)
        best = np.minimum(best, dist2)
    return np.sqrt(best)


def neighborhood_contains(
    spec: SubmanifoldSpec,
    width: float,
    point: np.ndarray,
    version: str = "metric",
) -> bool:
    """Membership test for the metric or graph neighborhood of width ``width``.

    The metric version asks for Euclidean distance to the submanifold
    below ``width``; the graph version inflates the parameter box by
    ``width`` and allows a sup-norm offset below ``width`` in the graph
    coordinates.
    """
    if width <= 0:
        raise ValueError("neighborhood width must be positive")
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if version == "metric":
        if spec.codim == 0:
            return bool(spec.patch.domain.distance(p) < width)
        return bool(submanifold_distance(spec, p)[0] < width)
    if version == "graph":
        if spec.codim == 0:
            return bool(spec.patch.domain.distance(p) < width)
        m = spec.dim_param
        lead, tail = p[:m], p[m:]
        if not spec.param_box.distance(lead) < width:
            return False
        offset = tail - spec.graph_values(lead[None, :])[0]
        return bool(np.max(np.abs(offset)) < width)
    raise ValueError("version must be 'metric' or 'graph'")
