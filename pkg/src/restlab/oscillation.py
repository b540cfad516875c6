"""Quadrature engine for graph-surface extension waves.

The extension of a density f on the patch domain U is

    Ef(x) = integral_U exp(i (x' . xi + x_i phi(xi))) f(xi) dxi,

with x' the slice coordinates and x_i the graph coordinate.  Densities
carry their tensor quadrature grid; the "uniform" midpoint rule makes
trigonometric sums over matched evaluation grids exactly Parseval-dual
to the node values, which the slice-mass and moment operations exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre

from .geometry import Box, HypersurfacePatch
from .profiles import BumpPolyProfile

__all__ = [
    "ResolutionError",
    "SampledDensity",
    "SampledField",
    "DecayEstimate",
    "KernelProfile",
    "CommutatorReport",
    "make_density",
    "density_from_profile",
    "random_density",
    "weighted_density",
    "evaluate_extension",
    "evaluate_field",
    "field_product",
    "lp_quasinorm",
    "slice_field",
    "slice_mass",
    "boundary_trace",
    "moment_density",
    "commutator_check",
    "geometric_radii",
    "decay_fit",
    "worst_direction_decay",
    "kernel_profile",
    "gradient_densities",
]

TOL_MC = 1e-6
REFERENCE_NODES = 129
MAX_PHASE_BLOCK = 2**22


class ResolutionError(ValueError):
    """Requested evaluation exceeds what the quadrature grid resolves."""

    def __init__(self, message: str, required: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.required = tuple(int(r) for r in required) if required is not None else None


@dataclass(frozen=True)
class SampledDensity:
    """Complex amplitudes on a tensor quadrature grid over the patch domain."""

    patch: HypersurfacePatch
    axes: Tuple[np.ndarray, ...]
    axis_weights: Tuple[np.ndarray, ...]
    values: np.ndarray
    support_box: Box
    rule: str
    profile: Optional[object] = None

    def __post_init__(self) -> None:
        if len(self.axes) != self.patch.dim_domain:
            raise ValueError("axes must match the patch domain dimension")
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {shape}")
        for a in self.axes:
            a.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(grids, axis=-1).reshape(-1, self.patch.dim_domain)

    @property
    def weights(self) -> np.ndarray:
        w = self.axis_weights[0]
        for aw in self.axis_weights[1:]:
            w = np.multiply.outer(w, aw)
        return w.reshape(-1)

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    def l2_norm(self) -> float:
        return math.sqrt(float(np.sum(self.weights * np.abs(self.flat_values) ** 2)))

    def node_spacing(self) -> np.ndarray:
        return np.array(
            [float(np.max(np.diff(a))) if len(a) > 1 else self.patch.domain.widths[d]
             for d, a in enumerate(self.axes)]
        )

    def phi_nodes(self) -> np.ndarray:
        return np.atleast_1d(self.patch.phi(self.nodes)).reshape(self.shape)


def _axis_rule(lo: float, hi: float, count: int, rule: str) -> Tuple[np.ndarray, np.ndarray]:
    if count < 2:
        raise ValueError("need at least 2 nodes per axis")
    if rule == "uniform":
        step = (hi - lo) / count
        nodes = lo + (np.arange(count) + 0.5) * step
        return nodes, np.full(count, step)
    if rule == "gauss":
        if count > 16384:
            raise ValueError(
                "gauss rule is impractical beyond 16384 nodes per axis; "
                "use rule='uniform' for long-range evaluations"
            )
        x, w = roots_legendre(count)
        half = (hi - lo) / 2.0
        return lo + half * (x + 1.0), half * w
    raise ValueError("rule must be 'uniform' or 'gauss'")


def make_density(
    patch: HypersurfacePatch,
    values: np.ndarray,
    per_axis: Sequence[int],
    rule: str = "uniform",
    support_box: Optional[Box] = None,
    profile: Optional[object] = None,
) -> SampledDensity:
    """Density from a value tensor on the tensor rule over the domain."""
    d = patch.dim_domain
    per_axis = tuple(int(m) for m in per_axis)
    if len(per_axis) != d:
        raise ValueError("per_axis must list one node count per domain axis")
    axes, weights = [], []
    for a in range(d):
        nodes, w = _axis_rule(patch.domain.lo[a], patch.domain.hi[a], per_axis[a], rule)
        axes.append(nodes)
        weights.append(w)
    values = np.asarray(values, dtype=complex)
    if support_box is None:
        support_box = _tight_support(axes, values, patch.domain)
    dens = SampledDensity(
        patch=patch,
        axes=tuple(axes),
        axis_weights=tuple(weights),
        values=values,
        support_box=support_box,
        rule=rule,
        profile=profile,
    )
    _check_support(dens)
    return dens


def _tight_support(axes: List[np.ndarray], values: np.ndarray, domain: Box) -> Box:
    mask = np.abs(values) > 0
    if not mask.any():
        return Box(domain.center.copy(), domain.center.copy())
    lo, hi = [], []
    for a in range(len(axes)):
        other = tuple(i for i in range(len(axes)) if i != a)
        line = mask.any(axis=other) if other else mask
        nz = np.nonzero(line)[0]
        lo.append(axes[a][nz[0]])
        hi.append(axes[a][nz[-1]])
    return Box(np.array(lo), np.array(hi))


def _check_support(dens: SampledDensity) -> None:
    spacing = dens.node_spacing()
    dom = dens.patch.domain
    margin_lo = dens.support_box.lo - dom.lo
    margin_hi = dom.hi - dens.support_box.hi
    # nodes sit strictly inside, so a half-spacing margin is the floor
    need = 0.49 * spacing
    if np.any(margin_lo < need - 1e-12) or np.any(margin_hi < need - 1e-12):
        raise ValueError("density support touches the domain boundary")


def density_from_profile(
    patch: HypersurfacePatch,
    profile,
    per_axis: Sequence[int],
    rule: str = "gauss",
) -> SampledDensity:
    d = patch.dim_domain
    axes, weights = [], []
    per_axis = tuple(int(m) for m in per_axis)
    for a in range(d):
        nodes, w = _axis_rule(patch.domain.lo[a], patch.domain.hi[a], per_axis[a], rule)
        axes.append(nodes)
        weights.append(w)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, d)
    vals = np.asarray(profile.value(pts), dtype=complex).reshape([len(a) for a in axes])
    if hasattr(profile, "support_lo"):
        support = Box(
            np.maximum(profile.support_lo, patch.domain.lo),
            np.minimum(profile.support_hi, patch.domain.hi),
        )
    else:
        support = _tight_support(axes, vals, patch.domain)
    dens = SampledDensity(
        patch=patch,
        axes=tuple(axes),
        axis_weights=tuple(weights),
        values=vals,
        support_box=support,
        rule=rule,
        profile=profile,
    )
    _check_support(dens)
    return dens


def random_density(
    patch: HypersurfacePatch,
    per_axis: Sequence[int],
    seed: int,
    rule: str = "uniform",
    support_box: Optional[Box] = None,
    heavy_tailed: bool = False,
) -> SampledDensity:
    """Unit-norm density with i.i.d. complex Gaussian node amplitudes.

    Support defaults to the domain shrunk by two node spacings so the
    interior-support convention holds at any resolution.
    """
    d = patch.dim_domain
    per_axis = tuple(int(m) for m in per_axis)
    axes = []
    for a in range(d):
        nodes, _ = _axis_rule(patch.domain.lo[a], patch.domain.hi[a], per_axis[a], rule)
        axes.append(nodes)
    if support_box is None:
        spacing = np.array(
            [(patch.domain.hi[a] - patch.domain.lo[a]) / per_axis[a] for a in range(d)]
        )
        support_box = Box(patch.domain.lo + 2 * spacing, patch.domain.hi - 2 * spacing)
    rng = np.random.default_rng(seed)
    shape = tuple(per_axis)
    vals = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if heavy_tailed:
        vals *= rng.standard_cauchy(shape) * 0.1 + 1.0
    mask = np.ones(shape, dtype=bool)
    for a in range(d):
        inside = (axes[a] >= support_box.lo[a]) & (axes[a] <= support_box.hi[a])
        mask &= inside[tuple(slice(None) if i == a else None for i in range(d))]
    vals = np.where(mask, vals, 0.0)
    if not mask.any():
        raise ValueError("support box contains no quadrature nodes")
    dens = make_density(patch, vals, per_axis, rule=rule, support_box=support_box)
    norm = dens.l2_norm()
    if norm == 0.0:
        raise ValueError("degenerate all-zero density")
    return replace(dens, values=(dens.values / norm))


def weighted_density(f: SampledDensity, multiplier: np.ndarray) -> SampledDensity:
    """Same grid, values multiplied by a node-wise multiplier tensor."""
    mult = np.asarray(multiplier, dtype=complex).reshape(f.shape)
    return replace(f, values=f.values * mult, profile=None)


def gradient_densities(f: SampledDensity) -> List[SampledDensity]:
    """Densities whose extensions are the ambient partial derivatives of Ef.

    Axis a of the ambient gradient corresponds to multiplying f by
    i*xi_a for slice axes and i*phi(xi) for the graph axis.
    """
    n = f.patch.dim_ambient
    grids = np.meshgrid(*f.axes, indexing="ij")
    out = []
    for a in range(n):
        if a == f.patch.normal_axis:
            mult = 1j * f.phi_nodes()
        else:
            d = f.patch.slice_axes.index(a)
            mult = 1j * grids[d]
        out.append(weighted_density(f, mult))
    return out


def _slice_and_normal(f: SampledDensity, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != f.patch.dim_ambient:
        raise ValueError("points must live in the ambient space")
    return pts[:, list(f.patch.slice_axes)], pts[:, f.patch.normal_axis]


def _slope_bounds(f: SampledDensity) -> np.ndarray:
    nodes = f.nodes
    inside = f.support_box.contains(nodes, pad=1e-12)
    if inside.any():
        nodes = nodes[inside]
    grads = np.atleast_2d(f.patch.phi_grad(nodes))
    return np.max(np.abs(grads), axis=0)


def _budget_check(f: SampledDensity, x_slice: np.ndarray, x_norm: np.ndarray) -> None:
    """Refuse evaluations whose phase outruns the node resolution."""
    slopes = _slope_bounds(f)
    amp = np.max(np.abs(x_slice), axis=0) + np.max(np.abs(x_norm)) * slopes
    widths = f.patch.domain.widths
    counts = np.array(f.shape, dtype=float)
    if f.rule == "uniform":
        # half-period of the trigonometric sum per axis
        limit = math.pi * counts / widths
        needed = np.ceil(amp * widths / math.pi).astype(int) + 1
    else:
        limit = (2.0 * counts - 16.0) / widths
        needed = np.ceil((amp * widths + 16.0) / 2.0).astype(int)
    if np.any(amp > limit):
        raise ResolutionError(
            f"phase magnitude {amp} exceeds the per-axis budget {limit}; "
            f"need at least {needed.tolist()} nodes per axis",
            required=needed,
        )


def required_nodes(
    patch: HypersurfacePatch,
    support_box: Box,
    x_max: float,
    rule: str = "gauss",
    direction: Optional[np.ndarray] = None,
) -> List[int]:
    """Per-axis node counts that keep |x| <= x_max inside the budget.

    With a unit direction the budget covers the ray x = r * direction
    only; without one it covers every point of that magnitude.
    """
    grid = support_box.uniform_grid(9)
    slopes = np.max(np.abs(np.atleast_2d(patch.phi_grad(grid))), axis=0)
    if direction is None:
        amp = x_max * (1.0 + slopes)
    else:
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        d_slice = np.abs(direction[list(patch.slice_axes)])
        d_norm = abs(direction[patch.normal_axis])
        amp = x_max * (d_slice + d_norm * slopes)
    widths = patch.domain.widths
    if rule == "uniform":
        counts = np.ceil(amp * widths / math.pi) + 2
    else:
        counts = np.ceil((amp * widths + 16.0) / 2.0) + 2
    return [int(c) for c in counts]


def evaluate_extension(
    f: SampledDensity,
    points: np.ndarray,
    report_error: bool = False,
):
    """Ef at arbitrary ambient points by direct quadrature sum.

    With ``report_error`` the result is a pair (values, eps_quad) where
    eps_quad is a node-doubling error estimate; it requires a density
    built from a resolvable profile and is exactly 0.0 for pure node
    data, whose quadrature sum is its own definition.
    """
    x_slice, x_norm = _slice_and_normal(f, points)
    _budget_check(f, x_slice, x_norm)
    vals = _phase_sum(f, x_slice, x_norm)
    if not report_error:
        return vals
    if f.profile is None:
        return vals, 0.0
    doubled = density_from_profile(
        f.patch, f.profile, [2 * m for m in f.shape], rule=f.rule
    )
    probe = np.arange(0, x_slice.shape[0], max(1, x_slice.shape[0] // 32))
    ref = _phase_sum(doubled, x_slice[probe], x_norm[probe])
    scale = float(np.max(np.abs(ref)))
    eps = float(np.max(np.abs(vals[probe] - ref))) / max(scale, 1e-300)
    return vals, eps


def _phase_sum(f: SampledDensity, x_slice: np.ndarray, x_norm: np.ndarray) -> np.ndarray:
    nodes = f.nodes
    phi = f.phi_nodes().reshape(-1)
    coeff = f.weights * f.flat_values
    out = np.empty(x_slice.shape[0], dtype=complex)
    block = max(1, MAX_PHASE_BLOCK // max(nodes.shape[0], 1))
    for start in range(0, x_slice.shape[0], block):
        sl = slice(start, start + block)
        phase = x_slice[sl] @ nodes.T + x_norm[sl, None] * phi[None, :]
        out[sl] = np.exp(1j * phase) @ coeff
    return out


@dataclass(frozen=True)
class SampledField:
    """Complex samples of a wave (or product of waves) on a tensor grid.

    ``axes`` holds one midpoint-grid array per ambient coordinate; a
    slice field over the hyperplane x_i = const simply has one axis
    fewer.
    """

    axes: Tuple[np.ndarray, ...]
    values: np.ndarray
    cell_volume: float

    def __post_init__(self) -> None:
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("field values do not match the grid shape")
        for a in self.axes:
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.axes)


def _midpoint_axis(center: float, side: float, count: int) -> np.ndarray:
    h = side / count
    return center - side / 2.0 + (np.arange(count) + 0.5) * h


def _tensor_field(
    f: SampledDensity, slice_axes_grids: List[np.ndarray], x_norm: np.ndarray
) -> np.ndarray:
    """Extension values on the tensor grid (slice axes..., normal axis).

    Factorizes the phase per slice axis; cost is one small matrix chain
    per normal-axis slab.
    """
    d = f.patch.dim_domain
    mats = [np.exp(1j * np.outer(g, f.axes[a])) for a, g in enumerate(slice_axes_grids)]
    w_vals = (f.weights * f.flat_values).reshape(f.shape)
    phi = f.phi_nodes()
    slabs = []
    for xn in x_norm:
        g = w_vals * np.exp(1j * xn * phi)
        for a in range(d):
            g = np.moveaxis(np.tensordot(mats[a], g, axes=([1], [a])), 0, a)
        slabs.append(g)
    return np.stack(slabs, axis=-1)


def _field_nyquist(f: SampledDensity, sides: np.ndarray, counts: np.ndarray) -> None:
    n = f.patch.dim_ambient
    freq = np.empty(n)
    for d, a in enumerate(f.patch.slice_axes):
        freq[a] = max(abs(f.support_box.lo[d]), abs(f.support_box.hi[d]))
    nodes = f.nodes
    inside = f.support_box.contains(nodes, pad=1e-12)
    phi_vals = f.patch.phi(nodes[inside] if inside.any() else nodes)
    freq[f.patch.normal_axis] = float(np.max(np.abs(phi_vals)))
    h = sides / counts
    bad = h * freq > math.pi
    if np.any(bad):
        needed = np.ceil(sides * freq / math.pi).astype(int) + 1
        raise ResolutionError(
            f"grid spacing too coarse for the spectral extent; need per-axis "
            f"resolutions {needed.tolist()}",
            required=needed,
        )


def evaluate_field(
    f: SampledDensity,
    center: np.ndarray,
    side: float,
    resolution: int,
) -> SampledField:
    """Ef on a midpoint grid over the cube of the given center and side."""
    n = f.patch.dim_ambient
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.shape != (n,):
        raise ValueError("cube center must be an ambient point")
    sides = np.full(n, float(side))
    counts = np.full(n, int(resolution))
    _field_nyquist(f, sides, counts)
    axes = [_midpoint_axis(center[a], sides[a], counts[a]) for a in range(n)]
    corner = np.zeros((2, n))
    corner[0] = center - side / 2
    corner[1] = center + side / 2
    x_slice_extremes = corner[:, list(f.patch.slice_axes)]
    _budget_check(f, x_slice_extremes, corner[:, f.patch.normal_axis])
    slice_grids = [axes[a] for a in f.patch.slice_axes]
    tensor = _tensor_field(f, slice_grids, axes[f.patch.normal_axis])
    order = list(f.patch.slice_axes) + [f.patch.normal_axis]
    perm = [order.index(a) for a in range(n)]
    values = np.transpose(tensor, perm)
    cell = float(np.prod(sides / counts))
    return SampledField(tuple(axes), values, cell)


def field_product(fields: Sequence[SampledField]) -> SampledField:
    """Pointwise product of waves sharing one evaluation grid."""
    if not fields:
        raise ValueError("need at least one field")
    first = fields[0]
    out = first.values.copy()
    for fld in fields[1:]:
        if fld.values.shape != first.values.shape:
            raise ValueError("fields live on different grids")
        for a, b in zip(fld.axes, first.axes):
            if a.shape != b.shape or np.max(np.abs(a - b)) > 1e-12:
                raise ValueError("fields live on different grids")
        out *= fld.values
    return SampledField(first.axes, out, first.cell_volume)


def lp_quasinorm(field: SampledField, p: float) -> float:
    """Riemann L^p quasi-norm of the field over its grid."""
    if p <= 0:
        raise ValueError("p must be positive")
    mags = np.abs(field.values).reshape(-1)
    return float(np.sum(mags**p) * field.cell_volume) ** (1.0 / p)


def _matched_axes(f: SampledDensity, oversample: int) -> List[np.ndarray]:
    """Slice-plane grids Parseval-matched to the uniform node grid."""
    out = []
    for d in range(f.patch.dim_domain):
        m = f.shape[d] * oversample
        step0 = f.axis_weights[d][0]
        span = 2.0 * math.pi / step0
        h = span / m
        out.append(-span / 2.0 + (np.arange(m) + 0.5) * h)
    return out


def slice_field(
    f: SampledDensity,
    x_i: float,
    axes: Optional[Sequence[np.ndarray]] = None,
    oversample: int = 1,
) -> SampledField:
    """Ef restricted to the hyperplane x_i = const, on the matched grid
    by default."""
    if axes is None:
        if f.rule != "uniform":
            raise ValueError("matched slice grids require the uniform node rule")
        axes = _matched_axes(f, oversample)
    axes = [np.asarray(a, dtype=float) for a in axes]
    x_ext = np.zeros((2, f.patch.dim_ambient))
    for d, a in enumerate(axes):
        x_ext[0, f.patch.slice_axes[d]] = np.min(a)
        x_ext[1, f.patch.slice_axes[d]] = np.max(a)
    x_ext[:, f.patch.normal_axis] = x_i
    _budget_check(f, x_ext[:, list(f.patch.slice_axes)], x_ext[:, f.patch.normal_axis])
    tensor = _tensor_field(f, axes, np.array([x_i]))[..., 0]
    cell = float(np.prod([a[1] - a[0] for a in axes]))
    return SampledField(tuple(axes), tensor, cell)


def slice_mass(f: SampledDensity, x_i: float, oversample: int = 1) -> float:
    """L^2 norm of Ef over the slice plane at x_i, via the matched grid."""
    fld = slice_field(f, x_i, oversample=oversample)
    return math.sqrt(float(np.sum(np.abs(fld.values) ** 2)) * fld.cell_volume)


def boundary_trace(
    f: SampledDensity,
    axes: Optional[Sequence[np.ndarray]] = None,
    oversample: int = 1,
) -> SampledField:
    """Ef on the slice plane through the origin, which equals
    (2 pi)^(n-1) times the inverse transform of f."""
    return slice_field(f, 0.0, axes=axes, oversample=oversample)


def moment_density(f: SampledDensity, center: float, axis: int, power: int = 1) -> SampledDensity:
    """Spectral moment density: transform of (y - c)^N applied under the
    inverse transform of f along one domain axis.

    Uses the exact discrete transform pair on a doubled dual grid; with
    power 0 the round trip reproduces f to machine precision.
    """
    if f.rule != "uniform":
        raise ValueError("moment densities require the uniform node rule")
    xi = f.axes[axis]
    m = len(xi)
    step = f.axis_weights[axis][0]
    span = 2.0 * math.pi / step
    t = 2 * m
    dy = span / t
    y = -span / 2.0 + (np.arange(t) + 0.5) * dy
    fwd = np.exp(1j * np.outer(y, xi))          # y-grid transform of node data
    back = np.exp(-1j * np.outer(xi, y))
    weight = (y - center) ** power
    mat = (step * dy / (2.0 * math.pi)) * (back * weight[None, :]) @ fwd
    vals = np.moveaxis(
        np.tensordot(mat, f.values, axes=([1], [axis])), 0, axis
    )
    return replace(f, values=vals, profile=None)


@dataclass(frozen=True)
class CommutatorReport:
    order: int
    discrepancy: float
    per_axis: Tuple[float, ...]
    method: str


def _derivative_values(f: SampledDensity, axis: int) -> np.ndarray:
    if f.profile is not None and hasattr(f.profile, "deriv"):
        return np.asarray(f.profile.deriv(f.nodes, axis), dtype=complex).reshape(f.shape)
    return moment_density(f, 0.0, axis, power=1).values * (-1j)


def _second_derivative_values(f: SampledDensity, axis: int) -> np.ndarray:
    if f.profile is not None and hasattr(f.profile, "deriv2"):
        return np.asarray(f.profile.deriv2(f.nodes, axis), dtype=complex).reshape(f.shape)
    return -moment_density(f, 0.0, axis, power=2).values


def commutator_check(
    f: SampledDensity,
    center: np.ndarray,
    order: int,
    points: np.ndarray,
    method: str = "auto",
) -> CommutatorReport:
    """Both-sides evaluation of the transport identity

        ((x'_d - c_d) + x_i m_d(D)) ^ N  Ef  =  E[ (i d/dxi_d - c_d)^N f ],

    with m_d the graph-slope multiplier.  The left side is assembled from
    coordinate weights and slope-weighted extensions; the right side is
    the extension of the moment density, computed from the profile's
    analytic derivatives when available and from the exact discrete
    transform pair otherwise.  Returns the max relative discrepancy.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if method not in ("auto", "analytic", "spectral"):
        raise ValueError("unknown method")
    use_analytic = method == "analytic" or (
        method == "auto" and f.profile is not None and hasattr(f.profile, "deriv")
    )
    if method == "analytic" and (f.profile is None or not hasattr(f.profile, "deriv")):
        raise ValueError("analytic method needs a profile with derivative oracles")
    d = f.patch.dim_domain
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.shape != (d,):
        raise ValueError("center must live in the patch domain")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x_slice, x_norm = _slice_and_normal(f, pts)

    grids = np.meshgrid(*f.axes, indexing="ij")
    grad = np.atleast_2d(f.patch.phi_grad(f.nodes))
    ef = evaluate_extension(f, pts)
    per_axis = []
    for a in range(d):
        m_a = grad[:, a].reshape(f.shape)
        e_mf = evaluate_extension(weighted_density(f, m_a), pts)
        coord = x_slice[:, a] - center[a]
        u1 = coord * ef + x_norm * e_mf

        if use_analytic:
            df = _derivative_values(f, a)
            g1 = 1j * df - center[a] * f.values
        else:
            g1 = moment_density(f, center[a], a, power=1).values
        if order == 1:
            lhs = u1
            rhs = evaluate_extension(replace(f, values=g1, profile=None), pts)
        else:
            e_m2f = evaluate_extension(weighted_density(f, m_a**2), pts)
            hess = f.patch.phi_hess(f.nodes)[..., a, a].reshape(f.shape)
            e_hf = evaluate_extension(weighted_density(f, hess), pts)
            # multiplier applied to u1: the coordinate weight commutes up
            # to the slope-derivative correction term
            mult_u1 = coord * e_mf - 1j * e_hf + x_norm * e_m2f
            lhs = coord * u1 + x_norm * mult_u1
            if use_analytic:
                d2f = _second_derivative_values(f, a)
                df = _derivative_values(f, a)
                g2 = -d2f - 2j * center[a] * df + center[a] ** 2 * f.values
            else:
                g2 = moment_density(f, center[a], a, power=2).values
            rhs = evaluate_extension(replace(f, values=g2, profile=None), pts)
        scale = float(np.max(np.abs(rhs)))
        per_axis.append(float(np.max(np.abs(lhs - rhs))) / max(scale, 1e-300))
    return CommutatorReport(
        order=order,
        discrepancy=float(max(per_axis)),
        per_axis=tuple(per_axis),
        method="analytic" if use_analytic else "spectral",
    )


@dataclass(frozen=True)
class DecayEstimate:
    direction: np.ndarray
    radii: np.ndarray
    magnitudes: np.ndarray
    alpha_hat: float
    fit_residual: float
    note: str = ""


def geometric_radii(r_min: float, r_max: float, per_octave: int = 8) -> np.ndarray:
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    octaves = math.log2(r_max / r_min)
    count = max(int(math.ceil(octaves * per_octave)) + 1, 2)
    return r_min * 2.0 ** (np.linspace(0.0, octaves, count))


def decay_fit(
    psi: SampledDensity,
    direction: np.ndarray,
    radii: np.ndarray,
) -> DecayEstimate:
    """Decay exponent of |E psi| along a ray.

    |E psi| oscillates, so the fit works on per-octave envelope maxima:
    alpha_hat is minus the median of consecutive octave-to-octave slopes,
    and fit_residual is the RMS residual of the log-log least-squares
    line through the octave maxima.
    """
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii[-1] / radii[0] < 99.0:
        raise ValueError("radii must span at least two decades")
    pts = radii[:, None] * direction[None, :]
    mags = np.abs(evaluate_extension(psi, pts))
    note = ""
    alive = mags > 1e-300
    if not alive.all():
        keep = int(np.argmax(~alive))
        radii, mags = radii[:keep], mags[:keep]
        note = "magnitudes underflow; radii truncated"
        if keep < 2:
            return DecayEstimate(direction, radii, mags, math.inf, math.nan, note)
    octave = np.floor(np.log2(radii / radii[0])).astype(int)
    reps_r, reps_m = [], []
    for o in np.unique(octave):
        sel = octave == o
        j = np.argmax(mags[sel])
        reps_r.append(radii[sel][j])
        reps_m.append(mags[sel][j])
    reps_r, reps_m = np.array(reps_r), np.array(reps_m)
    if len(reps_r) < 3:
        raise ValueError("need at least three octaves of radii")
    logs_r, logs_m = np.log(reps_r), np.log(reps_m)
    slopes = np.diff(logs_m) / np.diff(logs_r)
    alpha_hat = -float(np.median(slopes))
    coeffs = np.polyfit(logs_r, logs_m, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coeffs, logs_r) - logs_m) ** 2)))
    return DecayEstimate(direction, radii, mags, alpha_hat, resid, note)


def worst_direction_decay(
    psi: SampledDensity,
    radii: np.ndarray,
    angular_count: int = 181,
) -> DecayEstimate:
    """Scan a deterministic direction grid and return the slowest decay.

    Only implemented for two ambient dimensions, where the grid is a
    half-circle of the stated density (antipodal directions carry the
    same magnitudes for real densities).
    """
    n = psi.patch.dim_ambient
    if n != 2:
        raise ValueError("worst-direction scan is two-dimensional only")
    best: Optional[DecayEstimate] = None
    for theta in np.linspace(0.0, math.pi, angular_count):
        est = decay_fit(psi, np.array([math.cos(theta), math.sin(theta)]), radii)
        if best is None or est.alpha_hat < best.alpha_hat:
            best = est
    return best


@dataclass(frozen=True)
class KernelProfile:
    slab_offset: float
    cube_center: np.ndarray
    radius: float
    l1_on_cube: float
    alpha_used: float
    kappa: float


def kernel_profile(
    chi: SampledDensity,
    slab_offset: float,
    cube_center: np.ndarray,
    radius: float,
    alpha: float,
    resolution: int = 129,
) -> KernelProfile:
    """L^1 mass of the extension kernel over a slice cube at a slab offset.

    kappa is the measured mass divided by the reference envelope
    R^(n-1) <|c|>^(-alpha) with c the full offset vector.
    """
    n = chi.patch.dim_ambient
    cube_center = np.atleast_1d(np.asarray(cube_center, dtype=float))
    if cube_center.shape != (n - 1,):
        raise ValueError("cube center lives in the slice plane")
    axes = [_midpoint_axis(c, 2.0 * radius, resolution) for c in cube_center]
    fld = slice_field(chi, slab_offset, axes=axes)
    l1 = float(np.sum(np.abs(fld.values))) * fld.cell_volume
    c_full = math.hypot(float(np.linalg.norm(cube_center)), slab_offset)
    envelope = (2.0 * radius) ** (n - 1) * (1.0 + c_full) ** (-alpha)
    return KernelProfile(
        slab_offset=slab_offset,
        cube_center=cube_center,
        radius=radius,
        l1_on_cube=l1,
        alpha_used=alpha,
        kappa=l1 / envelope,
    )
