"""Best-constant experiments for products of extension waves.

The measurements here chase the quantities the estimates are about: the
best constant A(R, delta, mu) on a cube of side R, its growth exponent
in R, the gain from densities localized near a lower-dimensional piece
of the frequency domain, the two-scale recursion that trades R for
delta^-1 R, and the exponent arithmetic that removes the R^eps loss.
Everything is a lower-bound measurement over random trials; nothing
here certifies a supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import SubmanifoldSpec
from .lattice import CubeLattice
from .oscillation import (
    ResolutionError,
    SampledDensity,
    density_from_profile,
    evaluate_field,
    make_density,
    random_density,
    slice_field,
)
from .profiles import random_profile

__all__ = [
    "DEFAULT_DELTA",
    "KAPPA_RECURSION",
    "KAPPA_CUANT",
    "sample_localized_density",
    "translate_density",
    "modulate_density",
    "FlattenedDensity",
    "flatten_density",
    "c_factor",
    "SliceBoundReport",
    "localized_slice_bound",
    "weight_exponent",
    "RefinedTerm",
    "RefinedRhsReport",
    "refined_rhs",
    "product_quasinorm",
    "LedgerEntry",
    "ConstantLedger",
    "best_constant_estimate",
    "GainCurve",
    "localization_gain_curve",
    "cuant_product",
    "RecursionReport",
    "recursion_check",
    "removal_delta",
    "EpsRemovalPlan",
    "eps_removal_exponent",
    "exponent_chain_check",
    "WeakTypeRecord",
    "weak_type_assembly",
    "SchurReport",
    "tt_star_sparse_sum",
    "tt_star_direct_sum",
]

DEFAULT_DELTA = 2.0**-4
KAPPA_RECURSION = 10.0
KAPPA_CUANT = 20.0

# largest per-axis field resolution product_quasinorm will pick on its own
MAX_FIELD_RESOLUTION = 201


def _bracket(x: np.ndarray) -> np.ndarray:
    """Smoothed absolute value (1 + |x|^2)^(1/2)."""
    return np.sqrt(1.0 + np.square(x))


# ---------------------------------------------------------------------------
# density construction


def sample_localized_density(
    spec: SubmanifoldSpec,
    width: float,
    seed: int,
    per_axis: Sequence[int],
    rule: str = "uniform",
    style: str = "rough",
) -> SampledDensity:
    """Unit-norm random density supported near the submanifold.

    Nodes keep their complex Gaussian amplitude when the trailing graph
    coordinates sit within ``width`` of the graph in sup norm (which
    puts them within metric distance ``width`` of the submanifold), and
    the leading coordinates stay in the parameter box inflated by
    ``width``.  Codimension zero keeps every interior node.  The draw is
    deterministic per seed.

    ``style="rough"`` draws node-wise Gaussian amplitudes, so the wave
    mass spreads over a box whose side scales with the node count.
    ``style="smooth"`` multiplies a random bump profile over the
    parameter box by a compact bump of relative width 0.9 across the
    graph, evaluated node-wise, so the support rides the graph whether
    it is flat, tilted, or curved; a cube of side a few times the
    inverse parameter extent then captures the wave mass.
    """
    if width <= 0 and spec.codim > 0:
        raise ValueError("localization width must be positive")
    patch = spec.patch
    d = patch.dim_domain
    per_axis = tuple(int(m) for m in per_axis)
    if style == "smooth" and spec.codim == 0:
        prof = random_profile(patch.domain.lo, patch.domain.hi, seed=seed)
        probe = density_from_profile(patch, prof, per_axis, rule=rule)
    else:
        heavy = style == "heavy"
        probe = random_density(patch, per_axis, seed=seed, rule=rule, heavy_tailed=heavy)
    axes = probe.axes
    vals = probe.values.copy()
    if spec.codim > 0:
        m = spec.dim_param
        grids = np.meshgrid(*axes, indexing="ij")
        if m > 0:
            params = np.stack([grids[a] for a in range(m)], axis=-1)
            graph = np.atleast_1d(np.asarray(spec.graph_map(params.reshape(-1, m))))
            graph = graph.reshape(params.shape[:-1] + (spec.codim,))
        else:
            # zero-dimensional parameter set: the graph is the origin
            graph = np.zeros(vals.shape + (spec.codim,))
        if style == "smooth":
            pbox = spec.param_box
            if m > 0:
                prof = random_profile(
                    np.asarray(pbox.lo, dtype=float),
                    np.asarray(pbox.hi, dtype=float),
                    seed=seed,
                )
                flat = params.reshape(-1, m)
                vals = np.asarray(prof.value(flat), dtype=complex).reshape(vals.shape)
            else:
                vals = np.ones(vals.shape, dtype=complex)
            for j in range(spec.codim):
                u = (grids[m + j] - graph[..., j]) / (0.9 * width)
                vals = vals * np.clip(1.0 - u * u, 0.0, None) ** 6
        inside = np.ones(vals.shape, dtype=bool)
        for j in range(spec.codim):
            inside &= np.abs(grids[m + j] - graph[..., j]) <= width
        pbox = spec.param_box
        for a in range(m):
            inside &= (grids[a] >= pbox.lo[a] - width) & (grids[a] <= pbox.hi[a] + width)
        vals = np.where(inside, vals, 0.0)
        if not np.any(np.abs(vals) > 0):
            spacing = probe.node_spacing()
            need = [int(math.ceil(3.0 * (patch.domain.hi[a] - patch.domain.lo[a]) / width))
                    for a in range(d)]
            raise ResolutionError(
                f"no quadrature node falls in the width-{width} neighborhood; "
                f"spacing {spacing.max():.3g} is too coarse",
                required=need,
            )
    dens = make_density(patch, vals, per_axis, rule=rule)
    norm = dens.l2_norm()
    return replace(dens, values=dens.values / norm)


def translate_density(f: SampledDensity, cells: Sequence[int]) -> SampledDensity:
    """Shift the value tensor by whole node counts per axis, zero-filled.

    Over a flat patch this translates the frequency support without
    changing the extension magnitude anywhere; curved phases re-expand
    around the new center, so there the shifted density is a different
    wave.
    """
    if f.rule != "uniform":
        raise ValueError("translation by cells requires the uniform rule")
    cells = tuple(int(c) for c in cells)
    if len(cells) != f.values.ndim:
        raise ValueError("need one shift count per domain axis")
    out = f.values
    for a, c in enumerate(cells):
        if c == 0:
            continue
        out = np.roll(out, c, axis=a)
        sl = [slice(None)] * out.ndim
        sl[a] = slice(0, c) if c > 0 else slice(c, None)
        out = out.copy()
        out[tuple(sl)] = 0.0
    return make_density(f.patch, out, tuple(f.shape), rule=f.rule)


def modulate_density(f: SampledDensity, shift: Sequence[float]) -> SampledDensity:
    """Multiply by exp(-i xi . shift), moving the wave by +shift in the
    slice coordinates."""
    shift = np.asarray(shift, dtype=float)
    grids = np.meshgrid(*f.axes, indexing="ij")
    phase = np.zeros(f.shape, dtype=float)
    for d in range(len(grids)):
        phase += grids[d] * shift[d]
    return replace(f, values=f.values * np.exp(-1j * phase), profile=None)


# ---------------------------------------------------------------------------
# flattening


@dataclass(frozen=True)
class FlattenedDensity:
    """Density resampled in sheared coordinates (xi', xi'' + graph).

    The shear is snapped to whole grid cells, so the value tensor is a
    permutation of the original and the discrete L^2 norm is preserved
    exactly; ``quantization`` records the largest snapping offset.
    """

    values: np.ndarray
    param_axes: Tuple[np.ndarray, ...]
    offset_axes: Tuple[np.ndarray, ...]
    axis_weights: Tuple[np.ndarray, ...]
    shifts: np.ndarray
    quantization: float
    l2_ratio: float
    param_extent: float
    offset_extent: float

    def audit(self, mu: float, delta: float, r_scale: float) -> Tuple[bool, float, float]:
        """Support bounds |xi'| <= delta + 10/R and |xi''| <= mu + 10 delta/R."""
        param_bound = delta + 10.0 / r_scale
        offset_bound = mu + 10.0 * delta / r_scale
        ok = self.param_extent <= param_bound + 1e-12 and (
            self.offset_extent <= offset_bound + 1e-12
        )
        return ok, param_bound, offset_bound


def flatten_density(f: SampledDensity, spec: SubmanifoldSpec) -> FlattenedDensity:
    """Straighten the graph: h(xi', xi'') = f(xi', graph(xi') + xi'').

    Works on the uniform tensor grid by shifting each trailing-axis
    column by the snapped graph offset.  Raises when a nonzero value
    would be pushed off the grid, reporting the padding that would fix
    it.
    """
    if f.rule != "uniform":
        raise ValueError("flattening requires the uniform node rule")
    d = f.patch.dim_domain
    m = spec.dim_param
    codim = spec.codim
    vals = f.values.copy()
    mask = np.abs(vals) > 0
    if codim == 0:
        extent = _support_extent(f.axes, mask, range(d))
        return FlattenedDensity(
            values=vals,
            param_axes=f.axes,
            offset_axes=(),
            axis_weights=f.axis_weights,
            shifts=np.zeros((0,), dtype=np.int64),
            quantization=0.0,
            l2_ratio=1.0,
            param_extent=extent,
            offset_extent=0.0,
        )
    grids = np.meshgrid(*[f.axes[a] for a in range(m)], indexing="ij")
    params = np.stack(grids, axis=-1).reshape(-1, m)
    graph = np.atleast_1d(np.asarray(spec.graph_map(params)))
    graph = graph.reshape(tuple(len(f.axes[a]) for a in range(m)) + (codim,))
    shifts = np.zeros(graph.shape, dtype=np.int64)
    quantization = 0.0
    for j in range(codim):
        axis = m + j
        h = float(f.axis_weights[axis][0])
        s = np.rint(graph[..., j] / h).astype(np.int64)
        shifts[..., j] = s
        quantization = max(quantization, float(np.max(np.abs(graph[..., j] - s * h))))
        size = vals.shape[axis]
        # gather: out[..., t, ...] = vals[..., t + s, ...] per param column
        idx = np.arange(size)
        full = idx.reshape((1,) * m + (-1,)) + s[..., None]
        pad_lo = int(max(0, -full.min()))
        pad_hi = int(max(0, full.max() - (size - 1)))
        inside = (full >= 0) & (full < size)
        src = np.clip(full, 0, size - 1)
        gathered = np.take_along_axis(
            vals, _expand_index(src, vals.ndim, m, axis), axis=axis
        )
        gathered = np.where(_expand_index(inside, vals.ndim, m, axis), gathered, 0.0)
        moved_out = np.abs(vals).sum() - np.abs(gathered).sum()
        if moved_out > 1e-13 * max(1.0, np.abs(vals).sum()):
            raise ResolutionError(
                "shear pushes support off the grid; pad the trailing axis "
                f"by {pad_lo} cells below and {pad_hi} above",
                required=[size + pad_lo + pad_hi],
            )
        vals = gathered
    new_mask = np.abs(vals) > 0
    l2_old = math.sqrt(float(np.sum(np.abs(f.values) ** 2)))
    l2_new = math.sqrt(float(np.sum(np.abs(vals) ** 2)))
    return FlattenedDensity(
        values=vals,
        param_axes=tuple(f.axes[a] for a in range(m)),
        offset_axes=tuple(f.axes[a] for a in range(m, d)),
        axis_weights=f.axis_weights,
        shifts=shifts.reshape(-1, codim),
        quantization=quantization,
        l2_ratio=l2_new / l2_old if l2_old > 0 else 0.0,
        param_extent=_support_extent(f.axes, new_mask, range(m)),
        offset_extent=_support_extent(f.axes, new_mask, range(m, d)),
    )


def _expand_index(arr: np.ndarray, ndim: int, m: int, axis: int) -> np.ndarray:
    """Lift an index array over (param axes..., gather axis) to full rank."""
    shape = list(arr.shape[:m]) + [1] * (ndim - m)
    shape[axis] = arr.shape[-1]
    return arr.reshape(shape)


def _support_extent(axes, mask: np.ndarray, which) -> float:
    which = list(which)
    if not which or not mask.any():
        return 0.0
    out = 0.0
    for a in which:
        other = tuple(i for i in range(mask.ndim) if i != a)
        line = mask.any(axis=other) if other else mask
        nz = np.nonzero(line)[0]
        out = max(out, float(np.max(np.abs(np.asarray(axes[a])[nz]))))
    return out


# ---------------------------------------------------------------------------
# localized slice bound


def c_factor(mu: float, delta: float, r_scale: float, codim_exp: float) -> float:
    """min(1, (R mu + 10 delta)^(c/2)), the per-scale localization factor."""
    if mu < 0 or delta < 0 or r_scale < 0:
        raise ValueError("localization factor inputs must be nonnegative")
    if codim_exp < 0:
        raise ValueError("codimension exponent must be nonnegative")
    if codim_exp == 0:
        return 1.0
    return min(1.0, (r_scale * mu + 10.0 * delta) ** (codim_exp / 2.0))


@dataclass(frozen=True)
class SliceBoundReport:
    lhs: float
    bound: float
    ratio: float
    weight: float
    gain: float
    tilde_norm: float
    tilde_ratio: float


def _slice_window_resolution(f: SampledDensity, span: float) -> int:
    """Grid points needed for Riemann sums of the slice trace over a
    window of the given span."""
    box = f.support_box
    freq = 0.0
    for d in range(f.patch.dim_domain):
        freq = max(freq, abs(float(box.lo[d])), abs(float(box.hi[d])))
    h = math.pi / (2.6 * max(freq, 1e-9))
    return max(int(math.ceil(span / h)) | 1, 33)


def _plateau_cutoff(u: np.ndarray, plateau: float, tail: float) -> np.ndarray:
    """Cube cutoff in cube units: 1 on |u| <= plateau, smoothstep descent
    to 0 at plateau + tail.  Flat on its core, so a wave concentrated
    well inside the cube keeps its full mass under the cutoff."""
    t = np.clip((np.abs(u) - plateau) / tail, 0.0, 1.0)
    return 1.0 - t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _tailed_cutoff(dist: np.ndarray, plateau: float, moment: int) -> np.ndarray:
    """Cutoff in cube units with polynomial tails: 1 inside the plateau
    radius, <excess>^(-moment) beyond it.  The tails are what a cutoff
    adapted to one cube leaves on a cube at distance d, and they decay
    at exactly the rate the distance weight in the bound charges."""
    excess = np.maximum(np.asarray(dist, dtype=float) - plateau, 0.0)
    return _bracket(excess) ** (-moment)


def localized_slice_bound(
    f: SampledDensity,
    spec: SubmanifoldSpec,
    qprime_center: np.ndarray,
    q_center: np.ndarray,
    moment: int,
    r_scale: float,
    delta: float,
    mu: float,
    resolution: Optional[int] = None,
) -> SliceBoundReport:
    """Cutoff slice mass against the distance-weighted localization bound.

    lhs is the L^2 norm of chi_{q'} times the wave's slice at the cube's
    normal height, taken over the cube's shadow; the bound is
    (2 pi)^((n-1)/2) <d/R>^(-moment) (R mu + 10 delta)^(c/2) ||f||_2.
    The tilde variant reports the same mass under a cutoff flat on the
    4x enlarged cube, the natural right-hand side when chaining.
    """
    patch = spec.patch
    n = patch.dim_ambient
    q_center = np.asarray(q_center, dtype=float)
    qprime_center = np.asarray(qprime_center, dtype=float)
    lat = CubeLattice(n - 1, r_scale)
    shadow = q_center[list(patch.slice_axes)]
    res = resolution or _slice_window_resolution(f, r_scale)
    axes = [
        shadow[d] + (np.arange(res) + 0.5) / res * r_scale - r_scale / 2.0
        for d in range(n - 1)
    ]
    trace = slice_field(f, float(q_center[patch.normal_axis]), axes=axes)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
    u = np.linalg.norm(pts - qprime_center[None, :], axis=1) / r_scale
    chi = _tailed_cutoff(u, 0.5, moment)
    chi_tilde = _tailed_cutoff(u, 2.0, moment)
    mags = np.abs(trace.values).reshape(-1)
    lhs = math.sqrt(float(np.sum((chi * mags) ** 2)) * trace.cell_volume)
    tilde_norm = math.sqrt(float(np.sum((chi_tilde * mags) ** 2)) * trace.cell_volume)
    # center-to-center distance; set distance would zero out the whole
    # adjacent ring and the weights would stop decaying there
    qi = lat.point_index(shadow).reshape(-1)
    qpi = lat.point_index(qprime_center).reshape(-1)
    dist = float(np.linalg.norm(lat.cube_center(qi) - lat.cube_center(qpi)))
    weight = float(_bracket(np.array(dist / r_scale)) ** (-moment))
    gain = (r_scale * mu + 10.0 * delta) ** (spec.codim / 2.0)
    norm = f.l2_norm()
    bound = (2.0 * math.pi) ** ((n - 1) / 2.0) * weight * gain * norm
    ratio = lhs / bound if bound > 0 else math.inf
    tilde_bound = (2.0 * math.pi) ** ((n - 1) / 2.0) * weight * gain * tilde_norm
    tilde_ratio = lhs / tilde_bound if tilde_bound > 0 else math.inf
    return SliceBoundReport(
        lhs=lhs,
        bound=bound,
        ratio=ratio,
        weight=weight,
        gain=gain,
        tilde_norm=tilde_norm,
        tilde_ratio=tilde_ratio,
    )


# ---------------------------------------------------------------------------
# refined square-function right-hand side


def weight_exponent(
    moment: int,
    ambient_dim: Optional[int] = None,
    wave_count: Optional[int] = None,
    preset: str = "ambient",
) -> float:
    """Distance-weight exponent w(N).

    Two internally consistent presets are carried because their sources
    disagree: ``ambient`` uses 2N - n^2, ``waves`` uses N - 2(k-1)^2.
    Pick explicitly; there is no reconciliation to compute.
    """
    if preset == "ambient":
        if ambient_dim is None:
            raise ValueError("ambient preset needs the ambient dimension")
        return 2.0 * moment - ambient_dim**2
    if preset == "waves":
        if wave_count is None:
            raise ValueError("waves preset needs the wave count")
        return float(moment) - 2.0 * (wave_count - 1) ** 2
    raise ValueError(f"unknown weight preset {preset!r}")


@dataclass(frozen=True)
class RefinedTerm:
    index: Tuple[int, ...]
    distance: float
    weight: float
    mass: float


@dataclass(frozen=True)
class RefinedRhsReport:
    value: float
    moment: int
    exponent: float
    truncation: int
    tail_bound: float
    terms: Tuple[RefinedTerm, ...]


def refined_rhs(
    f: SampledDensity,
    q_center: np.ndarray,
    r_scale: float,
    moment: int,
    truncation: int = 3,
    resolution: Optional[int] = None,
    preset: str = "ambient",
    wave_count: Optional[int] = None,
) -> RefinedRhsReport:
    """Distance-weighted square function of the slice trace over the
    R-lattice of the cube's shadow plane.

    Each lattice cube q' contributes
    <d(pi Q, q')/R>^(-w) || <(x'-c(q'))/R>^N chi_{q'} trace ||_2^2 with
    the trace taken at the cube's normal height; the total is reported
    as a square root, divided by (2 pi)^((n-1)/2) so a trace living in a
    single cube scores ||f||_2.  Truncation keeps cubes within
    ``truncation`` rings; the omitted mass is estimated from the
    outermost ring and the convergent weight series.
    """
    patch = f.patch
    n = patch.dim_ambient
    w = weight_exponent(moment, ambient_dim=n, wave_count=wave_count, preset=preset)
    if w <= n:
        lo = moment
        while weight_exponent(lo, ambient_dim=n, wave_count=wave_count, preset=preset) <= n:
            lo += 1
        raise ValueError(
            f"weight exponent {w:g} is not summable over the slice lattice; "
            f"need moment >= {lo}"
        )
    q_center = np.asarray(q_center, dtype=float)
    shadow = q_center[list(patch.slice_axes)]
    lat = CubeLattice(n - 1, r_scale)
    base = lat.point_index(shadow).reshape(-1)
    half_window = 3.0 * r_scale
    res = resolution or _slice_window_resolution(f, 2.0 * half_window)
    offsets = np.stack(
        np.meshgrid(*[np.arange(-truncation, truncation + 1)] * (n - 1), indexing="ij"),
        axis=-1,
    ).reshape(-1, n - 1)
    terms: List[RefinedTerm] = []
    total = 0.0
    x_norm = float(q_center[patch.normal_axis])
    for off in offsets:
        idx = base + off
        center = lat.cube_center(idx)
        axes = [
            center[d]
            + (np.arange(res) + 0.5) / res * 2.0 * half_window
            - half_window
            for d in range(n - 1)
        ]
        trace = slice_field(f, x_norm, axes=axes)
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
        chi = np.ones(pts.shape[0])
        for d in range(n - 1):
            u = (pts[:, d] - center[d]) / r_scale
            chi *= _plateau_cutoff(u, 0.5, 0.5)
        xw = _bracket(np.linalg.norm(pts - center[None, :], axis=1) / r_scale) ** moment
        mags = np.abs(trace.values).reshape(-1)
        mass = float(np.sum((xw * chi * mags) ** 2)) * trace.cell_volume
        dist = float(np.linalg.norm(center - lat.cube_center(base)))
        wfac = float(_bracket(np.array(dist / r_scale)) ** (-w))
        total += wfac * mass
        terms.append(RefinedTerm(index=tuple(int(i) for i in idx - base),
                                 distance=dist, weight=wfac, mass=mass))
    ring = [t for t in terms if max(abs(i) for i in t.index) == truncation]
    edge_mass = max((t.mass for t in ring), default=0.0)
    tail = 0.0
    for j in range(truncation + 1, truncation + 300):
        count = (2 * j + 1) ** (n - 1) - (2 * j - 1) ** (n - 1)
        tail += count * float(_bracket(np.array(float(j))) ** (-w))
    tail_bound = math.sqrt(edge_mass * tail) / (2.0 * math.pi) ** ((n - 1) / 2.0)
    value = math.sqrt(total) / (2.0 * math.pi) ** ((n - 1) / 2.0)
    return RefinedRhsReport(
        value=value,
        moment=moment,
        exponent=w,
        truncation=truncation,
        tail_bound=tail_bound,
        terms=tuple(terms),
    )


# ---------------------------------------------------------------------------
# product norms over cubes and the constant ledger


def _field_frequencies(densities: Sequence[SampledDensity]) -> np.ndarray:
    n = densities[0].patch.dim_ambient
    freq = np.zeros(n)
    for f in densities:
        box = f.support_box
        for d, axis in enumerate(f.patch.slice_axes):
            freq[axis] += max(abs(box.lo[d]), abs(box.hi[d]))
        freq[f.patch.normal_axis] += float(np.max(np.abs(f.phi_nodes())))
    return freq


def _auto_field_resolution(
    densities: Sequence[SampledDensity], side: float, p: float
) -> int:
    freq = float(np.max(_field_frequencies(densities)))
    # |product|^p needs headroom beyond the product's own bandwidth,
    # more so for p < 2 where the integrand is not band limited
    refine = 1.3 * max(1.0, 2.0 / p)
    h = math.pi / (max(freq, 1e-9) * refine)
    res = int(math.ceil(side / h)) | 1
    return min(max(res, 33), MAX_FIELD_RESOLUTION)


def product_quasinorm(
    densities: Sequence[SampledDensity],
    side: float,
    p: float,
    resolution: Optional[int] = None,
) -> float:
    """L^p quasinorm of the product wave over the origin-centered cube."""
    if not densities:
        raise ValueError("need at least one density")
    n = densities[0].patch.dim_ambient
    if any(f.patch.dim_ambient != n for f in densities):
        raise ValueError("waves must share the ambient dimension")
    res = resolution or _auto_field_resolution(densities, side, p)
    center = np.zeros(n)
    acc = None
    cell = None
    for f in densities:
        fld = evaluate_field(f, center, side, res)
        cell = fld.cell_volume
        acc = fld.values if acc is None else acc * fld.values
    mags = np.abs(acc).reshape(-1)
    return float(np.sum(mags**p) * cell) ** (1.0 / p)


@dataclass(frozen=True)
class LedgerEntry:
    r_scale: float
    delta: float
    mu: Tuple[float, ...]
    a_hat: float
    trials: int
    best_seed: int


class ConstantLedger:
    """Append-only table of best-constant measurements.

    Inserts go through the single ``add`` writer so concurrent trial
    producers can hand their entries to one owner; reductions read the
    list in insertion order.
    """

    def __init__(self) -> None:
        self.entries: List[LedgerEntry] = []

    def add(self, entry: LedgerEntry) -> None:
        self.entries.append(entry)

    def fitted_growth(self) -> float:
        """Exponent of A-hat against R by least squares in log-log."""
        if len(self.entries) < 2:
            raise ValueError("growth fit needs at least two entries")
        x = np.log([e.r_scale for e in self.entries])
        y = np.log([e.a_hat for e in self.entries])
        return float(np.polyfit(x, y, 1)[0])

    def rows(self) -> List[Tuple]:
        return [
            (e.r_scale, e.delta) + e.mu + (e.a_hat, e.trials, e.best_seed)
            for e in self.entries
        ]


def _density_nodes(
    spec: SubmanifoldSpec, r_scale: float, width: Optional[float]
) -> Tuple[int, ...]:
    """Per-axis node counts meeting the cube budget and band resolution."""
    patch = spec.patch
    d = patch.dim_domain
    slope = 0.0 if patch.flat else patch.delta_geom
    out = []
    for a in range(d):
        wdom = float(patch.domain.hi[a] - patch.domain.lo[a])
        amp = 0.5 * r_scale * (1.0 + slope)
        m = int(math.ceil(1.15 * amp * wdom / math.pi))
        if width is not None and a >= spec.dim_param:
            m = max(m, int(math.ceil(3.0 * wdom / width)))
        out.append(max(m, 48))
    return tuple(out)


def _trial_densities(
    family: Sequence[SubmanifoldSpec],
    mu: Sequence[Optional[float]],
    r_scale: float,
    seed: int,
    per_axis: Optional[Sequence[Sequence[int]]],
    style: str = "rough",
) -> List[SampledDensity]:
    out = []
    for i, spec in enumerate(family):
        width = None
        if spec.codim > 0:
            if mu[i] is None:
                raise ValueError("localized wave needs a mu value")
            width = mu[i] + 10.0 / r_scale
        nodes = per_axis[i] if per_axis is not None else _density_nodes(spec, r_scale, width)
        s = seed + 613 * i
        if spec.codim > 0:
            out.append(sample_localized_density(spec, width, s, nodes, style=style))
        elif style == "smooth":
            dom = spec.patch.domain
            prof = random_profile(dom.lo, dom.hi, seed=s)
            dens = density_from_profile(spec.patch, prof, nodes, rule="uniform")
            norm = dens.l2_norm()
            out.append(replace(dens, values=dens.values / norm))
        else:
            heavy = style == "heavy"
            out.append(random_density(spec.patch, nodes, seed=s, heavy_tailed=heavy))
    return out


def _refine_ascent(
    densities: List[SampledDensity],
    side: float,
    p: float,
    resolution: Optional[int],
    start: float,
    seed: int,
    steps: int,
    batch: int = 8,
) -> float:
    """Coordinate ascent on the node amplitudes of the best trial.

    Each round perturbs a random batch of occupied nodes per wave along
    the four complex half-steps, renormalizes, and keeps improvements.
    Only occupied nodes move, so a localized support stays inside its
    neighborhood.  The result can only improve on the starting value.
    """
    rng = np.random.default_rng(seed)
    dens = list(densities)
    best = start
    for _ in range(steps):
        for i in range(len(dens)):
            f = dens[i]
            flat = f.values.reshape(-1)
            occupied = np.flatnonzero(np.abs(flat) > 0)
            if occupied.size == 0:
                continue
            picks = rng.choice(occupied, size=min(batch, occupied.size), replace=False)
            scale = float(np.max(np.abs(flat)))
            for j in picks:
                for step in (0.5 * scale, -0.5 * scale, 0.5j * scale, -0.5j * scale):
                    vals = f.values.copy()
                    vals.reshape(-1)[j] += step
                    cand = make_density(f.patch, vals, tuple(f.shape), rule=f.rule)
                    cand = replace(cand, values=cand.values / cand.l2_norm())
                    probe = dens[:i] + [cand] + dens[i + 1:]
                    v = product_quasinorm(probe, side, p, resolution)
                    if v > best:
                        best = v
                        dens[i] = cand
                        f = cand
    return best


def best_constant_estimate(
    family: Sequence[SubmanifoldSpec],
    r_scale: float,
    delta: float,
    mu: Sequence[Optional[float]],
    trials: int,
    resolution: Optional[int] = None,
    base_seed: int = 0,
    per_axis: Optional[Sequence[Sequence[int]]] = None,
    style: str = "rough",
    refine_steps: int = 0,
) -> LedgerEntry:
    """Max over random trials of the product quasinorm on the R-cube
    against the product of density norms.

    The estimate only ever grows with more trials; the maximizing
    trial's seed is recorded so the draw can be reproduced.  ``style``
    picks the trial class for free waves: ``rough`` draws node-wise
    Gaussian amplitudes whose wave mass keeps spreading with the node
    count, ``smooth`` draws polynomial bump profiles whose wave mass a
    moderate cube already captures (growth fits in R want the latter),
    ``heavy`` draws heavy-tailed amplitudes to probe near-extremizers.
    ``refine_steps`` rounds of coordinate ascent on the best draw can
    push the estimate further up; the recorded seed still reproduces
    the unrefined starting point.
    """
    k = len(family)
    if k == 0 or trials < 1:
        raise ValueError("need at least one wave and one trial")
    p = 2.0 / (k - 1) if k >= 2 else 2.0
    best = -math.inf
    best_seed = base_seed
    for t in range(trials):
        seed = base_seed + 100003 * t
        densities = _trial_densities(family, mu, r_scale, seed, per_axis, style)
        value = product_quasinorm(densities, r_scale, p, resolution)
        denom = 1.0
        for f in densities:
            denom *= f.l2_norm()
        ratio = value / denom
        if ratio > best:
            best = ratio
            best_seed = seed
    if refine_steps > 0:
        densities = _trial_densities(family, mu, r_scale, best_seed, per_axis, style)
        best = _refine_ascent(
            densities, r_scale, p, resolution, best, best_seed + 1, refine_steps
        )
    return LedgerEntry(
        r_scale=r_scale,
        delta=delta,
        mu=tuple(0.0 if m is None else float(m) for m in mu),
        a_hat=best,
        trials=trials,
        best_seed=best_seed,
    )


# ---------------------------------------------------------------------------
# localization gain


@dataclass(frozen=True)
class GainCurve:
    mu_ladder: Tuple[float, ...]
    r_ladder: Tuple[float, ...]
    a_hats: Tuple[float, ...]
    a_even: Tuple[float, ...]
    a_odd: Tuple[float, ...]
    slope: float
    slope_band: Tuple[float, float]
    reference: float
    reference_factors: Tuple[float, ...]
    entries: Tuple[LedgerEntry, ...]


def localization_gain_curve(
    family: Sequence[SubmanifoldSpec],
    mu_ladder: Sequence[float],
    trials: int,
    delta: float,
    resolution: Optional[int] = None,
    base_seed: int = 0,
    r_scale: Optional[float] = None,
    style: str = "rough",
) -> GainCurve:
    """log A-hat against log mu across the ladder, with the c/2 target.

    Each rung runs at R = max(1/mu) over the localized waves unless a
    fixed R is forced; a forced R below 1/mu switches that rung's
    reference factor to R^(-c/2), the deficient-scale replacement.
    The confidence band is the pair of slopes from the even and odd
    trial halves.
    """
    mu_ladder = [float(m) for m in mu_ladder]
    if len(mu_ladder) < 2:
        raise ValueError("gain fit needs at least two rungs")
    c_total = sum(spec.codim for spec in family)
    a_all: List[float] = []
    a_even: List[float] = []
    a_odd: List[float] = []
    r_ladder: List[float] = []
    ref_factors: List[float] = []
    entries: List[LedgerEntry] = []
    for rung, mu in enumerate(mu_ladder):
        r_val = r_scale if r_scale is not None else 1.0 / mu
        r_ladder.append(r_val)
        mu_vec = [mu if spec.codim > 0 else None for spec in family]
        _check_rung_resolution(family, mu, r_val)
        seed = base_seed + 7919 * rung
        # the two half-runs partition the full trial set by seed layout,
        # so their max is the full-run estimate
        half = max(1, trials // 2)
        even = best_constant_estimate(
            family, r_val, delta, mu_vec, half,
            resolution=resolution, base_seed=seed, style=style,
        )
        odd = best_constant_estimate(
            family, r_val, delta, mu_vec, max(1, trials - half),
            resolution=resolution, base_seed=seed + 100003 * half, style=style,
        )
        a_all.append(max(even.a_hat, odd.a_hat))
        a_even.append(even.a_hat)
        a_odd.append(odd.a_hat)
        winner = even if even.a_hat >= odd.a_hat else odd
        entries.append(replace(winner, trials=even.trials + odd.trials))
        if r_val >= 1.0 / mu:
            factor = 1.0
            for spec in family:
                if spec.codim > 0:
                    factor *= mu ** (spec.codim / 2.0)
        else:
            factor = 1.0
            for spec in family:
                if spec.codim > 0:
                    factor *= r_val ** (-spec.codim / 2.0)
        ref_factors.append(factor)
    logmu = np.log(mu_ladder)
    slope = float(np.polyfit(logmu, np.log(a_all), 1)[0])
    s_even = float(np.polyfit(logmu, np.log(a_even), 1)[0])
    s_odd = float(np.polyfit(logmu, np.log(a_odd), 1)[0])
    return GainCurve(
        mu_ladder=tuple(mu_ladder),
        r_ladder=tuple(r_ladder),
        a_hats=tuple(a_all),
        a_even=tuple(a_even),
        a_odd=tuple(a_odd),
        slope=slope,
        slope_band=(min(s_even, s_odd), max(s_even, s_odd)),
        reference=c_total / 2.0,
        reference_factors=tuple(ref_factors),
        entries=tuple(entries),
    )


def _check_rung_resolution(
    family: Sequence[SubmanifoldSpec], mu: float, r_scale: float
) -> None:
    for spec in family:
        if spec.codim == 0:
            continue
        width = mu + 10.0 / r_scale
        nodes = _density_nodes(spec, r_scale, width)
        for a in range(spec.patch.dim_domain):
            wdom = float(spec.patch.domain.hi[a] - spec.patch.domain.lo[a])
            if wdom / nodes[a] > width:
                raise ResolutionError(
                    f"mu {mu:g} sits below the node spacing {wdom / nodes[a]:.3g}",
                    required=[int(math.ceil(wdom / width))],
                )


# ---------------------------------------------------------------------------
# scale recursion


def cuant_product(
    mu: float,
    delta: float,
    r_scale: float,
    codim_exp: float,
    kappa0: float = KAPPA_CUANT,
) -> Tuple[float, float, int]:
    """Iterated per-scale factor against its kappa0^N mu^(c/2) envelope.

    N is the number of delta-steps keeping delta^N R >= delta^(-1);
    returns (product, envelope, N).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    n_steps = int(math.floor(math.log(r_scale) / math.log(1.0 / delta))) - 1
    if n_steps < 1:
        raise ValueError("scale too small: no recursion steps fit")
    prod = 1.0
    for m in range(1, n_steps + 1):
        prod *= c_factor(mu, delta, delta**m * r_scale, codim_exp)
    envelope = kappa0**n_steps * mu ** (codim_exp / 2.0)
    return prod, envelope, n_steps


@dataclass(frozen=True)
class RecursionReport:
    lhs: float
    rhs_base: float
    factors: Tuple[float, ...]
    rhs: float
    ratio: float
    bound: float


def recursion_check(
    family: Sequence[SubmanifoldSpec],
    r_scale: float,
    delta: float,
    mu: Sequence[Optional[float]],
    trials: int,
    resolution: Optional[int] = None,
    base_seed: int = 0,
    kappa_rec: float = KAPPA_RECURSION,
    style: str = "rough",
) -> RecursionReport:
    """Two-scale comparison: A-hat at delta^(-1) R against A-hat at R
    times the per-wave localization factors."""
    big = best_constant_estimate(
        family, r_scale / delta, delta, mu, trials,
        resolution=resolution, base_seed=base_seed, style=style,
    )
    small = best_constant_estimate(
        family, r_scale, delta, mu, trials,
        resolution=resolution, base_seed=base_seed, style=style,
    )
    factors = tuple(
        c_factor(0.0 if m is None else m, delta, r_scale, spec.codim)
        for spec, m in zip(family, mu)
    )
    rhs = small.a_hat
    for fac in factors:
        rhs *= fac
    ratio = big.a_hat / rhs if rhs > 0 else math.inf
    return RecursionReport(
        lhs=big.a_hat,
        rhs_base=small.a_hat,
        factors=factors,
        rhs=rhs,
        ratio=ratio,
        bound=kappa_rec,
    )


# ---------------------------------------------------------------------------
# epsilon removal arithmetic


def removal_delta(c: float, eps: float) -> float:
    """The scale ratio C^(-1/eps) that couples the two-scale recursion
    to the removal constant; exposed as a preset, not a default."""
    if c <= 1.0:
        raise ValueError("removal constant must exceed 1")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return c ** (-1.0 / eps)


@dataclass(frozen=True)
class EpsRemovalPlan:
    p: float
    n: int
    k: Optional[int]
    eps: float
    c: float
    n_steps: float
    beta: float
    q_bound: float
    q_theorem: float


def eps_removal_exponent(
    p: float,
    n: int,
    eps: float,
    c: float,
    k: Optional[int] = None,
) -> EpsRemovalPlan:
    """Exponent bookkeeping for trading an R^eps loss for a larger q.

    N = log(1/eps)/C, beta = 1/N + p eps C^N, and the landing exponent
    q = p + (n+p+1) * 2C/log(1/eps).  The statement-level constant with
    C instead of 2C is reported alongside; the two differ by exactly
    that factor and both are carried.
    """
    if c <= min(2, n - 1):
        raise ValueError(f"need C > min(2, n-1) = {min(2, n - 1)}")
    if not 0 < eps < math.exp(-c):
        raise ValueError("eps must lie in (0, exp(-C))")
    if k is not None and p < 2.0 / k:
        raise ValueError(f"exponent p must be at least 2/k = {2.0 / k:g}")
    log_inv = math.log(1.0 / eps)
    n_steps = log_inv / c
    beta = 1.0 / n_steps + p * eps * c**n_steps
    if beta >= 1.0 / (n + p + 1):
        raise ValueError(
            f"beta {beta:.6g} reaches 1/(n+p+1) = {1.0 / (n + p + 1):.6g}; "
            "the exponent chain breaks at this eps and C"
        )
    q_bound = p + (n + p + 1) * 2.0 * c / log_inv
    q_theorem = p + (n + p + 1) * c / log_inv
    return EpsRemovalPlan(
        p=p, n=n, k=k, eps=eps, c=c,
        n_steps=n_steps, beta=beta, q_bound=q_bound, q_theorem=q_theorem,
    )


def exponent_chain_check(p: float, n: int, grid: int = 1000) -> Tuple[bool, bool]:
    """(p+n b)/(1-b) < p+(n+p+1) b exactly below b = 1/(n+p+1).

    Returns whether the inequality holds on the whole grid below the
    threshold and fails on the whole grid above it.
    """
    cut = 1.0 / (n + p + 1)
    below = np.linspace(cut / (grid + 1), cut * (1 - 1e-9), grid)
    above = np.linspace(cut * (1 + 1e-9), min(0.999, cut * 3), grid)
    lhs_b = (p + n * below) / (1.0 - below)
    rhs_b = p + (n + p + 1) * below
    lhs_a = (p + n * above) / (1.0 - above)
    rhs_a = p + (n + p + 1) * above
    return bool(np.all(lhs_b < rhs_b)), bool(np.all(lhs_a >= rhs_a))


# ---------------------------------------------------------------------------
# weak type assembly and Schur sums


@dataclass(frozen=True)
class WeakTypeRecord:
    f_volume: float
    lam: float
    p: float
    eps: float
    radii_sum: float
    kappa_chain: float
    beta: float
    self_term: float
    kappa_self: float


def weak_type_assembly(decomposition, covers, p: float, eps: float) -> WeakTypeRecord:
    """Numerical pass over the superlevel counting chain.

    Compares |F| with lambda^(-p) sum_l R_l^(p eps) and with the
    self-consistency expression N (lambda^(-n) |F|)^beta, reporting the
    constants each comparison would need.
    """
    lam = decomposition.lam
    n = decomposition.e_indices.shape[1] if decomposition.e_indices.size else 1
    f_vol = decomposition.f_volume
    radii_sum = lam ** (-p) * sum(
        coll.radius ** (p * eps) for coll in covers.collections
    )
    kappa_chain = f_vol / radii_sum if radii_sum > 0 else 0.0
    depth = covers.depth
    c_exp = covers.sep_exponent
    beta = 1.0 / depth + p * eps * c_exp**depth
    self_term = depth * (lam ** (-n) * f_vol) ** beta if f_vol > 0 else 0.0
    kappa_self = f_vol / self_term if self_term > 0 else 0.0
    return WeakTypeRecord(
        f_volume=f_vol, lam=lam, p=p, eps=eps,
        radii_sum=radii_sum, kappa_chain=kappa_chain,
        beta=beta, self_term=self_term, kappa_self=kappa_self,
    )


@dataclass(frozen=True)
class SchurReport:
    max_row_sum: float
    row_sums: np.ndarray
    sparse_ok: bool
    sep_threshold_ok: bool
    strong_threshold_ok: bool


def tt_star_sparse_sum(
    centers: np.ndarray,
    radius: float,
    depth: int,
    sep_exponent: float,
    alpha_hat: float,
    r_scale: float,
    ambient_dim: int,
) -> SchurReport:
    """Schur row sums of the pairwise kernel bound
    min(1, R^(n-1) <c_j - c_k>^(-alpha)) over a ball family.

    The separation thresholds reported: the operator one needs
    C > min(2, n-1)/alpha, the stronger statement-level one
    C > min(2, n-1); only the first is required for bounded rows.
    """
    if alpha_hat <= 0:
        raise ValueError(
            "decay exponent must be positive; flat directions carry no "
            "kernel decay and need the hyperplane route instead"
        )
    from .sparse import is_sparse

    pts = np.atleast_2d(np.asarray(centers, dtype=float))
    m = pts.shape[0]
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    kernel = np.minimum(1.0, r_scale ** (ambient_dim - 1) * _bracket(dist) ** (-alpha_hat))
    np.fill_diagonal(kernel, 1.0)
    row_sums = kernel.sum(axis=1)
    sparse_ok, _ = is_sparse(pts, radius, depth, sep_exponent)
    lim = min(2, ambient_dim - 1)
    return SchurReport(
        max_row_sum=float(row_sums.max()),
        row_sums=row_sums,
        sparse_ok=bool(sparse_ok),
        sep_threshold_ok=sep_exponent > lim / alpha_hat,
        strong_threshold_ok=sep_exponent > lim,
    )


def tt_star_direct_sum(
    q_centers: np.ndarray,
    r_scale: float,
    moment: int,
    ambient_dim: int,
    truncation: int = 40,
    preset: str = "ambient",
    wave_count: Optional[int] = None,
) -> Tuple[float, np.ndarray]:
    """Row sums of the slice-lattice distance weights
    <d(pi Q_j, q')/R>^(-w) within the truncation window, plus the
    analytic tail of the series folded into every row.

    The rows live over the (n-1)-dimensional shadow lattice, so the
    weight exponent must beat the lattice dimension for the sums to
    close; the same admissibility rule as the square function applies.
    """
    w = weight_exponent(moment, ambient_dim=ambient_dim, wave_count=wave_count,
                        preset=preset)
    if w <= ambient_dim:
        raise ValueError(f"weight exponent {w:g} is not summable; raise the moment")
    pts = np.atleast_2d(np.asarray(q_centers, dtype=float))
    d = ambient_dim - 1
    offsets = np.stack(
        np.meshgrid(*[np.arange(-truncation, truncation + 1)] * d, indexing="ij"),
        axis=-1,
    ).reshape(-1, d)
    # center-to-center distance, matching the square-function weights
    gaps = np.linalg.norm(offsets.astype(float), axis=1)
    weights = _bracket(gaps) ** (-w)
    tail = 0.0
    for j in range(truncation + 1, truncation + 300):
        count = (2 * j + 1) ** d - (2 * j - 1) ** d
        tail += count * float(_bracket(np.array(float(j))) ** (-w))
    row = float(np.sum(weights)) + tail
    rows = np.full(pts.shape[0], row)
    return row, rows
