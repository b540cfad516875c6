"""Exact brute-force checks of discrete product-projection inequalities.

The setting: k functions g_i on integer index tuples, each blind to one
distinct global coordinate.  The product z -> prod_i g_i(z with axis i
dropped) obeys an l^{2/(k-1)} bound by the product of l^2 norms with
constant 1, and a refinement where each g_i is measured in l^2 over its
shared axes and l^infty over a private block.  Everything here is dense
evaluation on small boxes, summed compensated so p < 1 powers stay
trustworthy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "LatticeFunction",
    "lattice_function",
    "random_lattice_function",
    "lw_ratio",
    "l2linf_norm",
    "lw_refined_ratio",
    "holder_chain_check",
    "ChainStep",
    "ChainReport",
    "near_extremizer_probe",
]

KAPPA_LW = 1.0 + 1e-9


@dataclass(frozen=True)
class LatticeFunction:
    """Nonnegative table over an integer index box.

    ``axes`` names the global coordinates the function depends on;
    ``lo`` is the inclusive lower index corner; ``split`` partitions the
    axes into (shared, private) blocks for the mixed norm.
    """

    axes: Tuple[int, ...]
    lo: Tuple[int, ...]
    values: np.ndarray
    split: Tuple[Tuple[int, ...], Tuple[int, ...]]

    def __post_init__(self) -> None:
        if tuple(sorted(self.axes)) != self.axes:
            raise ValueError("axes must be sorted")
        if len(self.lo) != len(self.axes):
            raise ValueError("lo must give one corner index per axis")
        if self.values.ndim != len(self.axes):
            raise ValueError("values rank must match the axis count")
        prime, private = self.split
        if tuple(sorted(prime + private)) != self.axes:
            raise ValueError("split must partition the axes")
        if np.any(self.values < 0):
            raise ValueError("values must be nonnegative")
        self.values.setflags(write=False)

    @property
    def hi(self) -> Tuple[int, ...]:
        return tuple(l + s - 1 for l, s in zip(self.lo, self.values.shape))

    def range_of(self, axis: int) -> Tuple[int, int]:
        j = self.axes.index(axis)
        return self.lo[j], self.hi[j]

    def l2_norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values.reshape(-1)))


def lattice_function(
    axes: Sequence[int],
    lo: Sequence[int],
    values: np.ndarray,
    private_axes: Sequence[int] = (),
) -> LatticeFunction:
    axes = tuple(int(a) for a in axes)
    private = tuple(sorted(int(a) for a in private_axes))
    if any(a not in axes for a in private):
        raise ValueError("private axes must be among the function's axes")
    prime = tuple(a for a in axes if a not in private)
    vals = np.asarray(values, dtype=float)
    if np.iscomplexobj(values):
        vals = np.abs(np.asarray(values))
    return LatticeFunction(
        axes=axes,
        lo=tuple(int(v) for v in lo),
        values=np.abs(vals),
        split=(prime, private),
    )


def random_lattice_function(
    axes: Sequence[int],
    sizes: Sequence[int],
    seed: int,
    private_axes: Sequence[int] = (),
    sparsity: float = 0.0,
) -> LatticeFunction:
    rng = np.random.default_rng(seed)
    vals = rng.random(tuple(int(s) for s in sizes))
    if sparsity > 0:
        vals *= rng.random(vals.shape) > sparsity
    return lattice_function(axes, [0] * len(list(axes)), vals, private_axes)


def _global_setup(functions: Sequence[LatticeFunction]) -> Tuple[Tuple[int, ...], Dict[int, int]]:
    """All global axes, and the axis each function is blind to."""
    if len(functions) < 2:
        raise ValueError("need at least two functions")
    union = sorted(set().union(*(set(g.axes) for g in functions)))
    missing = {}
    for idx, g in enumerate(functions):
        gone = [a for a in union if a not in g.axes]
        if len(gone) != 1:
            raise ValueError("each function must omit exactly one global axis")
        missing[idx] = gone[0]
    if len(set(missing.values())) != len(functions):
        raise ValueError("omitted axes must be pairwise distinct")
    return tuple(union), missing


def _box_ranges(
    functions: Sequence[LatticeFunction],
    axes: Tuple[int, ...],
    box: Optional[Tuple[Sequence[int], Sequence[int]]],
) -> List[Tuple[int, int]]:
    ranges = []
    for j, a in enumerate(axes):
        lo, hi = -(2**40), 2**40
        for g in functions:
            if a in g.axes:
                glo, ghi = g.range_of(a)
                lo, hi = max(lo, glo), min(hi, ghi)
        if box is not None:
            lo, hi = max(lo, int(box[0][j])), min(hi, int(box[1][j]))
        ranges.append((lo, hi))
    return ranges


def _embed(
    g: LatticeFunction, axes: Tuple[int, ...], ranges: List[Tuple[int, int]]
) -> np.ndarray:
    """Dense restriction of g to the box, broadcast over its blind axis."""
    shape = []
    own_slices = []
    box_slices = []
    blind_dims = []
    for j, (a, (lo, hi)) in enumerate(zip(axes, ranges)):
        extent = hi - lo + 1
        if a in g.axes:
            shape.append(extent)
            glo, ghi = g.range_of(a)
            s_lo, s_hi = max(lo, glo), min(hi, ghi)
            own_slices.append(slice(s_lo - glo, s_hi - glo + 1))
            box_slices.append(slice(s_lo - lo, s_hi - lo + 1))
        else:
            shape.append(1)
            box_slices.append(slice(0, 1))
            blind_dims.append(j)
    out = np.zeros(shape)
    block = g.values[tuple(own_slices)]
    out[tuple(box_slices)] = np.expand_dims(block, tuple(blind_dims))
    return out


def _quasinorm(flat: np.ndarray, p: float) -> float:
    # fsum keeps p < 1 power sums reproducible and rounding-safe
    total = math.fsum(float(v) ** p for v in flat if v > 0)
    return total ** (1.0 / p)


def lw_ratio(
    functions: Sequence[LatticeFunction],
    frame: Optional[object] = None,
    box: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
) -> Tuple[float, float, float]:
    """Left side, right side, and ratio of the product-projection bound.

    lhs is the l^{2/(k-1)} quasi-norm of prod_i g_i over the index box,
    rhs the product of box-restricted l^2 norms.  A zero rhs with zero
    lhs reports ratio 0.
    """
    axes, _ = _global_setup(functions)
    ranges = _box_ranges(functions, axes, box)
    if any(hi < lo for lo, hi in ranges):
        raise ValueError("empty index box")
    k = len(functions)
    p = 2.0 / (k - 1)
    embedded = [_embed(g, axes, ranges) for g in functions]
    product = embedded[0].copy()
    for e in embedded[1:]:
        product = product * e
    lhs = _quasinorm(product.reshape(-1), p)
    rhs = 1.0
    for e in embedded:
        rhs *= math.sqrt(math.fsum(float(v) ** 2 for v in e.reshape(-1)))
    ratio = 0.0 if rhs == 0.0 and lhs == 0.0 else lhs / rhs
    return lhs, rhs, ratio


def l2linf_norm(g: LatticeFunction) -> float:
    """(sum over shared axes of sup over private axes squared)^(1/2)."""
    prime, private = g.split
    if g.values.size == 0:
        return 0.0
    if not private:
        return g.l2_norm()
    sup_dims = tuple(g.axes.index(a) for a in private)
    reduced = np.max(g.values, axis=sup_dims)
    return math.sqrt(math.fsum(float(v) ** 2 for v in reduced.reshape(-1)))


def lw_refined_ratio(
    functions: Sequence[LatticeFunction],
    frame: Optional[object] = None,
    box: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
) -> float:
    """lhs as lw_ratio over rhs = product of mixed l^2 l^infty norms."""
    axes, missing = _global_setup(functions)
    k = len(functions)
    dropped = set(missing.values())
    seen_private: set = set()
    total_private = 0
    for g in functions:
        _, private = g.split
        total_private += len(private)
        for a in private:
            if a in dropped:
                raise ValueError("private axes must avoid the omitted block")
            if a in seen_private:
                raise ValueError("private axes must be disjoint across functions")
            seen_private.add(a)
    if total_private > len(axes) - k:
        raise ValueError("too many private axes for the ambient dimension")
    lhs, _, _ = lw_ratio(functions, frame, box)
    rhs = 1.0
    for g in functions:
        rhs *= l2linf_norm(g)
    return 0.0 if rhs == 0.0 and lhs == 0.0 else lhs / rhs


@dataclass(frozen=True)
class ChainStep:
    name: str
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0 and self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs


@dataclass(frozen=True)
class ChainReport:
    steps: Tuple[ChainStep, ...]

    @property
    def max_ratio(self) -> float:
        return max(s.ratio for s in self.steps)

    def holds(self, slack: float = 1e-12) -> bool:
        return all(s.ratio <= 1.0 + slack for s in self.steps)


def holder_chain_check(
    functions: Sequence[LatticeFunction],
    box: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
    tail_axes: Sequence[int] = (),
) -> ChainReport:
    """Evaluate every intermediate inequality of the refined bound.

    Blocks: the omitted axes form the z' block, declared tail axes the
    z''' block, everything else the z'' block (which contains all the
    private axes).  Steps recorded:

      slice-holder   per fixed (z', z''') the z''-block quasi-norm of the
                     product against the product of per-function mixed
                     norms
      core-lw        per fixed z''', the z'-block reduction against the
                     product of l^2 norms of the slice majorants
      tail-holder    the l^{2/k} combination over z''' against the
                     product of full mixed norms
      embedding      the full l^{2/(k-1)} quasi-norm against the mixed
                     l^{2/k}(z''') l^{2/(k-1)}(z', z'') norm
    """
    axes, missing = _global_setup(functions)
    ranges = _box_ranges(functions, axes, box)
    if any(hi < lo for lo, hi in ranges):
        raise ValueError("empty index box")
    k = len(functions)
    p = 2.0 / (k - 1)
    n = len(axes)
    core = tuple(sorted(missing.values()))
    tail = tuple(sorted(int(a) for a in tail_axes))
    privates = set()
    for g in functions:
        privates.update(g.split[1])
    if privates & set(tail) or privates & set(core):
        raise ValueError("private axes must lie in the z'' block")
    middle = tuple(a for a in axes if a not in core and a not in tail)

    pos = {a: j for j, a in enumerate(axes)}
    core_d = tuple(pos[a] for a in core)
    tail_d = tuple(pos[a] for a in tail)
    mid_d = tuple(pos[a] for a in middle)

    embedded = [_embed(g, axes, ranges) for g in functions]
    product = embedded[0].copy()
    for e in embedded[1:]:
        product = product * e

    # reorder to (core, middle, tail); the product has full extents,
    # each embedded factor keeps size 1 on its blind axis
    perm = core_d + mid_d + tail_d
    nc, nm = len(core_d), len(mid_d)
    prod_t = np.transpose(product, perm)
    c_shape = prod_t.shape[:nc]
    t_shape = prod_t.shape[nc + nm:]
    csz = int(np.prod(c_shape)) if c_shape else 1
    tsz = int(np.prod(t_shape)) if t_shape else 1
    prod_f = prod_t.reshape(csz, -1, tsz)

    # slice majorants: sup over each function's private middle axes,
    # keepdims so no entry is ever double-counted in the l^2 sums
    majorants = []
    for g, e in zip(functions, embedded):
        et = np.transpose(e, perm)
        sup_dims = tuple(nc + mid_d.index(pos[a]) for a in sorted(g.split[1]))
        h = np.max(et, axis=sup_dims, keepdims=True) if sup_dims else et
        majorants.append(h)

    def _best(pairs):
        top = (0.0, 0.0)
        for a_val, b_val in pairs:
            if a_val == 0.0:
                continue
            if top[1] == 0.0 or a_val * top[1] > top[0] * b_val:
                top = (a_val, b_val)
        return top

    # step 1: fixed (z', z'''), z''-block quasi-norm of the product vs
    # the product of shared-middle l^2 norms of the majorants
    pairs1 = []
    for ci_multi in np.ndindex(*c_shape) if c_shape else [()]:
        for ti_multi in np.ndindex(*t_shape) if t_shape else [()]:
            ci = int(np.ravel_multi_index(ci_multi, c_shape)) if c_shape else 0
            ti = int(np.ravel_multi_index(ti_multi, t_shape)) if t_shape else 0
            a_val = _quasinorm(prod_f[ci, :, ti], p)
            b_val = 1.0
            for h in majorants:
                idx = tuple(
                    min(j, s - 1) for j, s in zip(ci_multi, h.shape[:nc])
                ) + (slice(None),) * nm + tuple(
                    min(j, s - 1) for j, s in zip(ti_multi, h.shape[nc + nm:])
                )
                b_val *= math.sqrt(
                    math.fsum(float(v) ** 2 for v in h[idx].reshape(-1))
                )
            pairs1.append((a_val, b_val))
    step1 = ChainStep("slice-holder", *_best(pairs1))

    # step 2: per fixed z''', quasi-norm over (z', z'') vs the product of
    # l^2 norms of the majorants over their (core minus own, shared
    # middle) axes
    pairs2 = []
    per_tail_lhs = np.zeros(tsz)
    for ti_multi in np.ndindex(*t_shape) if t_shape else [()]:
        ti = int(np.ravel_multi_index(ti_multi, t_shape)) if t_shape else 0
        lhs2 = _quasinorm(prod_f[:, :, ti].reshape(-1), p)
        rhs2 = 1.0
        for h in majorants:
            idx = (slice(None),) * (nc + nm) + tuple(
                min(j, s - 1) for j, s in zip(ti_multi, h.shape[nc + nm:])
            )
            rhs2 *= math.sqrt(
                math.fsum(float(v) ** 2 for v in h[idx].reshape(-1))
            )
        per_tail_lhs[ti] = lhs2
        pairs2.append((lhs2, rhs2))
    step2 = ChainStep("core-lw", *_best(pairs2))

    # step 3: l^{2/k} over z''' of the per-tail quasi-norms vs product of
    # full mixed norms
    q = 2.0 / k
    mixed_tail = _quasinorm(per_tail_lhs, q)
    rhs3 = 1.0
    for g in functions:
        rhs3 *= l2linf_norm(_restrict(g, axes, ranges))
    step3 = ChainStep("tail-holder", mixed_tail, rhs3)

    # step 4: full quasi-norm vs the mixed l^{2/k}(z''') l^{2/(k-1)} norm
    total = _quasinorm(prod_f.reshape(-1), p)
    step4 = ChainStep("embedding", total, mixed_tail)

    return ChainReport(steps=(step1, step2, step3, step4))


def _restrict(
    g: LatticeFunction, axes: Tuple[int, ...], ranges: List[Tuple[int, int]]
) -> LatticeFunction:
    slices = []
    new_lo = []
    for a in g.axes:
        lo, hi = ranges[axes.index(a)]
        glo, ghi = g.range_of(a)
        s_lo, s_hi = max(lo, glo), min(hi, ghi)
        if s_hi < s_lo:
            s_lo, s_hi = glo, glo - 1
        slices.append(slice(s_lo - glo, s_hi - glo + 1))
        new_lo.append(s_lo)
    vals = g.values[tuple(slices)]
    return LatticeFunction(g.axes, tuple(new_lo), vals.copy(), g.split)


def near_extremizer_probe(
    functions: Sequence[LatticeFunction],
    seed: int,
    steps: int = 200,
    refined: bool = False,
) -> float:
    """Coordinate-ascent probe for large ratios near a starting instance.

    Multiplies single entries by random factors, keeping changes that
    increase the ratio.  Returns the best ratio found.
    """
    rng = np.random.default_rng(seed)
    current = [g.values.copy() for g in functions]

    def ratio_of(tables: List[np.ndarray]) -> float:
        rebuilt = [
            LatticeFunction(g.axes, g.lo, t.copy(), g.split)
            for g, t in zip(functions, tables)
        ]
        if refined:
            return lw_refined_ratio(rebuilt)
        return lw_ratio(rebuilt)[2]

    best = ratio_of(current)
    for _ in range(steps):
        i = int(rng.integers(len(current)))
        idx = tuple(int(rng.integers(s)) for s in current[i].shape)
        factor = float(np.exp(rng.normal(0.0, 0.5)))
        trial = [t.copy() for t in current]
        trial[i][idx] = max(trial[i][idx] * factor, 1e-12)
        r = ratio_of(trial)
        if r > best:
            best = r
            current = trial
    return best
