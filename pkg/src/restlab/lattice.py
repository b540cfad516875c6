"""Cube lattices, hyperplane projections, and band-limited bump partitions.

Frequency is measured in cycles throughout this module: the transform
pairing is chi_hat(nu) = integral chi(y) exp(-2 pi i nu y) dy.  Nonzero
Poisson modes of a unit lattice sum then sit at integer nu, so any
profile whose spectrum stays inside the open unit ball sums to exactly 1
over the lattice; truncation of the sum is the only error source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "BumpProfile",
    "CubeLattice",
    "BumpFamily",
    "PartitionReport",
    "cubes_covering",
    "project_cube",
    "project_lattice_split",
    "cube_distance",
    "set_distance",
    "partition_check",
    "bump_spectrum_check",
    "weighted_orthogonality_check",
]

DEFAULT_ORDER = 8
DEFAULT_TRUNCATION = 20
FRAME_TOL = 1e-12

# cap on enumerated cubes in covers and lattice sums
MAX_CUBES = 4_000_000


@lru_cache(maxsize=32)
def _gl_nodes(count: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(count)
    return x, w


@dataclass(frozen=True)
class BumpProfile:
    """One-dimensional band-limited bump chi1 = psi^2 / ||psi||^2.

    psi has spectrum (1 - (nu/band)^2)_+^(order+1) supported on
    [-band, band] in cycles, so chi1 has spectrum in [-2*band, 2*band],
    is nonnegative, and integrates to exactly 1.
    """

    order: int = DEFAULT_ORDER
    band: float = 0.5

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ValueError("profile order must be nonnegative")
        if not 0 < self.band <= 0.5:
            raise ValueError("band must lie in (0, 1/2]")

    @property
    def psi_norm_sq(self) -> float:
        """Exact ||psi||_2^2 via the spectral side (Parseval, cycles)."""
        q = 2 * self.order + 2
        return self.band * math.sqrt(math.pi) * math.gamma(q + 1) / math.gamma(q + 1.5)

    def _node_count(self, y_max: float) -> int:
        lam = 2.0 * math.pi * self.band * max(y_max, 1.0)
        return int(min(max(lam / 2 + 3 * (self.order + 1) + 25, 40), 4000))

    def psi(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        nodes, weights = _gl_nodes(self._node_count(float(np.max(np.abs(y), initial=0.0))))
        poly = (1.0 - nodes**2) ** (self.order + 1) * weights
        phase = 2.0 * math.pi * self.band * y[..., None] * nodes
        return self.band * np.cos(phase) @ poly

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.psi(y) ** 2 / self.psi_norm_sq

    def spectrum(self, nu: np.ndarray, window: float = 80.0, step: float = 0.125) -> np.ndarray:
        """Transform of chi1 at cycle frequencies nu by long-window trapezoid."""
        ys = np.arange(-window, window + step / 2, step)
        vals = self.value(ys)
        nu = np.asarray(nu, dtype=float)
        kernel = np.cos(2.0 * math.pi * nu[..., None] * ys)
        return step * kernel @ vals


def _as_frame(dim: int, frame: Optional[np.ndarray]) -> np.ndarray:
    if frame is None:
        return np.eye(dim)
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (dim, dim):
        raise ValueError("frame must be a square matrix matching the dimension")
    if np.max(np.abs(frame @ frame.T - np.eye(dim))) > 1e-10:
        raise ValueError("frame rows must be orthonormal")
    return frame


@dataclass(frozen=True)
class CubeLattice:
    """Axis cubes of side ``scale`` in an orthonormal frame.

    Cube with index j covers the frame-coordinate box
    prod_d [scale*(j_d - 1/2), scale*(j_d + 1/2)]; its center is
    scale*j pulled back through the frame.  ``splits`` optionally stores,
    per distinguished axis i, the partition of the remaining coordinates
    into a leading block and a trailing block used by the refined
    lattice inequalities.
    """

    dim: int
    scale: float
    frame: Optional[np.ndarray] = None
    splits: Optional[Dict[int, Tuple[Tuple[int, ...], Tuple[int, ...]]]] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "frame", _as_frame(self.dim, self.frame))
        self.frame.setflags(write=False)
        if self.splits is not None:
            for i, (prime, dpp) in self.splits.items():
                rest = set(range(self.dim)) - {i}
                if set(prime) | set(dpp) != rest or set(prime) & set(dpp):
                    raise ValueError(f"split for axis {i} must partition the other axes")

    def to_frame(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.frame.T

    def from_frame(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.frame

    def cube_center(self, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=float)
        return self.from_frame(self.scale * idx)

    def point_index(self, x: np.ndarray) -> np.ndarray:
        """Index of the cube holding each point; boundary ties go to the
        smaller index."""
        u = self.to_frame(np.atleast_2d(np.asarray(x, dtype=float)))
        return np.ceil(u / self.scale - 0.5).astype(np.int64)


def cubes_covering(lattice: CubeLattice, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Minimal set of closed lattice cubes covering the closed box [lo, hi].

    For a rotated frame the box is replaced by its frame-coordinate
    bounding box, so the cover remains correct but can lose minimality.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != (lattice.dim,) or hi.shape != (lattice.dim,):
        raise ValueError("region bounds must match the lattice dimension")
    if np.any(hi < lo):
        raise ValueError("region must satisfy lo <= hi")
    corners = np.stack(
        np.meshgrid(*[[lo[d], hi[d]] for d in range(lattice.dim)], indexing="ij"), axis=-1
    ).reshape(-1, lattice.dim)
    u = lattice.to_frame(corners)
    ulo, uhi = u.min(axis=0), u.max(axis=0)
    r = lattice.scale
    b = np.ceil(uhi / r - 0.5).astype(np.int64)
    a = np.minimum(np.floor(ulo / r + 0.5).astype(np.int64), b)
    counts = b - a + 1
    total = int(np.prod(counts.astype(np.float64)))
    if total > MAX_CUBES:
        raise ValueError(f"cover needs {total} cubes, above the {MAX_CUBES} cap")
    axes = [np.arange(a[d], b[d] + 1, dtype=np.int64) for d in range(lattice.dim)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lattice.dim)


def project_cube(
    lattice: CubeLattice, indices: np.ndarray, axis: int
) -> Tuple[CubeLattice, np.ndarray]:
    """Drop the given frame coordinate: the hyperplane lattice and the
    projected indices."""
    if not 0 <= axis < lattice.dim:
        raise ValueError(f"axis {axis} out of range for dimension {lattice.dim}")
    if lattice.dim == 1:
        raise ValueError("cannot project a one-dimensional lattice")
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    keep = [d for d in range(lattice.dim) if d != axis]
    sub = CubeLattice(lattice.dim - 1, lattice.scale, frame=None, splits=None)
    return sub, idx[:, keep]


def project_lattice_split(
    lattice: CubeLattice, indices: np.ndarray, axis: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Split the projected index into its leading and trailing blocks."""
    if lattice.splits is None or axis not in lattice.splits:
        raise ValueError(f"lattice declares no split for axis {axis}")
    prime, dpp = lattice.splits[axis]
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    return idx[:, list(prime)], idx[:, list(dpp)]


def cube_distance(lattice: CubeLattice, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise distances between closed cubes, exact for lattice cubes.

    Per frame axis the gap is scale*max(|dj| - 1, 0); the distance is the
    Euclidean combination of the per-axis gaps.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.int64))
    b = np.atleast_2d(np.asarray(b, dtype=np.int64))
    gaps = np.maximum(np.abs(a[:, None, :] - b[None, :, :]) - 1, 0) * lattice.scale
    return np.linalg.norm(gaps.astype(float), axis=-1)


def set_distance(lattice: CubeLattice, a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two cube unions as subsets."""
    return float(np.min(cube_distance(lattice, a, b)))


@dataclass(frozen=True)
class BumpFamily:
    """Translated bumps chi_q(x) = chi0((x - c(q))/scale) over a lattice.

    chi0 is the tensor power of a one-dimensional profile whose per-axis
    band is 1/(2 sqrt(dim)) cycles, so the spectrum of chi0 sits inside
    the Euclidean unit ball in cycle frequency and chi_q inside the ball
    of radius 1/scale.
    """

    lattice: CubeLattice
    order: int = DEFAULT_ORDER
    profile: BumpProfile = field(init=False)

    def __post_init__(self) -> None:
        band = 0.5 / math.sqrt(self.lattice.dim)
        object.__setattr__(self, "profile", BumpProfile(order=self.order, band=band))

    @property
    def fourier_radius(self) -> float:
        return 1.0 / self.lattice.scale

    def scaled_offsets(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.lattice.to_frame(pts) / self.lattice.scale

    def bump_evaluate(self, indices: np.ndarray, points: np.ndarray) -> np.ndarray:
        """chi_q at the given points, one row per cube index."""
        idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        u = self.scaled_offsets(points)
        out = np.ones((idx.shape[0], u.shape[0]))
        for d in range(self.lattice.dim):
            out *= self.profile.value(u[None, :, d] - idx[:, d, None])
        return out


@dataclass(frozen=True)
class PartitionReport:
    max_deviation: float
    deviations: np.ndarray
    truncation: int


def partition_check(
    family: BumpFamily, points: np.ndarray, truncation: int = DEFAULT_TRUNCATION
) -> PartitionReport:
    """Deviation of the truncated lattice bump sum from 1 at each point.

    The sum runs over cubes whose index is within ``truncation`` of the
    point in every frame coordinate, which factorizes the tensor bump sum
    into per-axis sums.
    """
    if truncation < 1:
        raise ValueError("truncation must be at least 1")
    u = family.scaled_offsets(points)
    total = np.ones(u.shape[0])
    shifts = np.arange(-truncation, truncation + 1)
    # block the points so the profile quadrature stays within memory
    block = max(1, 2_000_000 // (2 * truncation + 1))
    for d in range(family.lattice.dim):
        base = np.round(u[:, d])
        for start in range(0, u.shape[0], block):
            stop = start + block
            offsets = u[start:stop, d, None] - (base[start:stop, None] + shifts[None, :])
            total[start:stop] *= np.sum(family.profile.value(offsets), axis=1)
    dev = np.abs(total - 1.0)
    return PartitionReport(float(np.max(dev)), dev, truncation)


def bump_spectrum_check(
    family: BumpFamily, margin: float = 1e-9, window: float = 80.0
) -> float:
    """Max spectral magnitude of the profile beyond its band edge,
    relative to the zero-frequency peak.

    The per-axis profile determines the tensor spectrum, so the check is
    one-dimensional.  The declared chi0 band edge per axis is twice the
    psi band.
    """
    edge = 2.0 * family.profile.band
    peak = float(family.profile.spectrum(np.zeros(1), window=window)[0])
    nus = edge * (1.0 + margin) + np.linspace(0.0, 2.0, 257)
    leak = np.abs(family.profile.spectrum(nus, window=window))
    return float(np.max(leak) / peak)


def weighted_orthogonality_check(
    family: BumpFamily,
    points: np.ndarray,
    values: np.ndarray,
    cell_volume: float,
    weight_power: int,
    truncation: int = DEFAULT_TRUNCATION,
) -> float:
    """Ratio sum_q ||<(x-c(q))/r>^N chi_q g||_2^2 / ||g||_2^2.

    ``points`` is a uniform evaluation grid carrying one Riemann cell of
    volume ``cell_volume`` per point; a hyperplane variant is obtained by
    passing a lattice of the reduced dimension.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(values)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError("values must align with points")
    g_sq = float(np.sum(np.abs(vals) ** 2) * cell_volume)
    if g_sq == 0.0:
        return 0.0
    u = family.scaled_offsets(pts)
    lo = np.floor(u.min(axis=0)).astype(np.int64) - truncation
    hi = np.ceil(u.max(axis=0)).astype(np.int64) + truncation
    counts = hi - lo + 1
    total_cubes = int(np.prod(counts.astype(np.float64)))
    if total_cubes > MAX_CUBES:
        raise ValueError(f"lattice sum needs {total_cubes} cubes, above the cap")
    axes = [np.arange(lo[d], hi[d] + 1) for d in range(family.lattice.dim)]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, family.lattice.dim)
    acc = 0.0
    chunk = max(1, MAX_CUBES // (8 * max(pts.shape[0], 1)))
    mod_sq = np.abs(vals) ** 2
    for start in range(0, idx.shape[0], chunk):
        block = idx[start : start + chunk]
        offs = u[None, :, :] - block[:, None, :].astype(float)
        weight = 1.0 + np.sum(offs**2, axis=-1)
        bump = np.ones((block.shape[0], pts.shape[0]))
        for d in range(family.lattice.dim):
            bump *= family.profile.value(offs[..., d])
        acc += float(np.sum(weight**weight_power * bump**2 @ mod_sq) * cell_volume)
    return acc / g_sq
