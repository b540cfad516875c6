"""Named surface presets and TOML-driven construction of families.

Polynomial patches carry exact partial-derivative oracles of every order,
which the finite-type classifier needs.  The sphere cap exposes only the
gradient and Hessian in closed form.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

from .geometry import Box, HypersurfacePatch, SubmanifoldSpec, TransversalFamily
from .profiles import Poly, poly_eval, poly_diff, poly_partial

__all__ = [
    "flat_patch",
    "paraboloid_patch",
    "monomial_patch",
    "sphere_cap_patch",
    "polynomial_patch",
    "band_submanifold",
    "load_toml",
    "patch_from_table",
    "submanifold_from_table",
    "family_from_table",
]


def default_halfwidth(dim_ambient: int, delta_geom: float = 0.25) -> float:
    """Half-width making the domain diameter exactly ``delta_geom``."""
    return delta_geom / (2.0 * math.sqrt(dim_ambient - 1))


def _real_poly(coeffs: Poly) -> Poly:
    return {tuple(a): float(np.real(c)) for a, c in coeffs.items()}


def polynomial_patch(
    coeffs: Poly,
    dim_ambient: int,
    halfwidth: Optional[float] = None,
    normal_axis: Optional[int] = None,
    delta_geom: float = 0.25,
    label: str = "polynomial",
) -> HypersurfacePatch:
    """Graph patch with polynomial phi given as an exponent dictionary.

    Constant and linear terms are rejected so the patch is normalized at
    the origin.
    """
    coeffs = _real_poly(coeffs)
    d = dim_ambient - 1
    for alpha in coeffs:
        if len(alpha) != d:
            raise ValueError("coefficient multi-indices must match the domain dimension")
        if sum(alpha) < 2 and abs(coeffs[alpha]) > 0:
            raise ValueError("normalized patches admit no constant or linear terms")
    if normal_axis is None:
        normal_axis = dim_ambient - 1
    if halfwidth is None:
        halfwidth = default_halfwidth(dim_ambient, delta_geom)
    box = Box(-halfwidth * np.ones(d), halfwidth * np.ones(d))

    grads = [poly_diff(coeffs, a) for a in range(d)]
    hesses = [[poly_diff(grads[a], b) for b in range(d)] for a in range(d)]

    def phi(pts: np.ndarray) -> np.ndarray:
        return np.real(poly_eval(coeffs, pts))

    def phi_grad(pts: np.ndarray) -> np.ndarray:
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([np.real(poly_eval(g, pts2)) for g in grads], axis=-1)

    def phi_hess(pts: np.ndarray) -> np.ndarray:
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        rows = [
            np.stack([np.real(poly_eval(hesses[a][b], pts2)) for b in range(d)], axis=-1)
            for a in range(d)
        ]
        return np.stack(rows, axis=-2)

    def phi_partial(alpha, pts: np.ndarray) -> np.ndarray:
        return np.real(poly_eval(poly_partial(coeffs, tuple(alpha)), pts))

    grid = box.uniform_grid(7 if d <= 2 else 4)
    vals = np.abs(phi(grid))
    slopes = np.linalg.norm(np.atleast_2d(phi_grad(grid)), axis=-1)
    hnorm = np.linalg.norm(phi_hess(grid).reshape(grid.shape[0], -1), axis=-1)
    smooth = float(max(np.max(vals) + np.max(slopes) + np.max(hnorm), 1.0))

    return HypersurfacePatch(
        dim_ambient=dim_ambient,
        domain=box,
        phi=phi,
        phi_grad=phi_grad,
        phi_hess=phi_hess,
        normal_axis=normal_axis,
        smooth_bound=smooth,
        phi_partial=phi_partial,
        delta_geom=delta_geom,
        flat=not any(abs(c) > 0 for c in coeffs.values()),
        label=label,
    )


def flat_patch(
    dim_ambient: int,
    halfwidth: Optional[float] = None,
    normal_axis: Optional[int] = None,
    delta_geom: float = 0.25,
) -> HypersurfacePatch:
    return polynomial_patch(
        {},
        dim_ambient,
        halfwidth=halfwidth,
        normal_axis=normal_axis,
        delta_geom=delta_geom,
        label="flat",
    )


def paraboloid_patch(
    dim_ambient: int,
    halfwidth: Optional[float] = None,
    normal_axis: Optional[int] = None,
    delta_geom: float = 0.25,
) -> HypersurfacePatch:
    d = dim_ambient - 1
    coeffs: Poly = {}
    for a in range(d):
        alpha = tuple(2 if b == a else 0 for b in range(d))
        coeffs[alpha] = 0.5
    return polynomial_patch(
        coeffs,
        dim_ambient,
        halfwidth=halfwidth,
        normal_axis=normal_axis,
        delta_geom=delta_geom,
        label="paraboloid",
    )


def monomial_patch(
    degree: int,
    dim_ambient: int = 2,
    halfwidth: float = 1.0,
    normal_axis: Optional[int] = None,
    delta_geom: Optional[float] = None,
) -> HypersurfacePatch:
    """phi = xi_1^degree, the standard finite-type model of order ``degree``."""
    if degree < 2:
        raise ValueError("monomial degree must be at least 2")
    d = dim_ambient - 1
    alpha = tuple(degree if b == 0 else 0 for b in range(d))
    if delta_geom is None:
        # Wide domains are deliberate here; the slope bound scales with them.
        delta_geom = max(0.25, 2.0 * halfwidth * math.sqrt(d) + degree * halfwidth ** (degree - 1))
    return polynomial_patch(
        {alpha: 1.0},
        dim_ambient,
        halfwidth=halfwidth,
        normal_axis=normal_axis,
        delta_geom=delta_geom,
        label=f"monomial-{degree}",
    )


def sphere_cap_patch(
    radius: float,
    dim_ambient: int,
    halfwidth: Optional[float] = None,
    normal_axis: Optional[int] = None,
    delta_geom: float = 0.25,
) -> HypersurfacePatch:
    """Inner-normalized spherical cap: phi = radius - sqrt(radius^2 - |xi|^2)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = dim_ambient - 1
    if normal_axis is None:
        normal_axis = dim_ambient - 1
    if halfwidth is None:
        halfwidth = default_halfwidth(dim_ambient, delta_geom)
    if halfwidth * math.sqrt(d) >= radius:
        raise ValueError("domain too wide for the cap radius")
    box = Box(-halfwidth * np.ones(d), halfwidth * np.ones(d))

    def phi(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        r2 = np.sum(np.atleast_2d(pts) ** 2, axis=-1)
        return radius - np.sqrt(radius**2 - r2)

    def phi_grad(pts: np.ndarray) -> np.ndarray:
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        s = np.sqrt(radius**2 - np.sum(pts2**2, axis=-1))
        return pts2 / s[..., None]

    def phi_hess(pts: np.ndarray) -> np.ndarray:
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        s = np.sqrt(radius**2 - np.sum(pts2**2, axis=-1))
        eye = np.eye(d)
        outer = pts2[..., :, None] * pts2[..., None, :]
        return eye / s[..., None, None] + outer / (s**3)[..., None, None]

    smooth = float(radius + 2.0 / radius + 1.0)
    return HypersurfacePatch(
        dim_ambient=dim_ambient,
        domain=box,
        phi=phi,
        phi_grad=phi_grad,
        phi_hess=phi_hess,
        normal_axis=normal_axis,
        smooth_bound=smooth,
        phi_partial=None,
        delta_geom=delta_geom,
        flat=False,
        label="sphere-cap",
    )


def band_submanifold(
    patch: HypersurfacePatch,
    codim: int,
    mu: float = 0.0,
    graph_coeffs: Optional[Sequence[Poly]] = None,
) -> SubmanifoldSpec:
    """Graph submanifold of the patch domain with polynomial components.

    No coefficients means the flat graph xi'' = 0.
    """
    if codim == 0:
        return SubmanifoldSpec(patch=patch, codim=0, mu=mu)
    m = patch.dim_domain - codim
    if graph_coeffs is None:
        graph_coeffs = [dict() for _ in range(codim)]
    comps = [_real_poly(c) for c in graph_coeffs]
    if len(comps) != codim:
        raise ValueError("need one coefficient table per graph component")
    jacs = [[poly_diff(c, a) for a in range(m)] for c in comps]

    def graph_map(u: np.ndarray) -> np.ndarray:
        u2 = np.atleast_2d(np.asarray(u, dtype=float))
        return np.stack([np.real(poly_eval(c, u2)) for c in comps], axis=-1)

    def graph_jac(u: np.ndarray) -> np.ndarray:
        u2 = np.atleast_2d(np.asarray(u, dtype=float))
        rows = [
            np.stack([np.real(poly_eval(jacs[i][a], u2)) for a in range(m)], axis=-1)
            for i in range(codim)
        ]
        return np.stack(rows, axis=-2)

    return SubmanifoldSpec(
        patch=patch, codim=codim, graph_map=graph_map, graph_jac=graph_jac, mu=mu
    )


def load_toml(path: str) -> dict:
    with open(path, "rb") as fh:
        return _toml.load(fh)


def _parse_poly_table(table: Dict[str, float], dim: int) -> Poly:
    out: Poly = {}
    for key, coeff in table.items():
        alpha = tuple(int(tok) for tok in key.replace(",", " ").split())
        if len(alpha) != dim:
            raise ValueError(f"exponent key '{key}' does not match dimension {dim}")
        out[alpha] = float(coeff)
    return out


def patch_from_table(table: dict) -> HypersurfacePatch:
    preset = table.get("preset", "polynomial")
    n = int(table.get("dim_ambient", 3))
    kwargs = {
        "halfwidth": table.get("halfwidth"),
        "normal_axis": table.get("normal_axis"),
    }
    delta = table.get("delta_geom")
    if preset == "flat":
        return flat_patch(n, delta_geom=delta or 0.25, **kwargs)
    if preset == "paraboloid":
        return paraboloid_patch(n, delta_geom=delta or 0.25, **kwargs)
    if preset == "monomial":
        return monomial_patch(
            int(table.get("l", 2)),
            n,
            halfwidth=float(table.get("halfwidth", 1.0)),
            normal_axis=table.get("normal_axis"),
            delta_geom=delta,
        )
    if preset == "sphere-cap":
        return sphere_cap_patch(
            float(table.get("radius", 2.0)), n, delta_geom=delta or 0.25, **kwargs
        )
    if preset == "polynomial":
        coeffs = _parse_poly_table(table.get("phi", {}), n - 1)
        return polynomial_patch(coeffs, n, delta_geom=delta or 0.25, **kwargs)
    raise ValueError(f"unknown surface preset '{preset}'")


def submanifold_from_table(table: dict, patch: HypersurfacePatch) -> SubmanifoldSpec:
    codim = int(table.get("codim", 0))
    mu = float(table.get("mu", 0.0))
    graph = table.get("graph")
    coeffs = None
    if graph is not None and codim > 0:
        m = patch.dim_domain - codim
        coeffs = [
            _parse_poly_table(graph.get(f"c{i}", {}), m) for i in range(codim)
        ]
    return band_submanifold(patch, codim, mu=mu, graph_coeffs=coeffs)


def family_from_table(config: dict, samples_per_surface: int = 9) -> TransversalFamily:
    tables = config.get("surfaces")
    if not tables:
        raise ValueError("config needs a [[surfaces]] array")
    specs = []
    for t in tables:
        patch = patch_from_table(t)
        sub = submanifold_from_table(t.get("submanifold", {}), patch)
        specs.append(sub)
    return TransversalFamily.build(specs, samples_per_surface=samples_per_surface)
