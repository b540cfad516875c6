"""Batch experiment runner.

Subcommands wrap the library modules for scripted runs: each parses its
flags (plus an optional TOML config), validates before any computation
starts, fans independent trials over a bounded worker pool, reduces in
fixed order, and writes CSV through a single writer so reruns with the
same seed produce byte-identical files.  A JSON manifest (config echo,
package version, wall time) accompanies every output.

Exit codes: 0 success, 1 invalid configuration, 2 resolution refusal
(the requested evaluation exceeds what the grids resolve), 3 numeric
failure with a diagnostic.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .discrete_lw import (
    holder_chain_check,
    lw_ratio,
    lw_refined_ratio,
    random_lattice_function,
)
from .experiments import (
    ConstantLedger,
    GainCurve,
    best_constant_estimate,
    eps_removal_exponent,
    exponent_chain_check,
    localization_gain_curve,
    recursion_check,
)
from .geometry import check_transversality, finite_type_order
from .lattice import BumpFamily, CubeLattice, bump_spectrum_check, partition_check
from .oscillation import (
    DecayEstimate,
    ResolutionError,
    decay_fit,
    density_from_profile,
    geometric_radii,
)
from .presets import (
    family_from_table,
    flat_patch,
    load_toml,
    monomial_patch,
    paraboloid_patch,
    sphere_cap_patch,
)
from .profiles import BumpPolyProfile
from .sparse import coverage_check, is_sparse, sparse_cover

__all__ = [
    "PlotData",
    "emit_plot_data",
    "parse_plot_data",
    "write_plot_csv",
    "run",
    "main",
]


class _NumericFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; here 2 means a resolution
    # refusal, so steer bad flags to the invalid-config code instead
    def error(self, message: str) -> None:
        raise _ConfigError(message)


class _ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# output plumbing


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        # plain-float repr is the shortest exact round-trip form
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(
    primary: Path, args: argparse.Namespace, config: dict, outputs: List[Path], t0: float
) -> None:
    doc = {
        "tool": "restlab",
        "version": __version__,
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", 1),
        "outputs": [p.name for p in outputs],
        "wall_time_s": round(time.time() - t0, 3),
    }
    with open(primary.with_suffix(primary.suffix + ".manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _pool_map(fn, items: Sequence, jobs: int) -> List:
    """Apply fn across items on at most ``jobs`` workers, results in
    input order regardless of completion order."""
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _say(args: argparse.Namespace, text: str) -> None:
    if args.verbose:
        print(text, file=sys.stderr)


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise _NumericFailure(f"{name} produced a non-finite value ({v!r})")


# ---------------------------------------------------------------------------
# plot-data emission


@dataclass(frozen=True)
class PlotData:
    """Five-column plot table: ordinate band plus a reference slope."""

    x: Tuple[float, ...]
    y: Tuple[float, ...]
    y_lo: Tuple[float, ...]
    y_hi: Tuple[float, ...]
    reference_slope: float


PLOT_HEADER = ("x", "y", "y_lo", "y_hi", "reference_slope")


def emit_plot_data(obj, style: str) -> PlotData:
    """Flatten a sweep result into plotting columns.

    ``localization`` takes a gain curve: x is the mu ladder, the band is
    the even/odd half-run estimates, and the reference slope is c/2.
    ``growth`` takes a constant ledger: x is R, degenerate band.
    ``decay`` takes (estimate, type_order): x is the radius, reference
    slope 1/l.
    """
    if style == "localization":
        if not isinstance(obj, GainCurve):
            raise ValueError("localization style expects a gain curve")
        lo = tuple(min(a, b) for a, b in zip(obj.a_even, obj.a_odd))
        hi = tuple(max(a, b) for a, b in zip(obj.a_even, obj.a_odd))
        return PlotData(obj.mu_ladder, obj.a_hats, lo, hi, obj.reference)
    if style == "growth":
        if not isinstance(obj, ConstantLedger) or not obj.entries:
            raise ValueError("growth style expects a non-empty ledger")
        x = tuple(e.r_scale for e in obj.entries)
        y = tuple(e.a_hat for e in obj.entries)
        return PlotData(x, y, y, y, 0.0)
    if style == "decay":
        est, order = obj
        if not isinstance(est, DecayEstimate) or len(est.radii) == 0:
            raise ValueError("decay style expects a non-empty estimate")
        x = tuple(float(r) for r in est.radii)
        y = tuple(float(m) for m in est.magnitudes)
        ref = 1.0 / order if isinstance(order, int) and order > 0 else 0.0
        return PlotData(x, y, y, y, ref)
    raise ValueError(f"unknown plot style {style!r}")


def write_plot_csv(path: Path, data: PlotData) -> None:
    rows = [
        (x, y, lo, hi, data.reference_slope)
        for x, y, lo, hi in zip(data.x, data.y, data.y_lo, data.y_hi)
    ]
    _write_csv(path, PLOT_HEADER, rows)


def parse_plot_data(path) -> PlotData:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != PLOT_HEADER:
            raise ValueError(f"not a plot-data file: header {header}")
        cols: List[List[float]] = [[], [], [], [], []]
        for row in reader:
            for i, tok in enumerate(row):
                cols[i].append(float(tok))
    if not cols[0]:
        raise ValueError("plot-data file has no rows")
    refs = set(cols[4])
    if len(refs) != 1:
        raise ValueError("reference slope column must be constant")
    return PlotData(
        tuple(cols[0]), tuple(cols[1]), tuple(cols[2]), tuple(cols[3]), cols[4][0]
    )


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(args: argparse.Namespace) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise _ConfigError(f"config file {path} does not exist")
    try:
        return load_toml(str(path))
    except Exception as exc:
        raise _ConfigError(f"config {path} does not parse: {exc}") from exc


def _cfg(config: dict, args: argparse.Namespace, key: str, default=None, cast=None):
    """Flag value if given, else config value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is None:
        val = config.get(key, default)
    if val is None:
        return None
    return cast(val) if cast is not None else val


def _family_from_config(config: dict, samples: int = 9):
    if "surfaces" not in config:
        raise _ConfigError("config needs a [[surfaces]] array")
    return family_from_table(config, samples_per_surface=samples)


def _mu_vector(family) -> List[Optional[float]]:
    out: List[Optional[float]] = []
    for spec in family.submanifolds:
        out.append(float(spec.mu) if spec.codim > 0 else None)
    return out


# ---------------------------------------------------------------------------
# subcommands


def _run_transversality(args: argparse.Namespace) -> List[Path]:
    config = _load_config(args)
    family = _family_from_config(config, samples=args.samples)
    nu = check_transversality(list(family.surfaces), args.samples)
    _require_finite("transversality", nu)
    out = Path(args.out_dir) / (args.out or "transversality.csv")
    _write_csv(
        out,
        ("surfaces", "dim_ambient", "samples", "nu"),
        [(len(family.surfaces), family.surfaces[0].dim_ambient, args.samples, nu)],
    )
    print(f"nu = {nu:.6g} over {len(family.surfaces)} surfaces")
    return [out]


def _decay_patch(args: argparse.Namespace):
    name = args.surface
    n = args.dim
    if name == "flat":
        return flat_patch(n, halfwidth=args.halfwidth)
    if name == "paraboloid":
        return paraboloid_patch(n, halfwidth=args.halfwidth)
    if name == "sphere-cap":
        return sphere_cap_patch(2.0, n, halfwidth=args.halfwidth)
    if name.startswith("monomial:"):
        degree = int(name.split(":", 1)[1])
        return monomial_patch(degree, n, halfwidth=args.halfwidth or 1.0)
    raise _ConfigError(
        f"unknown surface {name!r}; use flat, paraboloid, sphere-cap, monomial:L"
    )


def _run_decay_fit(args: argparse.Namespace) -> List[Path]:
    patch = _decay_patch(args)
    if args.radii_min <= 0 or args.radii_max <= args.radii_min:
        raise _ConfigError("need 0 < --radii-min < --radii-max")
    radii = geometric_radii(args.radii_min, args.radii_max, args.octaves)
    d = patch.dim_domain
    if args.direction:
        direction = np.array([float(t) for t in args.direction.split(",")])
        if direction.shape != (patch.dim_ambient,):
            raise _ConfigError("direction needs one component per ambient axis")
        if not np.linalg.norm(direction) > 0:
            raise _ConfigError("direction must be nonzero")
    else:
        direction = np.zeros(patch.dim_ambient)
        direction[patch.normal_axis] = 1.0
    widths = patch.domain.widths
    slope = 0.0 if patch.flat else patch.delta_geom
    nodes = [
        max(256, int(math.ceil(0.75 * args.radii_max * (1.0 + slope) * w / math.pi)))
        for w in widths
    ]
    if int(np.prod(nodes)) > 4_000_000:
        raise ResolutionError(
            f"radius {args.radii_max:g} needs {nodes} nodes; lower --radii-max",
            required=nodes,
        )
    profile = BumpPolyProfile(
        center=patch.domain.center,
        halfwidth=0.9 * (widths / 2.0),
        poly={(0,) * d: 1.0},
    )
    psi = density_from_profile(patch, profile, nodes, rule="uniform")
    est = decay_fit(psi, direction, radii)
    _require_finite("decay fit", est.alpha_hat, est.fit_residual)
    order = finite_type_order(patch, patch.domain.center, max_order=8)
    logs_r = np.log(est.radii)
    logs_m = np.log(np.maximum(est.magnitudes, 1e-300))
    running = np.full(len(est.radii), math.nan)
    if len(est.radii) > 1:
        running[1:] = -(np.diff(logs_m) / np.diff(logs_r))
    out = Path(args.out_dir) / (args.out or "decay.csv")
    _write_csv(
        out,
        ("r", "magnitude", "running_slope"),
        [
            (float(r), float(m), float(s))
            for r, m, s in zip(est.radii, est.magnitudes, running)
        ],
    )
    plot = out.with_suffix(".plot.csv")
    write_plot_csv(plot, emit_plot_data((est, order), "decay"))
    print(
        f"alpha_hat = {est.alpha_hat:.4f} along {direction.tolist()} "
        f"(type order {order}, residual {est.fit_residual:.3g})"
    )
    return [out, plot]


def _parse_splits(text: Optional[str], k: int) -> List[Tuple[int, ...]]:
    if not text:
        return [()] * k
    groups = text.split(";")
    if len(groups) != k:
        raise _ConfigError("--splits needs one ;-group per function")
    out = []
    for g in groups:
        out.append(tuple(int(t) for t in g.split(",") if t.strip() != ""))
    return out


def _run_lw_check(args: argparse.Namespace) -> List[Path]:
    n, k = args.n, args.k
    if not 2 <= k <= n:
        raise _ConfigError(f"need 2 <= k <= n, got k={k}, n={n}")
    if args.box < 1:
        raise _ConfigError("--box must be at least 1")
    splits = _parse_splits(args.splits, k)
    refined = any(splits)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    # one blind axis per function, then shared axes filled from the rest
    plans = []
    for t in range(args.trials):
        sizes = rng.integers(1, args.box + 1, size=(k, n - 1))
        plans.append((t, sizes))

    def one(plan):
        t, sizes = plan
        funcs = []
        for i in range(k):
            axes = tuple(a for a in range(n) if a != i)
            funcs.append(
                random_lattice_function(
                    axes, sizes[i], seed=seed + 7919 * t + i, private_axes=splits[i]
                )
            )
        if refined:
            ratio = lw_refined_ratio(funcs)
            chain = holder_chain_check(funcs)
            lhs = chain.steps[0].lhs
            rhs = lhs / ratio if ratio > 0 else 0.0
            return t, lhs, rhs, ratio, chain.holds()
        lhs, rhs, ratio = lw_ratio(funcs)
        return t, lhs, rhs, ratio, True

    results = _pool_map(one, plans, args.jobs)
    for _, lhs, rhs, ratio, _ok in results:
        _require_finite("lw ratio", lhs, rhs, ratio)
    out = Path(args.out_dir) / (args.out or "lw.csv")
    _write_csv(
        out,
        ("trial", "lhs", "rhs", "ratio"),
        [(t, lhs, rhs, ratio) for t, lhs, rhs, ratio, _ok in results],
    )
    worst = max(r[3] for r in results)
    chains = all(r[4] for r in results)
    print(f"max ratio {worst:.12f} over {args.trials} trials; chain holds: {chains}")
    return [out]


def _run_partition_check(args: argparse.Namespace) -> List[Path]:
    if args.dim < 1:
        raise _ConfigError("--dim must be at least 1")
    if args.grid < 2:
        raise _ConfigError("--grid must be at least 2")
    family = BumpFamily(CubeLattice(args.dim, args.scale), order=args.order)
    half = args.scale / 2.0
    axes = [np.linspace(-half, half, args.grid) for _ in range(args.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, args.dim)
    report = partition_check(family, pts, truncation=args.truncation)
    leakage = bump_spectrum_check(family)
    _require_finite("partition deviation", report.max_deviation, leakage)
    out = Path(args.out_dir) / (args.out or "partition.csv")
    header = tuple(f"x{d}" for d in range(args.dim)) + ("deviation",)
    rows = [tuple(p) + (float(dev),) for p, dev in zip(pts, report.deviations)]
    _write_csv(out, header, rows)
    print(
        f"max |sum chi - 1| = {report.max_deviation:.3e} on {len(pts)} points; "
        f"spectral leakage {leakage:.3e}"
    )
    return [out]


LEDGER_PREFIX = ("R", "delta")
LEDGER_SUFFIX = ("A_hat", "trials", "seed_best")


def _ledger_header(k: int) -> Tuple[str, ...]:
    return LEDGER_PREFIX + tuple(f"mu_{i}" for i in range(k)) + LEDGER_SUFFIX


def _run_constant_sweep(args: argparse.Namespace) -> List[Path]:
    config = _load_config(args)
    family = _family_from_config(config)
    specs = list(family.submanifolds)
    r_ladder = config.get("r_ladder")
    if not r_ladder:
        raise _ConfigError("constant-sweep config needs r_ladder = [..]")
    delta = float(config.get("delta", 2.0**-4))
    trials = int(config.get("trials", 10))
    style = str(config.get("style", "rough"))
    resolution = config.get("resolution")
    resolution = int(resolution) if resolution else None
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    mu = _mu_vector(family)

    def one(r):
        return best_constant_estimate(
            specs,
            float(r),
            delta,
            mu,
            trials,
            resolution=resolution,
            base_seed=seed,
            style=style,
        )

    ledger = ConstantLedger()
    for entry in _pool_map(one, list(r_ladder), args.jobs):
        _require_finite("A-hat", entry.a_hat)
        ledger.add(entry)
    eps_hat = ledger.fitted_growth()
    _require_finite("growth fit", eps_hat)
    out = Path(args.out_dir) / (args.out or "constant_sweep.csv")
    k = len(specs)
    rows: List[Sequence] = list(ledger.rows())
    rows.append(("fit", "") + ("",) * k + (eps_hat, "", ""))
    _write_csv(out, _ledger_header(k), rows)
    plot = out.with_suffix(".plot.csv")
    write_plot_csv(plot, emit_plot_data(ledger, "growth"))
    print(f"eps_hat = {eps_hat:.4f} over R in {list(map(float, r_ladder))}")
    return [out, plot]


def _run_localization_sweep(args: argparse.Namespace) -> List[Path]:
    config = _load_config(args)
    family = _family_from_config(config)
    specs = list(family.submanifolds)
    mu_ladder = config.get("mu_ladder")
    if not mu_ladder or len(mu_ladder) < 2:
        raise _ConfigError("localization-sweep config needs mu_ladder with >= 2 rungs")
    delta = float(config.get("delta", 2.0**-4))
    trials = int(config.get("trials", 10))
    style = str(config.get("style", "rough"))
    resolution = config.get("resolution")
    resolution = int(resolution) if resolution else None
    r_scale = config.get("r_scale")
    r_scale = float(r_scale) if r_scale else None
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    curve = localization_gain_curve(
        specs,
        [float(m) for m in mu_ladder],
        trials,
        delta,
        resolution=resolution,
        base_seed=seed,
        r_scale=r_scale,
        style=style,
    )
    _require_finite("gain slope", curve.slope)
    out = Path(args.out_dir) / (args.out or "localization_sweep.csv")
    k = len(specs)
    rows: List[Sequence] = [
        (e.r_scale, e.delta) + e.mu + (e.a_hat, e.trials, e.best_seed)
        for e in curve.entries
    ]
    rows.append(("fit", "") + ("",) * k + (curve.slope, "", ""))
    _write_csv(out, _ledger_header(k), rows)
    plot = out.with_suffix(".plot.csv")
    write_plot_csv(plot, emit_plot_data(curve, "localization"))
    print(
        f"slope = {curve.slope:.4f} (band {curve.slope_band[0]:.4f}"
        f"..{curve.slope_band[1]:.4f}, reference {curve.reference:g})"
    )
    return [out, plot]


def _run_recursion_check(args: argparse.Namespace) -> List[Path]:
    config = _load_config(args)
    family = _family_from_config(config)
    specs = list(family.submanifolds)
    r_scale = float(config.get("r_scale", 8.0))
    delta = float(config.get("delta", 2.0**-4))
    trials = int(config.get("trials", 10))
    style = str(config.get("style", "rough"))
    resolution = config.get("resolution")
    resolution = int(resolution) if resolution else None
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    report = recursion_check(
        specs,
        r_scale,
        delta,
        _mu_vector(family),
        trials,
        resolution=resolution,
        base_seed=seed,
        style=style,
    )
    _require_finite("recursion ratio", report.lhs, report.rhs, report.ratio)
    out = Path(args.out_dir) / (args.out or "recursion.csv")
    _write_csv(
        out,
        ("R", "delta", "lhs", "rhs_base", "rhs", "ratio", "bound", "holds"),
        [
            (
                r_scale,
                delta,
                report.lhs,
                report.rhs_base,
                report.rhs,
                report.ratio,
                report.bound,
                report.ratio <= report.bound,
            )
        ],
    )
    print(
        f"A({1/delta:g} R) / (A(R) prod c) = {report.ratio:.4f} "
        f"(bound {report.bound:g})"
    )
    return [out]


def _run_eps_removal(args: argparse.Namespace) -> List[Path]:
    config = _load_config(args)
    p = _cfg(config, args, "p", cast=float)
    n = _cfg(config, args, "n", cast=int)
    eps = _cfg(config, args, "eps", cast=float)
    c = _cfg(config, args, "c", cast=float)
    k = _cfg(config, args, "k", cast=int)
    if p is None or n is None or eps is None or c is None:
        raise _ConfigError("eps-removal needs --p, --n, --eps, --c (or config keys)")
    plan = eps_removal_exponent(p, n, eps, c, k=k)
    below, above = exponent_chain_check(p, n)
    _require_finite("removal plan", plan.n_steps, plan.beta, plan.q_bound)
    out = Path(args.out_dir) / (args.out or "eps_removal.csv")
    _write_csv(
        out,
        (
            "p",
            "n",
            "eps",
            "C",
            "N_steps",
            "beta",
            "q_bound",
            "q_theorem",
            "chain_holds_below",
            "chain_fails_above",
        ),
        [
            (
                plan.p,
                plan.n,
                plan.eps,
                plan.c,
                plan.n_steps,
                plan.beta,
                plan.q_bound,
                plan.q_theorem,
                below,
                above,
            )
        ],
    )
    print(
        f"N = {plan.n_steps:.6g}, beta = {plan.beta:.6g}, "
        f"q <= {plan.q_bound:.6g} (statement {plan.q_theorem:.6g})"
    )
    return [out]


def _run_sparse_cover(args: argparse.Namespace) -> List[Path]:
    path = Path(args.cubes)
    if not path.exists():
        raise _ConfigError(f"--cubes file {path} does not exist")
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(t) for t in line.replace(",", " ").split()])
    if not rows:
        raise _ConfigError(f"--cubes file {path} holds no centers")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise _ConfigError("every center needs the same coordinate count")
    centers = np.array(rows)
    cover = sparse_cover(centers, args.depth, sep_exponent=args.sep_exponent)
    covered = coverage_check(cover, centers)
    sparse_ok = all(
        is_sparse(c.centers, c.radius, args.depth, args.sep_exponent)[0]
        for c in cover.collections
    )
    out = Path(args.out_dir) / (args.out or "sparse_cover.csv")
    header = ("collection_id", "radius") + tuple(f"center_{d}" for d in range(width))
    table = []
    for i, coll in enumerate(cover.collections):
        for q in coll.centers:
            table.append((i, coll.radius) + tuple(float(v) for v in q))
    _write_csv(out, header, table)
    print(
        f"{len(cover.collections)} collections, {len(table)} balls; "
        f"sparse: {sparse_ok}, covers input: {covered}"
    )
    return [out]


# ---------------------------------------------------------------------------
# wiring


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--jobs", type=int, default=1, help="worker pool size")
    common.add_argument("--out-dir", default=".", help="output directory")
    common.add_argument("--out", default=None, help="output CSV name")
    common.add_argument("--verbose", action="store_true", help="progress on stderr")

    parser = _Parser(prog="restlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("transversality", parents=[common]).add_argument(
        "--samples", type=int, default=9, help="sample points per surface"
    )

    p = sub.add_parser("decay-fit", parents=[common])
    p.add_argument("--surface", default="paraboloid",
                   help="flat | paraboloid | sphere-cap | monomial:L")
    p.add_argument("--dim", type=int, default=2, help="ambient dimension")
    p.add_argument("--halfwidth", type=float, default=None)
    p.add_argument("--direction", default=None, help="comma separated components")
    p.add_argument("--radii-min", type=float, default=10.0)
    p.add_argument("--radii-max", type=float, default=1500.0)
    p.add_argument("--octaves", type=int, default=8, help="radii per octave")

    p = sub.add_parser("lw-check", parents=[common])
    p.add_argument("--n", type=int, default=3, help="global axis count")
    p.add_argument("--k", type=int, default=3, help="function count")
    p.add_argument("--box", type=int, default=8, help="max index extent per axis")
    p.add_argument("--splits", default=None,
                   help="private axes per function, e.g. '2;3' or '2,3;'")
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("partition-check", parents=[common])
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--order", type=int, default=8, help="profile order")
    p.add_argument("--truncation", type=int, default=20)
    p.add_argument("--grid", type=int, default=16, help="grid points per axis")

    sub.add_parser("constant-sweep", parents=[common])
    sub.add_parser("localization-sweep", parents=[common])
    sub.add_parser("recursion-check", parents=[common])

    p = sub.add_parser("eps-removal", parents=[common])
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("sparse-cover", parents=[common])
    p.add_argument("--cubes", required=True, help="file of cube centers, one per line")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--sep-exponent", type=float, default=2.0)
    return parser


_HANDLERS = {
    "transversality": _run_transversality,
    "decay-fit": _run_decay_fit,
    "lw-check": _run_lw_check,
    "partition-check": _run_partition_check,
    "constant-sweep": _run_constant_sweep,
    "localization-sweep": _run_localization_sweep,
    "recursion-check": _run_recursion_check,
    "eps-removal": _run_eps_removal,
    "sparse-cover": _run_sparse_cover,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    t0 = time.time()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _say(args, f"running {args.command}")
        outputs = _HANDLERS[args.command](args)
        config = _load_config(args) if getattr(args, "config", None) else {}
        flag_echo = {
            key: val
            for key, val in sorted(vars(args).items())
            if key not in ("command", "verbose") and val is not None
        }
        _write_manifest(outputs[0], args, {**config, "flags": flag_echo}, outputs, t0)
        _say(args, f"wrote {', '.join(str(p) for p in outputs)}")
        return 0
    except ResolutionError as exc:
        print(f"resolution refusal: {exc}", file=sys.stderr)
        if exc.required is not None:
            print(f"  (needs at least {list(exc.required)} nodes)", file=sys.stderr)
        return 2
    except (_ConfigError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (_NumericFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # precondition violations raised by the library modules
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
