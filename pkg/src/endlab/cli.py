"""Command-line entry point: ``endlab <command> --config <path>``.

Exit codes: 0 success, 2 invalid config, 3 budget truncation, 4 a check failed.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time

import numpy as np

from . import __version__
from .boundary import (EndApproximation, FloydGraph, separation_radius,
                       separation_radius_window)
from .config import COMMANDS, ExperimentConfig, load_config
from .dimension import (RegularTreeSpec, boundary_box_dimension, build_sample_bank, doubling_fit,
                        hdim_harmonic, packing_construction, packing_enumeration, regular_tree_dimension,
                        tree_box_dimension)
from .errors import BudgetExceeded, EndlabError, PreconditionError, SpecificationError
from .estimators import drift_estimate, entropy_estimate, estimate_all, tracking_diagnostic
from .groups import GroupElement
from .properties import random_ends, run_all, summarize
from .transitions import geodesic_vertices
from .report import RunReport, emit_report
from .window import WINDOW_BUDGET, build_window

log = logging.getLogger("endlab")

EXIT_OK, EXIT_INVALID, EXIT_TRUNCATED, EXIT_CHECK = 0, 2, 3, 4


def _report(config: ExperimentConfig, command: str) -> RunReport:
    return RunReport(command, config.to_dict(), config.digest(), config.seed)


def _entropy(config, workers, report):
    """Entropy at the configured convolution depth, falling back to the feasible depth."""
    b = config.budgets
    try:
        return entropy_estimate(config.measure, b["steps"], b["walks"], b["convolution_depth"], config.seed, workers)
    except BudgetExceeded as exc:
        report.truncated = True
        report.truncation.append(f"convolution_depth: {exc}")
        return entropy_estimate(config.measure, b["steps"], b["walks"], exc.feasible, config.seed, workers)


def cmd_estimate(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "estimate")
    b = config.budgets
    out = estimate_all(config.measure, b["steps"], b["walks"], b["convolution_depth"], b["sphere_depth"],
                       config.seed, workers)
    if out["truncated"]:
        rep.truncated = True
        rep.truncation.append(f"convolution_depth: reduced to {out['entropy'].extras['n_exact']}")
    entropy, drift, growth, check = out["entropy"], out["drift"], out["growth"], out["guivarch"]
    rep.outputs = {"drift": drift, "entropy": entropy, "growth": growth, "guivarch": check}
    rep.tables["entropy"] = [
        {"n": n, "entropy": ent, "difference": entropy.extras["differences"][n] if n < len(entropy.extras["differences"]) else None}
        for n, ent in enumerate(entropy.extras["entropies"])
    ]
    rep.tables["growth"] = [{"n": n, "sphere": c} for n, c in enumerate(config.group.sphere_counts(b["sphere_depth"]))]
    rep.checks = {"guivarch": check.passed, "entropy_smb_consistent": entropy.extras["smb_consistent"]}
    return rep


def cmd_metrics_check(config: ExperimentConfig, workers: int) -> RunReport:
    """Visual and truncated Floyd distances on sampled ends; normal-form radii cross-checked on a window."""
    rep = _report(config, "metrics-check")
    spec = config.group
    radius = config.budgets["window_radius"]
    try:
        window = build_window(spec, radius, budget=WINDOW_BUDGET)
    except BudgetExceeded as exc:
        rep.truncated = True
        rep.truncation.append(f"window_radius: {exc}")
        radius = exc.feasible
        window = build_window(spec, radius, budget=WINDOW_BUDGET)
    if radius < 7:
        raise PreconditionError(f"window radius {radius} too small for metric checks (need >= 7)")
    rng = np.random.default_rng([config.seed, 7])
    ends = random_ends(spec, rng, 60, radius, radius - 4, max_shared=radius - 6)
    cache: dict = {}
    rows, agree, boundary = [], 0, 0
    ultra_bad = 0
    radii = {}
    for i in range(len(ends)):
        for j in range(i + 1, len(ends)):
            exact = separation_radius(ends[i], ends[j])
            win = separation_radius_window(ends[i], ends[j], window, cache)
            radii[i, j] = exact.radius if exact.separated else math.inf
            same = exact.radius == win.radius
            agree += same
            boundary += win.boundary_effect
            if len(rows) < 400:
                row = {"i": i, "j": j, "radius": exact.radius, "window_radius": win.radius,
                       "agree": same, "boundary_effect": win.boundary_effect}
                for decay in config.decays:
                    row[f"visual_{decay:g}"] = decay ** exact.radius if exact.separated else 0.0
                rows.append(row)
    n = len(ends)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = radii[i, j], radii[j, k], radii[i, k]
                # ultrametric: the two smallest radii (largest distances) coincide
                s = sorted((a, b, c))
                ultra_bad += s[0] != s[1]
    pairs = n * (n - 1) // 2
    rep.tables["separation"] = rows
    frows, monotone = [], True
    fw = max(5, radius - 4)
    for decay in config.decays:
        fg = FloydGraph(spec, decay, radius, window=window)
        for t in range(10):
            x = ends[2 * t].representative
            y = ends[2 * t + 1].representative
            x, y = _truncate(x, fw - 4), _truncate(y, fw - 4)
            fv = fg.distance(x, y)
            ok = fv.value <= fv.inner + 1e-12
            monotone &= ok
            frows.append({"decay": decay, "x": str(x), "y": str(y), "floyd": fv.value,
                          "floyd_inner": fv.inner, "window_radius": fv.window_radius, "monotone": ok})
    rep.tables["floyd"] = frows
    rep.outputs = {"window_radius": radius, "ends": n, "pairs": pairs, "window_agreement": agree,
                   "boundary_effects": boundary, "ultrametric_violations": ultra_bad}
    rep.checks = {"window_matches_normal_form": agree == pairs, "ultrametric": ultra_bad == 0,
                  "floyd_refinement_monotone": bool(monotone)}
    return rep


def _truncate(g: GroupElement, length: int) -> GroupElement:
    path = geodesic_vertices(g)
    return path[min(length, len(path) - 1)]


def cmd_dimension(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "dimension")
    b, d = config.budgets, config.sections["dimension"]
    drift = drift_estimate(config.measure, b["steps"], b["walks"], config.seed, workers)
    entropy = _entropy(config, workers, rep)
    level_lo, level_hi = d["levels"]
    bank = build_sample_bank(config.measure, d["steps"], d["walks"], config.seed, workers=workers)
    if bank.precision + 1 < level_hi:
        rep.truncated = True
        rep.truncation.append(f"dimension.levels: bank precision {bank.precision} caps the top level at {bank.precision + 1}")
        level_hi = bank.precision + 1
    reports = [hdim_harmonic(bank, decay, entropy, drift, d["centers"], level_lo, level_hi) for decay in config.decays]
    rep.outputs = {"drift": drift, "entropy": entropy, "bank_precision": bank.precision,
                   "by_decay": [{"decay": r.decay, "aggregate": r.aggregate, "aggregate_stderr": r.aggregate_stderr,
                                  "dispersion": r.dispersion, "target": r.target, "target_stderr": r.target_stderr,
                                  "relative_gap": r.relative_gap, "centers_used": len(r.slopes), "levels": r.levels}
                                 for r in reports]}
    rep.tables["local_dimension"] = [{"decay": r.decay, "center": c, "slope": s}
                                     for r in reports for c, s in zip(r.centers, r.slopes)]
    rep.checks = {
        "aggregate_within_5pct": all(r.relative_gap <= 0.05 for r in reports),
        "dispersion_below_10pct": all(r.dispersion < 0.10 for r in reports),
    }
    return rep


def cmd_boundary_dim(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "boundary-dim")
    n_max = config.sections["boundary_dim"]["n_max"]
    results = [boundary_box_dimension(config.group, decay, n_max) for decay in config.decays]
    rep.outputs = {"by_decay": [{"decay": decay, "slope": r.slope, "stderr": r.stderr, "target": r.target,
                                  "fit_window": r.window} for decay, r in zip(config.decays, results)]}
    rep.tables["components"] = [{"n": n, "components": c} for n, c in enumerate(results[0].counts)]
    rep.checks = {"box_dimension_matches_growth": all(abs(r.slope - r.target) <= 1e-3 for r in results)}
    return rep


def _center(config: ExperimentConfig, precision: int) -> EndApproximation:
    spec = config.group
    word = config.sections["doubling"]["center"]
    if word is None:
        f, g = spec.generators[0]
        period = GroupElement(spec, spec.rmul_syllable((), f, g))
    else:
        period = spec.parse(word)
    return EndApproximation.from_ray(spec.identity, period, precision + 4)


def cmd_doubling(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "doubling")
    db = config.sections["doubling"]
    lo, hi = db["n_range"]
    rows, fits = [], []
    for decay in config.decays:
        reports = []
        for n in range(lo, hi + 1):
            if db["mode"] == "construction":
                r = packing_construction(config.group, db["factor"], n, decay, db["k"])
            else:
                r = packing_enumeration(_center(config, hi + db["k"] + 1), n, decay, db["k"])
            reports.append(r)
            rows.append({"decay": decay, "n": n, "count": r.count, "candidates": r.candidates,
                         "sep_factor": r.sep_factor, "verified": r.verified})
        fits.append((decay, doubling_fit(reports)))
    rep.tables["packing"] = rows
    rep.outputs = {"mode": db["mode"], "by_decay": [{"decay": decay, **f.to_json()} for decay, f in fits]}
    checks = {"separation_verified": all(r["verified"] for r in rows)}
    if db["expect"] == "plateau":
        checks["plateau"] = all(f.constant_from == lo for _, f in fits)
    elif db["expect"] == "growth":
        checks["growth"] = all(f.slope > 0 and f.p_value < 0.01
                               and all(b > a for a, b in zip(f.counts, f.counts[1:])) for _, f in fits)
    rep.checks = checks
    return rep


def _drop(diff: float, se: float) -> float:
    """Decrease in units of standard error; exact columns (zero error) give +-inf or 0."""
    if se > 0:
        return diff / se
    return math.copysign(math.inf, diff) if diff else 0.0


def cmd_tracking(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "tracking")
    t = config.sections["tracking"]
    table = tracking_diagnostic(config.measure, t["steps"], t["walks"], config.seed, t["checkpoints"], t["radius"], workers)
    rep.tables["tracking"] = [r.__dict__ for r in table.rows]
    first, last = table.rows[0], table.rows[-1]
    drop_t = _drop(first.tracking - last.tracking, math.hypot(first.tracking_se, last.tracking_se))
    drop_p = _drop(first.projection - last.projection, math.hypot(first.projection_se, last.projection_se))
    rep.outputs = {"radius": table.radius, "tracking_slope": table.tracking_slope, "projection_slope": table.projection_slope,
                   "first": first.n, "last": last.n, "tracking_drop_se": drop_t, "projection_drop_se": drop_p}
    rep.checks = {"tracking_decreases": drop_t >= 2 and table.tracking_slope <= 0,
                  "projection_decreases": drop_p >= 2 and table.projection_slope <= 0}
    return rep


def cmd_tree_dim(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "tree-dim")
    rows = []
    for i, raw in enumerate(config.sections["tree"]["specs"]):
        spec = RegularTreeSpec(tuple(raw["branching"]), tuple(raw["scales"]), float(raw["ratio"]))
        formula = regular_tree_dimension(spec)
        depth = min(12, len(spec.branching))
        while True:
            try:
                box = tree_box_dimension(spec, depth)
                break
            except PreconditionError:
                if depth <= 3:
                    raise
                depth -= 1
        if depth < min(12, len(spec.branching)):
            rep.truncated = True
            rep.truncation.append(f"tree.specs[{i}]: materialized depth reduced to {depth}")
        # compare over the same horizon
        same = regular_tree_dimension(spec, depth)
        gap = abs(box.value - same.value) / abs(same.value) if same.value else abs(box.value)
        rows.append({"spec": i, "formula": formula.value, "formula_at_depth": same.value, "box": box.value,
                     "depth": depth, "relative_gap": gap})
    rep.tables["tree"] = rows
    rep.outputs = {"specs": len(rows)}
    rep.checks = {"box_matches_formula": all(r["relative_gap"] <= 0.02 for r in rows)}
    return rep


def cmd_properties(config: ExperimentConfig, workers: int) -> RunReport:
    rep = _report(config, "properties")
    p = config.sections["properties"]
    results = run_all(config.measure, config.decays[0], config.seed, p["instances"], p["convolution_depth"],
                      p["bank_walks"], p["bank_steps"])
    rep.tables["suites"] = [{"module": r.module, "suite": r.name, "instances": r.instances,
                             "violations": len(r.violations), "passed": r.passed} for r in results]
    rep.outputs = summarize(results)
    rep.checks = {f"{r.module}:{r.name}": r.passed for r in results}
    return rep


HANDLERS = {
    "estimate": cmd_estimate,
    "metrics-check": cmd_metrics_check,
    "dimension": cmd_dimension,
    "boundary-dim": cmd_boundary_dim,
    "doubling": cmd_doubling,
    "tracking": cmd_tracking,
    "tree-dim": cmd_tree_dim,
    "properties": cmd_properties,
}


def run_command(config: ExperimentConfig, command: str, workers: int | None = None) -> RunReport:
    if command not in HANDLERS:
        raise SpecificationError([f"command: unknown command {command!r}"])
    workers = config.budgets["workers"] if workers is None else workers
    t0 = time.perf_counter()
    rep = HANDLERS[command](config, workers)
    rep.wall_clock = time.perf_counter() - t0
    return rep


def exit_code(report: RunReport) -> int:
    if report.truncated:
        return EXIT_TRUNCATED
    if not report.passed:
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="endlab", description="Random walks and end boundaries of free products.")
    ap.add_argument("--version", action="version", version=f"endlab {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--out", default="results", help="output directory (default: results)")
    ap.add_argument("--format", default="json,csv", help="comma-separated subset of json,csv")
    ap.add_argument("--workers", type=int, default=None, help="override budgets.workers; results do not depend on it")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    bad = [f for f in formats if f not in ("json", "csv")]
    if bad or not formats:
        print(f"error: --format: unsupported {bad or formats}", file=sys.stderr)
        return EXIT_INVALID
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        config = load_config(args.config)
    except SpecificationError as exc:
        for msg in exc.violations:
            print(f"invalid config: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log.info("running %s on %s (config %s, seed %d)", args.command, config.group.name, config.digest(), config.seed)
    try:
        report = run_command(config, args.command, args.workers)
    except SpecificationError as exc:
        for msg in exc.violations:
            print(f"invalid config: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except PreconditionError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EndlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in emit_report(report, args.out, formats):
        print(path)
    for name, ok in report.checks.items():
        if not ok:
            print(f"check failed: {name}", file=sys.stderr)
    for note in report.truncation:
        print(f"truncated: {note}", file=sys.stderr)
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
