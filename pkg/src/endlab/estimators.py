"""Drift, entropy and growth estimates with standard errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convolution import convolution_sequence
from .errors import BudgetExceeded, InternalConsistencyError, PreconditionError
from .groups import GroupSpec
from .walks import StepDistribution, simulate

N_BATCHES = 100


@dataclass
class EstimateWithError:
    value: float
    stderr: float
    samples: int
    method: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0 or self.samples < 1:
            raise InternalConsistencyError(f"invalid estimate {self.method}: stderr={self.stderr}, samples={self.samples}")

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples, "method": self.method, **self.extras}


def batch_means(values: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error; batches are contiguous in walk order."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = math.fsum(values) / n
    b = min(n_batches, n)
    if b < 2:
        return mean, 0.0
    bounds = np.linspace(0, n, b + 1).astype(int)
    means = np.array([math.fsum(values[lo:hi]) / (hi - lo) for lo, hi in zip(bounds, bounds[1:])])
    centre = math.fsum(means) / b
    var = math.fsum((means - centre) ** 2) / (b - 1)
    return mean, math.sqrt(var / b)


def drift_estimate(measure: StepDistribution, n_steps: int, n_walks: int, seed: int, workers: int = 1, exact_depth: int | None = None) -> EstimateWithError:
    """Mean final word length over ``n_steps``, across ``n_walks`` walks.

    With ``exact_depth`` the subadditive bounds (mean length of the ``n``-th power) / ``n`` for
    ``n <= exact_depth`` are attached from exact convolution.
    """
    batch = simulate(measure, n_steps, seed, n_walks, workers=workers)
    mean, se = batch_means(batch.lengths[:, -1] / n_steps)
    extras = {"n_steps": n_steps}
    if exact_depth:
        seq, _ = convolution_sequence(measure, exact_depth)
        extras["upper_bounds"] = [seq.mean_lengths[n] / n for n in range(1, exact_depth + 1)]
    return EstimateWithError(mean, se, n_walks, "monte-carlo/batch-means", extras)


def richardson(diffs: list[float]) -> list[float]:
    """``n D_n - (n-1) D_{n-1}``: removes a ``c/n`` term from ``D_n``."""
    return [n * diffs[n] - (n - 1) * diffs[n - 1] for n in range(1, len(diffs))]


def entropy_estimate(measure: StepDistribution, n_steps: int, n_walks: int, n_exact: int, seed: int, workers: int = 1) -> EstimateWithError:
    """Asymptotic entropy from exact tables, cross-checked by walk samples.

    The point estimate is the last Richardson-corrected entropy difference;
    its error is the change between the last two corrected values.  Sampled
    walks give minus the log table mass of the position at step ``n_exact``, over
    ``n_exact``; its mean must agree with the exact entropy of that power over
    ``n_exact`` (a consistency check, reported in extras).
    """
    if n_exact < 2:
        raise PreconditionError("n_exact must be >= 2")
    if n_steps < n_exact:
        raise PreconditionError("n_steps must be >= n_exact")
    seq, kept = convolution_sequence(measure, n_exact, keep={n_exact})
    entropies = seq.entropies
    diffs = [entropies[n + 1] - entropies[n] for n in range(n_exact)]
    corrected = richardson(diffs)
    if len(corrected) >= 2:
        value = corrected[-1]
        err = abs(corrected[-1] - corrected[-2])
    else:
        value, err = diffs[-1], abs(diffs[-1])
    if max(diffs) <= 1e-12:
        value, err = 0.0, 0.0
    value = max(value, 0.0)

    table = kept[n_exact]
    batch = simulate(measure, n_exact, seed, n_walks, key_steps=[n_exact], workers=workers)
    logs = np.empty(n_walks)
    for i, key in enumerate(batch.keys[n_exact]):
        j = table.window.index.get(key)
        if j is None or table.values[j] <= 0:
            raise InternalConsistencyError("sampled position has zero mass in the exact table")
        logs[i] = -math.log(table.values[j]) / n_exact
    smb, smb_se = batch_means(logs)
    exact_rate = entropies[n_exact] / n_exact
    extras = {
        "n_exact": n_exact,
        "entropies": entropies,
        "differences": diffs,
        "last_difference": diffs[-1],
        "corrected": corrected,
        "smb": smb,
        "smb_stderr": smb_se,
        "exact_rate": exact_rate,
        "smb_consistent": bool(abs(smb - exact_rate) <= 3 * smb_se + 1e-12),
    }
    return EstimateWithError(value, err, n_walks, "entropy-difference/richardson", extras)


def growth_rate_estimate(spec: GroupSpec, n_max: int, n_min: int | None = None) -> EstimateWithError:
    """Least-squares slope of ``log #S_n`` over ``n`` in ``[n_max // 2, n_max]``."""
    if n_max < 2:
        raise PreconditionError("n_max must be >= 2")
    lo = max(1, n_max // 2 if n_min is None else n_min)
    counts = spec.sphere_counts(n_max)
    ns = np.arange(lo, n_max + 1, dtype=float)
    ys = np.log(np.array(counts[lo:], dtype=float))
    slope, se = _ls_slope(ns, ys)
    return EstimateWithError(slope, se, len(ns), "sphere-count/least-squares",
                             {"counts": counts, "window": [lo, n_max]})


def _ls_slope(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    xm = math.fsum(xs) / len(xs)
    ym = math.fsum(ys) / len(ys)
    sxx = math.fsum((xs - xm) ** 2)
    slope = math.fsum((xs - xm) * (ys - ym)) / sxx
    if len(xs) <= 2:
        return slope, 0.0
    resid = ys - (ym + slope * (xs - xm))
    s2 = math.fsum(resid**2) / (len(xs) - 2)
    return slope, math.sqrt(s2 / sxx)


@dataclass
class TrackingRow:
    n: int
    tracking: float
    tracking_se: float
    projection: float
    projection_se: float


@dataclass
class TrackingTable:
    rows: list
    tracking_slope: float
    projection_slope: float
    radius: int

    def row(self, n: int) -> TrackingRow:
        return next(r for r in self.rows if r.n == n)


def tracking_diagnostic(measure: StepDistribution, n_steps: int, n_walks: int, seed: int, checkpoints=None, radius: int = 2, workers: int = 1) -> TrackingTable:
    """Normalized distance to transition points and largest coset projection along walks.

    Checkpoints are restricted to ``n <= n_steps/2`` so that the end reached at
    the final step fixes the geodesic used for the transition points.
    """
    if checkpoints is None:
        step = max(1, (n_steps // 2) // 10)
        checkpoints = list(range(step, n_steps // 2 + 1, step))
    checkpoints = sorted(int(c) for c in checkpoints)
    if not checkpoints or checkpoints[0] < 1 or checkpoints[-1] > n_steps // 2:
        raise PreconditionError("tracking checkpoints must lie in 1..n_steps/2")
    batch = simulate(measure, n_steps, seed, n_walks, checkpoints=checkpoints, tracking_radius=radius, workers=workers)
    rows = []
    for n in checkpoints:
        c = batch.column(n)
        t, tse = batch_means(batch.tracking[:, c] / n)
        p, pse = batch_means(batch.projections[:, c] / n)
        rows.append(TrackingRow(n, t, tse, p, pse))
    xs = np.array(checkpoints, dtype=float)
    ts, _ = _ls_slope(xs, np.array([r.tracking for r in rows])) if len(rows) > 1 else (0.0, 0.0)
    ps, _ = _ls_slope(xs, np.array([r.projection for r in rows])) if len(rows) > 1 else (0.0, 0.0)
    return TrackingTable(rows, ts, ps, radius)


@dataclass
class GuivarchCheck:
    entropy: float
    drift: float
    growth: float
    combined_se: float
    passed: bool

    def to_json(self) -> dict:
        return self.__dict__.copy()


def guivarch_check(entropy: EstimateWithError, drift: EstimateWithError, growth: EstimateWithError) -> GuivarchCheck:
    """``entropy <= drift * growth + 3 combined_se`` with ``combined_se`` combining the three errors to first order."""
    combined_se = math.sqrt(entropy.stderr**2 + (growth.value * drift.stderr) ** 2 + (drift.value * growth.stderr) ** 2)
    return GuivarchCheck(entropy.value, drift.value, growth.value, combined_se, entropy.value <= drift.value * growth.value + 3 * combined_se)


def estimate_all(measure: StepDistribution, n_steps: int, n_walks: int, n_exact: int, n_growth: int, seed: int, workers: int = 1) -> dict:
    """Drift, entropy, growth and the Guivarc'h comparison; budget overruns reported as truncation."""
    out = {"truncated": False}
    out["drift"] = drift_estimate(measure, n_steps, n_walks, seed, workers=workers)
    try:
        out["entropy"] = entropy_estimate(measure, n_steps, n_walks, n_exact, seed, workers=workers)
    except BudgetExceeded as exc:
        out["truncated"] = True
        out["entropy"] = entropy_estimate(measure, n_steps, n_walks, exc.feasible, seed, workers=workers)
    out["growth"] = growth_rate_estimate(measure.spec, n_growth)
    out["guivarch"] = guivarch_check(out["entropy"], out["drift"], out["growth"])
    return out
