"""Ball masses, local dimensions, box counts, tree dimensions and packing probes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .boundary import MARGIN, EndApproximation, LabelCursor, canonical_ray, separation_radius
from .errors import PreconditionError, SpecificationError
from .estimators import EstimateWithError, growth_rate_estimate
from .groups import GroupElement, GroupSpec
from .walks import StepDistribution, simulate
from .window import CayleyWindow

MIN_COUNT = 25
MIN_LEVELS = 4


# -- sample bank ----------------------------------------------------------------

@dataclass
class SampleBank:
    """End approximations at the final step of ``n_walks`` independent walks."""

    spec: GroupSpec
    ends: list
    master_seed: int
    n_steps: int
    precision: int
    drift: float
    _labels: dict = field(default_factory=dict, repr=False)
    _cursors: list | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.ends)

    def level_classes(self, m: int) -> np.ndarray:
        """Class id of every end's component at level ``m`` (ids in first-seen order)."""
        if m > self.precision:
            raise PreconditionError(f"level {m} exceeds bank precision {self.precision}")
        if m not in self._labels:
            if self._cursors is None:
                self._cursors = [LabelCursor(self.spec, e.representative.syllables) for e in self.ends]
            ids: dict = {}
            out = np.empty(len(self.ends), dtype=np.int64)
            for i, c in enumerate(self._cursors):
                out[i] = ids.setdefault(c.label(m), len(ids))
            self._labels[m] = out
        return self._labels[m]

    def ball_members(self, center: int, n: int) -> np.ndarray:
        """Indices of ends inside the closed ball of radius ``decay**n`` around end ``center``."""
        if n <= 1:
            return np.arange(len(self.ends))
        cls = self.level_classes(n - 1)
        return np.flatnonzero(cls == cls[center])


def build_sample_bank(measure: StepDistribution, n_steps: int, n_walks: int, seed: int, query_depth: int = 0, workers: int = 1) -> SampleBank:
    """Run ``n_walks`` walks of length ``n_steps``; precision is ``floor(drift * n_steps / 2)``."""
    batch = simulate(measure, n_steps, seed, n_walks, key_steps=[n_steps], workers=workers)
    drift = math.fsum(batch.lengths[:, -1]) / (n_walks * n_steps)
    p = int(math.floor(drift * n_steps / 2))
    if p < query_depth:
        need = math.ceil(2 * (query_depth + 1) / drift) if drift > 0 else None
        raise SpecificationError([f"bank.n_steps: precision {p} < query depth {query_depth}; "
                                  + (f"use n_steps >= {need}" if need else "walk has no drift")])
    spec = measure.spec
    ends = [EndApproximation.from_element(GroupElement(spec, k), "trajectory-derived", p) for k in batch.keys[n_steps]]
    precision = min(e.precision for e in ends)
    return SampleBank(spec, ends, seed, n_steps, precision, drift)


# -- ball masses and local dimension --------------------------------------------

@dataclass
class BallMassCurve:
    center: int
    levels: list
    counts: list
    masses: list
    total: int

    @property
    def low_support(self) -> list:
        return [c < MIN_COUNT for c in self.counts]

    def rows(self):
        for n, c, m in zip(self.levels, self.counts, self.masses):
            yield {"center": self.center, "n": n, "count": c, "mass": m}


def ball_mass_curve(bank: SampleBank, center: int, level_lo: int, level_hi: int) -> BallMassCurve:
    """Fraction of the other bank ends within ``decay**n`` of end ``center``, ``n = level_lo..level_hi``."""
    if level_lo < 1 or level_hi < level_lo:
        raise PreconditionError("need 1 <= n1 <= n2")
    if level_hi - 1 > bank.precision:
        raise PreconditionError(f"level {level_hi} exceeds bank precision {bank.precision}")
    total = len(bank) - 1
    if total < 1:
        raise PreconditionError("bank needs at least two ends")
    levels, counts, masses = [], [], []
    for n in range(level_lo, level_hi + 1):
        c = len(bank.ball_members(center, n)) - 1
        levels.append(n)
        counts.append(c)
        masses.append(c / total)
    return BallMassCurve(center, levels, counts, masses, total)


@dataclass
class LocalDimension:
    slope: float
    stderr: float
    levels: list


def local_dimension(curve: BallMassCurve, decay: float, min_count: int = MIN_COUNT, min_levels: int = MIN_LEVELS) -> LocalDimension | None:
    """Weighted least-squares slope of ``log mass`` against ``n log decay``.

    Uses the run of levels from the first one on while the count stays at
    least ``min_count``; weights are the inverse binomial variances of the
    log masses.  Returns ``None`` with fewer than ``min_levels`` such levels.
    """
    use = []
    for n, c, m in zip(curve.levels, curve.counts, curve.masses):
        if c < min_count or m <= 0:
            break
        use.append((n, c, m))
    if len(use) < min_levels:
        return None
    x = np.array([n * math.log(decay) for n, _, _ in use])
    y = np.array([math.log(m) for _, _, m in use])
    w = np.array([c / max(1.0 - m, 1.0 / curve.total) for _, c, m in use])
    sw = math.fsum(w)
    xm = math.fsum(w * x) / sw
    ym = math.fsum(w * y) / sw
    sxx = math.fsum(w * (x - xm) ** 2)
    slope = math.fsum(w * (x - xm) * (y - ym)) / sxx
    return LocalDimension(slope, math.sqrt(1.0 / sxx), [n for n, _, _ in use])


@dataclass
class DimensionReport:
    slopes: list
    centers: list
    aggregate: float
    aggregate_stderr: float
    dispersion: float
    target: float
    target_stderr: float
    levels: list
    sample_size: int
    decay: float

    @property
    def relative_gap(self) -> float:
        if self.target == 0:
            return abs(self.aggregate)
        return abs(self.aggregate - self.target) / self.target

    def to_json(self) -> dict:
        return dict(self.__dict__)


def dimension_target(entropy_est: EstimateWithError, drift_est: EstimateWithError, decay: float) -> tuple[float, float]:
    """``(entropy_est / drift_est) / (-log decay)`` with first-order error propagation."""
    if drift_est.value <= 0:
        raise PreconditionError("drift must be positive")
    t = (entropy_est.value / drift_est.value) / (-math.log(decay))
    if entropy_est.value == 0:
        return 0.0, (entropy_est.stderr / drift_est.value) / (-math.log(decay))
    rel = math.hypot(entropy_est.stderr / entropy_est.value, drift_est.stderr / drift_est.value)
    return t, abs(t) * rel


def hdim_harmonic(bank: SampleBank, decay: float, entropy_est: EstimateWithError, drift_est: EstimateWithError,
                  n_centers: int = 50, level_lo: int = 2, level_hi: int | None = None) -> DimensionReport:
    """Local dimensions at the first ``n_centers`` bank ends, aggregated and compared to the target."""
    level_hi = min(bank.precision + 1, 14) if level_hi is None else level_hi
    slopes, centers, used = [], [], set()
    for c in range(min(n_centers, len(bank))):
        ld = local_dimension(ball_mass_curve(bank, c, level_lo, level_hi), decay)
        if ld is not None:
            slopes.append(ld.slope)
            centers.append(c)
            used.update(ld.levels)
    target, target_se = dimension_target(entropy_est, drift_est, decay)
    if not slopes:
        return DimensionReport([], [], float("nan"), float("nan"), float("nan"), target, target_se, [], len(bank), decay)
    arr = np.array(slopes)
    agg = math.fsum(arr) / len(arr)
    sd = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    disp = sd / abs(agg) if agg != 0 else sd
    return DimensionReport(slopes, centers, agg, sd / math.sqrt(len(arr)), disp, target, target_se,
                           sorted(used), len(bank), decay)


# -- box dimension of the end space ----------------------------------------------

def component_counts(spec: GroupSpec, n_max: int) -> list[int]:
    """``K(n)`` for ``n = 0..n_max``: components of the subgraph on ``{d >= n}``.

    A component is fixed by a coset ``gP`` with ``|g| < n`` whose last
    syllable is not in ``P`` and a component of ``{c in P : |c| >= n - |g|}``.
    """
    counts = spec.sphere_counts(n_max)
    ending = spec.ending_counts(n_max)
    out = [1]
    for n in range(1, n_max + 1):
        total = 0
        for f, fac in enumerate(spec.factors):
            for m in range(n):
                heads = 1 if m == 0 else counts[m] - ending[m][f]
                if heads:
                    total += heads * fac.superlevel_count(n - m)
        out.append(total)
    return out


def component_counts_window(window: CayleyWindow, n_max: int) -> list[int]:
    """The same counts from connected components that reach the window's outer shell."""
    if window.radius < n_max + 2:
        raise PreconditionError("window radius must exceed n_max by at least 2")
    shell = window.dist == window.radius
    out = []
    for n in range(n_max + 1):
        comp = window.components(window.dist >= n)
        out.append(len(np.unique(comp[shell])))
    return out


@dataclass
class BoxDimension:
    counts: list
    slope: float
    stderr: float
    target: float
    window: list
    truncated: bool = False

    def to_json(self) -> dict:
        return dict(self.__dict__)


def boundary_box_dimension(spec: GroupSpec, decay: float, n_max: int, window: CayleyWindow | None = None) -> BoxDimension:
    """Slope of ``log K(n)`` against ``-n log decay`` over ``n`` in ``[n_max // 2, n_max]``."""
    if not 0 < decay < 1:
        raise PreconditionError("decay must lie in (0, 1)")
    counts = component_counts_window(window, n_max) if window is not None else component_counts(spec, n_max)
    lo = max(1, n_max // 2)
    xs = np.array([-n * math.log(decay) for n in range(lo, n_max + 1)])
    ys = np.log(np.array(counts[lo:], dtype=float))
    fit = stats.linregress(xs, ys) if len(xs) > 2 else None
    slope = float(fit.slope) if fit else float((ys[-1] - ys[0]) / (xs[-1] - xs[0]))
    se = float(fit.stderr) if fit else 0.0
    growth = growth_rate_estimate(spec, n_max)
    return BoxDimension(counts, slope, se, growth.value / (-math.log(decay)), [lo, n_max])


# -- regular trees ---------------------------------------------------------------------

@dataclass(frozen=True)
class RegularTreeSpec:
    """Level depths ``scales[0] < scales[1] < ...``, ``branching[n]`` children per node at level ``n``, contraction ``ratio``."""

    branching: tuple
    scales: tuple
    ratio: float

    def __post_init__(self):
        problems = []
        if len(self.branching) != len(self.scales):
            problems.append("tree: branching and scales must have the same length")
        if not 0 < self.ratio < 1:
            problems.append(f"tree.ratio: {self.ratio} not in (0, 1)")
        if any(int(m) != m or m < 1 for m in self.branching):
            problems.append("tree.branching: entries must be integers >= 1")
        if any(n <= 0 for n in self.scales[:1]) or any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            problems.append("tree.scales: must be positive and strictly increasing")
        for i in range(1, len(self.scales)):
            if self.scales[i] > 0 and self.scales[i] / self.scales[i - 1] > 1 + 3 / i:
                problems.append(f"tree.scales[{i}]: ratio scales[{i}]/scales[{i - 1}] too large; consecutive scales must have ratio tending to 1")
                break
        if problems:
            raise SpecificationError(problems)


@dataclass
class TreeDimension:
    value: float
    sequence: list
    window: list


def _tree_statistic(log_counts, spec: RegularTreeSpec, horizon: int) -> TreeDimension:
    seq = [log_counts[n] / (-spec.scales[n] * math.log(spec.ratio)) for n in range(horizon)]
    lo = max(0, math.ceil(horizon / 2) - 1)
    return TreeDimension(min(seq[lo:]), seq, [lo + 1, horizon])


def regular_tree_dimension(spec: RegularTreeSpec, horizon: int | None = None) -> TreeDimension:
    """``liminf log(prod(branching[:n])) / (-scales[n - 1] * log(ratio))``, the liminf read as the minimum over the last half of the horizon."""
    horizon = len(spec.branching) if horizon is None else horizon
    if horizon < 3 or horizon > len(spec.branching):
        raise PreconditionError("horizon must be between 3 and the number of levels")
    logs = list(np.cumsum([math.log(m) for m in spec.branching[:horizon]]))
    return _tree_statistic(logs, spec, horizon)


def materialize_tree(spec: RegularTreeSpec, depth: int, budget: int = 5 * 10**6) -> list[np.ndarray]:
    """Parent arrays: ``parents[n][i]`` is the level-``n`` ancestor index of level-``n+1`` node ``i``."""
    parents, size = [], 1
    for n in range(depth):
        m = int(spec.branching[n])
        if size * m > budget:
            raise PreconditionError(f"tree of depth {depth} exceeds {budget} nodes")
        parents.append(np.repeat(np.arange(size), m))
        size *= m
    return parents


def tree_box_dimension(spec: RegularTreeSpec, depth: int) -> TreeDimension:
    """Box counts on a materialized tree: leaves grouped by their level-``n`` ancestor."""
    if depth < 3 or depth > 12:
        raise PreconditionError("materialized depth must lie in 3..12")
    parents = materialize_tree(spec, depth)
    nodes = np.arange(len(parents[-1]))
    counts = [0] * depth
    for n in range(depth - 1, -1, -1):
        counts[n] = len(np.unique(nodes))
        nodes = parents[n][nodes]
    return _tree_statistic([math.log(c) for c in counts], spec, depth)


# -- packing probes ---------------------------------------------------------------------

@dataclass
class PackingReport:
    center: EndApproximation
    n: int
    sep_factor: float
    count: int
    witnesses: list
    mode: str
    candidates: int
    low_support: bool = False
    verified: bool | None = None

    def to_json(self) -> dict:
        return {"center": self.center.to_json(), "n": self.n, "sep_factor": self.sep_factor, "count": self.count,
                "mode": self.mode, "candidates": self.candidates, "low_support": self.low_support,
                "verified": self.verified, "witnesses": [w.to_json() for w in self.witnesses]}


def _witness(spec: GroupSpec, key: tuple, level: int) -> EndApproximation:
    ray = canonical_ray(spec, key, level + MARGIN + 1)
    return EndApproximation(GroupElement(spec, ray), level + 1, "explicit-ray")


def ball_sphere(anchor: EndApproximation, n: int, sphere_len: int) -> list[GroupElement]:
    """Elements of the sphere ``S_L`` inside the component of ``{d >= n}`` containing ``anchor``'s tail."""
    spec = anchor.spec
    if sphere_len < n:
        raise PreconditionError("L must be >= n")
    if n <= 0:
        return [GroupElement(spec, k) for k in spec.enumerate_sphere(sphere_len)]
    cur = LabelCursor(spec, anchor.representative.syllables)
    k, prefix, f, comp = cur.label(n - 1)
    glen = cur.cum[k]
    t = n - glen
    fac = spec.factors[f]
    out = []
    for m in range(t, sphere_len - glen + 1):
        for c in fac.sphere(m):
            if fac.superlevel_component(c, t) != comp:
                continue
            head = prefix + ((f, c),)
            for w in spec.enumerate_sphere(sphere_len - glen - m, forbid_first=f):
                out.append(GroupElement(spec, head + w))
    return out


def _verify(report: PackingReport, decay: float) -> bool:
    n, thr = report.n, report.sep_factor * decay**report.n
    ws = report.witnesses
    for w in ws:
        r = separation_radius(report.center, w)
        if r.separated and decay**r.radius > decay**n + 1e-15:
            return False
    for i in range(len(ws)):
        for j in range(i + 1, len(ws)):
            r = separation_radius(ws[i], ws[j])
            if not r.separated or not decay**r.radius > thr:
                return False
    return True


def packing_enumeration(anchor: EndApproximation, n: int, decay: float, k: int = 2, verify: bool = True) -> PackingReport:
    """Greedy ``decay^(k+1) decay^n``-separated subset of all ends in ``B(anchor, decay^n)``.

    Two ends are that far apart exactly when their components at level
    ``n + k`` differ, and every such component meets the sphere of radius
    ``n + k + 1``; the candidates are those sphere points, in canonical order.
    """
    sphere_len = n + k + 1
    if anchor.precision < sphere_len:
        raise PreconditionError(f"center precision {anchor.precision} < {sphere_len}")
    spec = anchor.spec
    cands = sorted(ball_sphere(anchor, n, sphere_len), key=GroupElement.sort_key)
    seen, witnesses = set(), []
    for u in cands:
        lab = LabelCursor(spec, u.syllables).label(sphere_len - 1)
        if lab not in seen:
            seen.add(lab)
            witnesses.append(_witness(spec, u.syllables, sphere_len))
    rep = PackingReport(anchor, n, decay ** (k + 1), len(witnesses), witnesses, "enumeration", len(cands))
    if verify:
        rep.verified = _verify(rep, decay)
    return rep


def packing_construction(spec: GroupSpec, factor: int, n: int, decay: float, k: int = 2, verify: bool = True) -> PackingReport:
    """Witnesses ``entropy_est * ray`` for a 2-separated subset of the factor sphere ``S_(n+k)``.

    The factor must be one-ended (free abelian of rank >= 2); the center is
    the end of the factor coset through the identity.
    """
    fac = spec.factors[factor]
    if fac.kind != "free_abelian" or fac.rank < 2:
        raise PreconditionError("construction mode needs a free abelian factor of rank >= 2")
    depth = n + k + 1 + MARGIN
    e0 = tuple([depth] + [0] * (fac.rank - 1))
    anchor = EndApproximation(GroupElement(spec, ((factor, e0),)), depth - MARGIN, "explicit-ray")
    sphere = sorted(fac.sphere(n + k), key=lambda elem: elem)
    chosen = []
    for elem in sphere:
        if all(fac.dist(elem, c) >= 2 for c in chosen):
            chosen.append(elem)
    witnesses = [_witness(spec, ((factor, elem),), n + k + 1) for elem in chosen]
    rep = PackingReport(anchor, n, decay ** (k + 1), len(witnesses), witnesses, "construction", len(sphere))
    if verify:
        rep.verified = _verify(rep, decay)
    return rep


def packing_bank(bank: SampleBank, center: int, n: int, decay: float, k: int = 2) -> PackingReport:
    """Greedy packing among the bank ends inside ``B(center, decay^n)``."""
    sphere_len = n + k + 1
    if sphere_len - 1 > bank.precision:
        raise PreconditionError(f"level {sphere_len - 1} exceeds bank precision {bank.precision}")
    members = bank.ball_members(center, n)
    order = sorted(members, key=lambda i: bank.ends[i].representative.sort_key())
    cls = bank.level_classes(sphere_len - 1)
    seen, witnesses = set(), []
    for i in order:
        if cls[i] not in seen:
            seen.add(cls[i])
            witnesses.append(bank.ends[i])
    rep = PackingReport(bank.ends[center], n, decay ** (k + 1), len(witnesses), witnesses, "bank", len(members),
                        low_support=len(members) < MIN_COUNT)
    rep.verified = _verify(rep, decay)
    return rep


def ball_cover_count(anchor: EndApproximation, n: int, level: int) -> int:
    """Components of ``{d >= level}`` inside the ``decay^n`` ball of ``anchor``: its cover number at radius ``decay^level``."""
    spec = anchor.spec
    return len({LabelCursor(spec, u.syllables).label(level - 1) for u in ball_sphere(anchor, n, level)})


@dataclass
class DoublingFit:
    ns: list
    counts: list
    slope: float
    p_value: float
    constant_from: int | None

    def to_json(self) -> dict:
        return dict(self.__dict__)


def doubling_fit(reports: list) -> DoublingFit:
    """Linear fit of the packing counts; ``constant_from`` is the first ``n`` after which counts stay fixed."""
    ns = [r.n for r in reports]
    cs = [r.count for r in reports]
    const = None
    for i in range(len(cs)):
        if all(c == cs[i] for c in cs[i:]):
            const = ns[i]
            break
    if len(set(cs)) == 1:
        return DoublingFit(ns, cs, 0.0, 1.0, const)
    fit = stats.linregress(ns, cs)
    p = float(fit.pvalue)
    if fit.stderr == 0:
        p = 0.0 if fit.slope != 0 else 1.0
    return DoublingFit(ns, cs, float(fit.slope), p, const)
