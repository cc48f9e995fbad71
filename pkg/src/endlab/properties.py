"""Randomized invariant suites, one group of checks per module.

Each suite returns the number of instances it examined and every violation
it found; a suite passes when the violation list is empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import (
    MARGIN,
    EndApproximation,
    FloydGraph,
    MetricParams,
    detect_bottleneck,
    distance_to_geodesic,
    in_big_shadow,
    sample_elements,
    separation_radius,
    visual_distance,
)
from .convolution import ConvolutionRun, convolve_tables, total_variation
from .dimension import (
    ball_cover_count,
    ball_mass_curve,
    build_sample_bank,
    component_counts,
    packing_bank,
)
from .groups import GroupElement, GroupSpec, coset_projection_sup
from .walks import StepDistribution, simulate
from .window import build_window

SUITE_VERSION = 1


@dataclass
class SuiteResult:
    module: str
    name: str
    instances: int = 0
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def check(self, ok: bool, detail) -> None:
        self.instances += 1
        if not ok and len(self.violations) < 20:
            self.violations.append(str(detail() if callable(detail) else detail))
        elif not ok:
            self.violations.append("...")

    def to_json(self) -> dict:
        return {"module": self.module, "name": self.name, "instances": self.instances,
                "violations": len(self.violations), "examples": self.violations[:5], "passed": self.passed}


def _largest_radius(spec: GroupSpec, cap: int) -> int:
    counts = spec.sphere_counts(40)
    r, total = 0, 1
    while r + 1 <= 40 and total + counts[r + 1] <= cap:
        r += 1
        total += counts[r]
    return r


def random_ends(spec: GroupSpec, rng: np.random.Generator, count: int, length: int, precision: int, root=None,
                max_shared: int | None = None) -> list[EndApproximation]:
    """Ends whose representatives share random-length prefixes with earlier ones (or with ``root``).

    ``max_shared`` caps the word length of a shared prefix, which keeps every
    pair separated well inside the precision.
    """
    reps = []
    k = len(spec.generators)
    pool = [root.syllables] if root is not None else []
    for _ in range(count):
        key = ()
        if pool and rng.random() < 0.85:
            parent = pool[int(rng.integers(len(pool)))]
            cut = int(rng.integers(0, len(parent) + 1))
            key = parent[:cut]
            while max_shared is not None and spec.length_key(key) > max_shared:
                key = key[:-1]
        while spec.length_key(key) < length:
            f, g = spec.generators[int(rng.integers(k))]
            key = spec.rmul_syllable(key, f, g)
        reps.append(key)
        pool.append(key)
    return [EndApproximation.from_element(GroupElement(spec, r), "explicit-ray", precision) for r in reps]


# -- group-core --------------------------------------------------------------------

def group_suites(spec: GroupSpec, rng: np.random.Generator, n: int) -> list[SuiteResult]:
    out = []
    xs = sample_elements(spec, rng, 3 * n, (0, 10))
    a, b, c = xs[:n], xs[n:2 * n], xs[2 * n:]
    s = SuiteResult("group-core", "associativity-and-identity")
    for x, y, z in zip(a, b, c):
        s.check((x * y) * z == x * (y * z), lambda: f"({x})({y})({z})")
        s.check(x * spec.identity == x and x * x.inverse() == spec.identity, lambda: f"identity/inverse at {x}")
    out.append(s)
    s = SuiteResult("group-core", "triangle-inequality")
    for x, y in zip(a, b):
        s.check((x * y).length <= x.length + y.length, lambda: f"|{x}.{y}|")
    out.append(s)
    s = SuiteResult("group-core", "parse-format-round-trip")
    for x in xs[:n]:
        s.check(spec.parse(str(x)) == x, lambda: f"round trip of {x}")
    out.append(s)
    s = SuiteResult("group-core", "coset-projection-bound")
    for x in xs[:n]:
        proj, _ = coset_projection_sup(x)
        s.check(proj <= x.length, lambda: f"projection {proj} > |{x}|")
    out.append(s)
    s = SuiteResult("group-core", "window-distance-equals-word-length")
    r = min(_largest_radius(spec, 60_000), 8)
    w = build_window(spec, r)
    d = w.bfs(0)
    for i in rng.choice(len(w), size=min(n, len(w)), replace=False):
        s.check(d[i] == w.dist[i] == spec.length_key(w.keys[i]), lambda: f"vertex {w.keys[i]}")
    out.append(s)
    s = SuiteResult("group-core", "sphere-sizes")
    counts = spec.sphere_counts(r)
    for m in range(r + 1):
        s.check(int((w.dist == m).sum()) == counts[m], lambda: f"#S_{m}")
        closed = _closed_form_sphere(spec, m)
        if closed is not None:
            s.check(closed == counts[m], lambda: f"closed form #S_{m}")
    out.append(s)
    return out


def _closed_form_sphere(spec: GroupSpec, m: int):
    facs = spec.factors
    if all(f.kind == "free_abelian" and f.rank == 1 for f in facs):
        k = len(facs)
        return 1 if m == 0 else 2 * k * (2 * k - 1) ** (m - 1)
    if len(facs) == 2 and all(f.kind == "finite" and f.order == 3 and len(f.generators) == 2 for f in facs):
        return 1 if m == 0 else 2 ** (m + 1)
    return None


# -- walk-engine ----------------------------------------------------------------------

def walk_suites(measure: StepDistribution, rng: np.random.Generator, n_max: int, seed: int) -> list[SuiteResult]:
    spec = measure.spec
    out = []
    tables = [t for t in ConvolutionRun(measure, n_max)]
    dicts = [t.masses for t in tables]
    s = SuiteResult("walk-engine", "convolution-semigroup")
    for n in range(1, n_max + 1):
        for m in range(1, n_max + 1 - n):
            tv = total_variation(convolve_tables(dicts[n], dicts[m]), dicts[n + m])
            s.check(tv <= 1e-8, lambda: f"TV between power {n + m} and powers {n}, {m}: {tv}")
    for t in tables:
        s.check(abs(t.total() - 1) <= 1e-9 * max(t.n, 1), lambda: f"total mass of power {t.n}")
        radius = t.n * measure.max_step_length
        s.check(bool((t.window.dist[t.values > 0] <= radius).all()), lambda: f"support of power {t.n}")
    out.append(s)
    entropies = [t.entropy() for t in tables]
    mean_lens = [t.mean_length() for t in tables]
    s = SuiteResult("walk-engine", "subadditivity")
    for n in range(1, n_max + 1):
        for m in range(1, n_max + 1 - n):
            s.check(mean_lens[n + m] <= mean_lens[n] + mean_lens[m] + 1e-9, lambda: f"mean length at {n}+{m}")
            s.check(entropies[n + m] <= entropies[n] + entropies[m] + 1e-9, lambda: f"entropy at {n}+{m}")
    out.append(s)
    s = SuiteResult("walk-engine", "sampler-determinism")
    a = simulate(measure, 60, seed, 40, checkpoints=[10, 30], key_steps=[60], chunk=7)
    b = simulate(measure, 60, seed, 40, checkpoints=[10, 30], key_steps=[60], chunk=64)
    s.check(np.array_equal(a.lengths, b.lengths) and a.keys == b.keys, "chunking changed the walks")
    for w in range(40):
        s.check(a.lengths[w, -1] == GroupElement(spec, a.keys[60][w]).length, lambda: f"walk {w} length")
    out.append(s)
    s = SuiteResult("walk-engine", "estimate-ranges")
    drift = a.lengths[:, -1] / 60
    s.check(bool(((drift >= 0) & (drift <= measure.max_step_length)).all()), "drift outside [0, max step]")
    for n in range(n_max):
        s.check(entropies[n] >= -1e-12, lambda: f"entropy({n}) < 0")
    out.append(s)
    return out


# -- boundary-metrics -------------------------------------------------------------------

def boundary_suites(spec: GroupSpec, decay: float, rng: np.random.Generator, n: int) -> list[SuiteResult]:
    out = []
    params = MetricParams(decay)

    s = SuiteResult("boundary-metrics", "ultrametric")
    ends = random_ends(spec, rng, 40, 24, 18)
    vis_dist = np.zeros((len(ends), len(ends)))
    for i in range(len(ends)):
        for j in range(i + 1, len(ends)):
            vis_dist[i, j] = vis_dist[j, i] = visual_distance(ends[i], ends[j], params)
    count = 0
    while count < n:
        i, j, k = (int(idx) for idx in rng.integers(len(ends), size=3))
        count += 1
        s.check(vis_dist[i, j] == vis_dist[j, i], "symmetry")
        s.check(vis_dist[i, j] <= max(vis_dist[i, k], vis_dist[k, j]) + 1e-15, lambda: f"triple ({i},{j},{k})")
        same = ends[i].representative == ends[j].representative
        s.check(not same or vis_dist[i, j] == 0, "distinct distance between equal ends")
    out.append(s)

    s = SuiteResult("boundary-metrics", "basepoint-change-visual")
    far = random_ends(spec, rng, 40, 40, 30, max_shared=14)
    bases = [g for g in sample_elements(spec, rng, 200, (1, 3)) if 1 <= g.length <= 3]
    for t in range(n):
        i, j = (int(idx) for idx in rng.choice(len(far), size=2, replace=False))
        base = bases[t % len(bases)]
        r1 = separation_radius(far[i], far[j])
        r2 = separation_radius(far[i], far[j], basepoint=base)
        if not (r1.separated and r2.separated):
            s.check(r1.separated == r2.separated, lambda: f"separation flag changes under basepoint {base}")
            continue
        ratio = decay ** (r1.radius - r2.radius)
        d = base.length
        s.check(decay**d - 1e-12 <= ratio <= decay ** (-d) + 1e-12, lambda: f"ratio {ratio} at basepoint distance {d}")
    out.append(s)

    big = _largest_radius(spec, 120_000)
    outer = big
    graph = FloydGraph(spec, decay, outer)
    win = graph.window
    inner_pts = np.flatnonzero(win.dist <= outer - 6) if outer >= 6 else np.array([0])
    s = SuiteResult("boundary-metrics", "floyd-refinement")
    srcs = rng.choice(inner_pts, size=min(40, len(inner_pts)), replace=False)
    full = graph.distances(srcs)
    trunc = graph.distances(srcs, shrink=4)
    per = max(1, -(-n // len(srcs)))
    for r, i in enumerate(srcs):
        for j in rng.choice(inner_pts, size=per):
            s.check(full[r, j] <= trunc[r, j] + 1e-12, lambda: f"pair ({i},{j})")
    out.append(s)

    s = SuiteResult("boundary-metrics", "basepoint-change-floyd")
    base = max(bases, key=lambda g: g.length)
    shifted = FloydGraph(spec, decay, outer, basepoint=base, window=win)
    d_o = graph.distances(srcs)
    d_p = shifted.distances(srcs)
    dd = base.length
    for r, i in enumerate(srcs):
        for j in rng.choice(np.flatnonzero(win.dist <= outer - 2), size=per):
            if i == j:
                continue
            ratio = d_o[r, j] / d_p[r, j]
            s.check(decay**dd - 1e-12 <= ratio <= decay ** (-dd) + 1e-12, lambda: f"Floyd ratio {ratio}")
    out.append(s)

    s = SuiteResult("boundary-metrics", "floyd-dominates-visual")
    cand = np.flatnonzero((win.dist >= MARGIN + 1) & (win.dist <= outer - 2))
    pts = rng.choice(cand, size=min(80, len(cand)), replace=False)
    dist = graph.distances(pts)
    count = 0
    while count < n:
        a, b = (int(idx) for idx in rng.choice(len(pts), size=2, replace=False))
        count += 1
        ea = EndApproximation.from_element(win.element(int(pts[a])))
        eb = EndApproximation.from_element(win.element(int(pts[b])))
        vis = visual_distance(ea, eb, params)
        s.check(dist[a, pts[b]] >= vis - 1e-12, lambda: f"floyd {dist[a, pts[b]]} < visual {vis}")
    out.append(s)

    s = SuiteResult("boundary-metrics", "visibility-monotone")
    small = min(outer, 6)
    vis_win = build_window(spec, small)
    records = []
    for v_idx in rng.choice(len(vis_win), size=min(25, len(vis_win)), replace=False):
        vertex = vis_win.element(int(v_idx))
        fg = FloydGraph(spec, decay, small, basepoint=vertex, window=vis_win)
        ends_ab = rng.choice(np.flatnonzero(vis_win.dist <= small - 2), size=(max(1, n // 25), 2))
        dist = fg.distances(np.unique(ends_ab[:, 0]))
        rows = {int(x): r for r, x in enumerate(np.unique(ends_ab[:, 0]))}
        for pa, pb in ends_ab:
            floyd_val = dist[rows[int(pa)], int(pb)]
            records.append((floyd_val, distance_to_geodesic(vertex, vis_win.element(int(pa)), vis_win.element(int(pb)))))
    maxima = []
    for cutoff in (0.25, 0.5, 1.0):
        vals = [d for floyd_val, d in records if floyd_val >= cutoff]
        maxima.append(max(vals) if vals else 0)
    s.instances += len(records)
    for x, y in zip(maxima, maxima[1:]):
        if y > x:
            s.violations.append(f"max distance grows with cutoff: {maxima}")
    out.append(s)

    s = SuiteResult("boundary-metrics", "shadow-sandwich")
    s2 = SuiteResult("boundary-metrics", "partial-in-big-shadow")
    anchor_pool = random_ends(spec, rng, 12, 30, 24)
    checked = 0
    attempts = 0
    while checked < n and attempts < 50 * n:
        attempts += 1
        anchor = anchor_pool[int(rng.integers(len(anchor_pool)))]
        k = int(rng.integers(2, 9))
        g = _point_on_normal_form(anchor.representative, k)
        thickness = int(rng.integers(0, 2))
        if not detect_bottleneck(g, spec.identity, anchor, thickness):
            continue
        probes = random_ends(spec, rng, 20, 30, 24, root=anchor.representative)
        for probe in probes:
            checked += 1
            rv = visual_distance(anchor, probe, params)
            partial = detect_bottleneck(g, spec.identity, probe, thickness)
            big_ = in_big_shadow(g, probe, thickness)
            r = decay**k
            inner_ok = partial or rv > decay ** (thickness + 1) * r + 1e-15
            outer_ok = not big_ or rv <= decay ** (-thickness - 1) * r + 1e-15
            s.check(inner_ok and outer_ok, lambda: f"sandwich fails for {probe.representative} at {g}, thickness={thickness}")
            s2.check(not partial or big_, lambda: f"partial but not big at {g}")
    out.extend([s, s2])
    return out


def _point_on_normal_form(g: GroupElement, k: int) -> GroupElement:
    spec = g.spec
    key = ()
    left = k
    for f, e in g.syllables:
        syl_len = spec.syllable_length(f, e)
        if left <= syl_len:
            fac = spec.factors[f]
            if fac.kind == "free_abelian":
                point = fac.point_on_geodesic(e, left)
            else:
                point = fac.geodesic(e)[left]
            return GroupElement(spec, spec.rmul_syllable(key, f, point))
        key = key + ((f, e),)
        left -= syl_len
    return g


# -- dimension-lab --------------------------------------------------------------------------

def dimension_suites(measure: StepDistribution, decay: float, seed: int, n_walks: int, n_steps: int) -> list[SuiteResult]:
    spec = measure.spec
    out = []
    bank = build_sample_bank(measure, n_steps, n_walks, seed, query_depth=10)
    level_hi = min(bank.precision, 10)
    s = SuiteResult("dimension-lab", "mass-monotonicity")
    for c in range(min(50, len(bank))):
        curve = ball_mass_curve(bank, c, 1, level_hi)
        for x, y in zip(curve.masses, curve.masses[1:]):
            s.check(y <= x and 0 <= y <= 1, lambda: f"center {c}")
    out.append(s)
    s = SuiteResult("dimension-lab", "ultrametric-ball-rigidity")
    for c in range(min(20, len(bank))):
        for n in range(2, level_hi + 1):
            members = bank.ball_members(c, n)
            for j in members[:5]:
                s.check(np.array_equal(bank.ball_members(int(j), n), members), lambda: f"center {c} level {n}")
    out.append(s)
    s = SuiteResult("dimension-lab", "cover-packing-duality")
    s2 = SuiteResult("dimension-lab", "witness-validity")
    for c in range(min(10, len(bank))):
        for n in range(2, min(level_hi - 3, 7) + 1):
            rep = packing_bank(bank, c, n, decay)
            cover = ball_cover_count(bank.ends[c], n, n + 3)
            s.check(rep.count <= cover, lambda: f"packing {rep.count} > cover {cover}")
            s2.check(bool(rep.verified), lambda: f"witnesses at center {c}, n={n}")
    out.extend([s, s2])
    s = SuiteResult("dimension-lab", "component-counts-monotone")
    comp_counts = component_counts(spec, 12)
    for x, y in zip(comp_counts, comp_counts[1:]):
        s.check(y >= x, f"component counts not monotone: {comp_counts}")
    out.append(s)
    return out


def run_all(measure: StepDistribution, decay: float, seed: int, instances: int = 1000, conv_depth: int = 6,
            bank_size: int = 2000, bank_steps: int = 200) -> list[SuiteResult]:
    """Every suite of every module, driven by one seed."""
    rng = np.random.default_rng([int(seed), SUITE_VERSION])
    spec = measure.spec
    out = []
    out += group_suites(spec, rng, instances)
    out += walk_suites(measure, rng, conv_depth, seed)
    out += boundary_suites(spec, decay, rng, instances)
    out += dimension_suites(measure, decay, seed, bank_size, bank_steps)
    return out


def summarize(results: list[SuiteResult]) -> dict:
    return {
        "suites": len(results),
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
        "instances": sum(r.instances for r in results),
        "violations": sum(len(r.violations) for r in results),
        "all_passed": all(r.passed for r in results),
    }
