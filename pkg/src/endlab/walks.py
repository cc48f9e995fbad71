"""Step distributions and the random-walk sampler.

Every walk draws its increments from its own generator seeded with
``(master_seed, walk_index)``, so a walk's path does not depend on how walks
are batched or how many worker processes run them.  The batch sampler keeps,
per walk, a stack of normal-form syllables in numpy arrays and updates all
walks of a chunk in lockstep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import PreconditionError, SpecificationError
from .groups import GroupElement, GroupSpec
from .transitions import distance_to_transitions

ADMISSIBILITY_DEPTH = 12
CLOSURE_CAP = 200_000
DEFAULT_CHUNK = 1024


@dataclass(frozen=True)
class AdmissibilityCertificate:
    admissible: bool
    depth: int | None
    missing: tuple = ()

    def to_json(self) -> dict:
        return {"admissible": self.admissible, "depth": self.depth, "missing": list(self.missing)}


def _as_probability(p, where):
    try:
        if isinstance(p, str):
            return Fraction(p.strip())
        if isinstance(p, (int, Fraction)):
            return Fraction(p)
        return float(p)
    except (ValueError, ZeroDivisionError):
        raise SpecificationError([f"{where}: {p!r} is not a probability"]) from None


def admissibility(spec: GroupSpec, support, depth: int = ADMISSIBILITY_DEPTH) -> AdmissibilityCertificate:
    """Breadth-first closure of the semigroup generated by ``support``.

    Admissible once every generator of ``spec`` is a product of at most
    ``depth`` support elements.
    """
    wanted = {(s,) for s in spec.generators}
    steps = [g.syllables for g in support]
    reached = set()
    level = set(steps)
    for d in range(1, depth + 1):
        reached |= level
        if wanted <= reached:
            return AdmissibilityCertificate(True, d)
        if len(reached) > CLOSURE_CAP:
            break
        nxt = {spec.mul_keys(x, s) for x in level for s in steps}
        level = nxt - reached
        if not level:
            break
    missing = sorted(spec.format_key(k) for k in wanted - reached)
    return AdmissibilityCertificate(False, None, tuple(missing))


class StepDistribution:
    """A finitely supported probability measure on a free product.

    Duplicate support entries are merged.  With ``strict=True`` (the default)
    a measure whose support does not generate the group as a semigroup is
    rejected; ``strict=False`` keeps such degenerate measures usable for
    deterministic test walks while recording the failed certificate.
    """

    def __init__(self, spec: GroupSpec, support, strict: bool = True, where: str = "measure"):
        problems = []
        merged: dict[tuple, object] = {}
        order = []
        for i, (g, p) in enumerate(support):
            if not isinstance(g, GroupElement) or g.spec is not spec:
                problems.append(f"{where}.support[{i}]: element does not belong to {spec.name}")
                continue
            p = _as_probability(p, f"{where}.support[{i}].probability")
            if not p > 0:
                problems.append(f"{where}.support[{i}].probability: {p} is not positive")
                continue
            if g.syllables not in merged:
                order.append(g.syllables)
                merged[g.syllables] = p
            else:
                merged[g.syllables] = merged[g.syllables] + p
        if not merged and not problems:
            problems.append(f"{where}.support: empty")
        if problems:
            raise SpecificationError(problems)
        total = sum(merged.values())
        if abs(float(total) - 1.0) > 1e-12:
            raise SpecificationError([f"{where}: probabilities sum to {float(total)!r}, not 1"])
        self.spec = spec
        self.elements = [GroupElement(spec, k) for k in order]
        self.probs = np.array([float(merged[k]) for k in order], dtype=float)
        self.probs = self.probs / math.fsum(self.probs)
        self.certificate = admissibility(spec, self.elements)
        self.strict = strict
        if strict and not self.certificate.admissible:
            raise SpecificationError(
                [f"{where}: support does not generate the group as a semigroup within depth "
                 f"{ADMISSIBILITY_DEPTH}; unreachable generators: {', '.join(self.certificate.missing)}"]
            )

    @classmethod
    def from_words(cls, spec: GroupSpec, pairs, strict: bool = True, where: str = "measure"):
        """Build from ``(word, probability)`` pairs; probabilities may be ``"1/4"`` strings."""
        support, problems = [], []
        for i, (w, p) in enumerate(pairs):
            try:
                support.append((spec.parse(str(w)), p))
            except SpecificationError as exc:
                problems.extend(f"{where}.support[{i}].word: {msg}" for msg in exc.violations)
        if problems:
            raise SpecificationError(problems)
        return cls(spec, support, strict=strict, where=where)

    @classmethod
    def simple_random_walk(cls, spec: GroupSpec):
        k = len(spec.generators)
        return cls(spec, [(spec.generator(j), Fraction(1, k)) for j in range(k)])

    def __len__(self):
        return len(self.elements)

    def __repr__(self):
        return f"StepDistribution({self.spec.name}, support={len(self)})"

    @property
    def max_step_length(self) -> int:
        return max(g.length for g in self.elements)

    @property
    def admissible(self) -> bool:
        return self.certificate.admissible

    def first_moment(self) -> float:
        return math.fsum(p * g.length for g, p in zip(self.elements, self.probs))

    def to_json(self) -> dict:
        return {
            "support": [[str(g), float(p)] for g, p in zip(self.elements, self.probs)],
            "certificate": self.certificate.to_json(),
        }


def walk_rng(master_seed: int, walk_index: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(walk_index)])


def draw_increments(measure: StepDistribution, n_steps: int, master_seed: int, walk_index: int) -> np.ndarray:
    """Indices into ``measure.elements`` for the increments of one walk."""
    if len(measure) == 1:
        return np.zeros(n_steps, dtype=np.int64)
    return walk_rng(master_seed, walk_index).choice(len(measure), size=n_steps, p=measure.probs)


@dataclass
class Trajectory:
    positions: list
    increments: np.ndarray
    master_seed: int
    walk_index: int

    def __len__(self):
        return len(self.positions)

    @property
    def end(self) -> GroupElement:
        return self.positions[-1]


def sample_trajectory(measure: StepDistribution, n_steps: int, seed: int, walk_index: int = 0) -> Trajectory:
    """Positions at steps ``0..n_steps`` (starting at the identity) of walk ``walk_index`` under ``seed``."""
    if n_steps < 1:
        raise PreconditionError("n_steps must be >= 1")
    inc = draw_increments(measure, n_steps, seed, walk_index)
    spec = measure.spec
    steps = [g.syllables for g in measure.elements]
    key = ()
    pos = [spec.identity]
    for k in inc:
        key = spec.mul_keys(key, steps[k])
        pos.append(GroupElement(spec, key))
    return Trajectory(pos, inc, seed, walk_index)


# -- batch sampler ----------------------------------------------------------

class _Plan:
    """Array form of a step distribution for the stack sampler."""

    def __init__(self, measure: StepDistribution):
        spec = measure.spec
        self.spec = spec
        self.width = max(f.rank if f.kind == "free_abelian" else 1 for f in spec.factors)
        self.finite = [f.kind == "finite" for f in spec.factors]
        self.tables = [np.asarray(f._mul, dtype=np.int32) if f.kind == "finite" else None for f in spec.factors]
        self.flens = [np.asarray([f.length(a) for a in range(f.order)], dtype=np.int32) if f.kind == "finite" else None
                      for f in spec.factors]
        self.steps = []
        for g in measure.elements:
            syls = []
            for f, e in g.syllables:
                vec = np.zeros(self.width, dtype=np.int32)
                enc = spec.factors[f].encode(e)
                vec[: len(enc)] = enc
                syls.append((f, vec, spec.syllable_length(f, e)))
            self.steps.append(syls)
        self.max_syllables = max(len(s) for s in self.steps)

    def decode(self, facs, els) -> tuple:
        spec = self.spec
        return tuple((f, spec.factors[f].decode(vec)) for f, vec in zip(facs, els))


class _Stacks:
    def __init__(self, plan: _Plan, n: int, cap: int):
        self.plan = plan
        self.fac = np.full((n, cap), -1, dtype=np.int8)
        self.el = np.zeros((n, cap, plan.width), dtype=np.int32)
        self.sl = np.zeros((n, cap), dtype=np.int32)
        self.depth = np.zeros(n, dtype=np.int64)
        self.length = np.zeros(n, dtype=np.int64)

    def apply(self, idx: np.ndarray, f: int, vec: np.ndarray, vlen: int):
        if idx.size == 0:
            return
        plan = self.plan
        d = self.depth[idx]
        top = np.maximum(d - 1, 0)
        same = (d > 0) & (self.fac[idx, top] == f)
        mi, mt = idx[same], top[same]
        if mi.size:
            old = self.el[mi, mt]
            if plan.finite[f]:
                new0 = plan.tables[f][old[:, 0], vec[0]]
                newlen = plan.flens[f][new0]
                new = old.copy()
                new[:, 0] = new0
            else:
                new = old + vec
                newlen = np.abs(new).sum(axis=1)
            self.length[mi] += newlen - self.sl[mi, mt]
            gone = newlen == 0
            self.depth[mi[gone]] -= 1
            keep = ~gone
            self.el[mi[keep], mt[keep]] = new[keep]
            self.sl[mi[keep], mt[keep]] = newlen[keep]
        pi = idx[~same]
        if pi.size:
            pd = self.depth[pi]
            self.fac[pi, pd] = f
            self.el[pi, pd] = vec
            self.sl[pi, pd] = vlen
            self.depth[pi] += 1
            self.length[pi] += vlen

    def step(self, col: np.ndarray):
        for k, syls in enumerate(self.plan.steps):
            idx = np.flatnonzero(col == k)
            for f, vec, vlen in syls:
                self.apply(idx, f, vec, vlen)

    def keys(self) -> list[tuple]:
        out = []
        for i in range(len(self.depth)):
            d = int(self.depth[i])
            out.append(self.plan.decode(self.fac[i, :d].tolist(), self.el[i, :d].tolist()))
        return out

    def max_syllable(self) -> np.ndarray:
        cols = np.arange(self.sl.shape[1])
        return np.where(cols[None, :] < self.depth[:, None], self.sl, 0).max(axis=1).astype(np.int64)

    def snapshot(self):
        dmax = int(self.depth.max()) if self.depth.size else 0
        return (self.fac[:, :dmax].copy(), self.el[:, :dmax].copy(), self.depth.copy(), self.length.copy())


@dataclass
class WalkBatch:
    """Per-walk observations, rows in walk-index order."""

    n_steps: int
    master_seed: int
    first_walk: int
    checkpoints: tuple
    lengths: np.ndarray
    projections: np.ndarray
    tracking: np.ndarray | None = None
    keys: dict = field(default_factory=dict)

    @property
    def n_walks(self) -> int:
        return self.lengths.shape[0]

    def column(self, n: int) -> int:
        return self.checkpoints.index(n)


def _tracking_rows(plan: _Plan, snaps, final, radius: int) -> np.ndarray:
    spec = plan.spec
    ffac, fel, fdepth, _ = final
    n = len(fdepth)
    out = np.zeros((n, len(snaps)), dtype=np.int64)
    xkeys = [plan.decode(ffac[i, : fdepth[i]].tolist(), fel[i, : fdepth[i]].tolist()) for i in range(n)]
    cums = [None] * n
    for c, (sfac, sel, sdepth, _) in enumerate(snaps):
        for i in range(n):
            y = plan.decode(sfac[i, : sdepth[i]].tolist(), sel[i, : sdepth[i]].tolist())
            if cums[i] is None:
                cums[i] = [0]
                for f, e in xkeys[i]:
                    cums[i].append(cums[i][-1] + spec.syllable_length(f, e))
            out[i, c] = distance_to_transitions(spec, y, xkeys[i], radius, cums[i])
    return out


def _run_chunk(task):
    measure, n_steps, seed, lo, hi, checkpoints, key_steps, tracking_radius = task
    plan = _Plan(measure)
    n = hi - lo
    inc = np.empty((n, n_steps), dtype=np.int16)
    for r, w in enumerate(range(lo, hi)):
        inc[r] = draw_increments(measure, n_steps, seed, w)
    stacks = _Stacks(plan, n, n_steps * plan.max_syllables + 1)
    cps = set(checkpoints)
    lengths = np.zeros((n, len(checkpoints)), dtype=np.int64)
    proj = np.zeros_like(lengths)
    keys = {}
    snaps = []
    col = 0
    for t in range(n_steps + 1):
        if t > 0:
            stacks.step(inc[:, t - 1])
        if t in cps:
            lengths[:, col] = stacks.length
            proj[:, col] = stacks.max_syllable()
            if tracking_radius is not None:
                snaps.append(stacks.snapshot())
            col += 1
        if t in key_steps:
            keys[t] = stacks.keys()
    tracking = None
    if tracking_radius is not None:
        tracking = _tracking_rows(plan, snaps, stacks.snapshot(), tracking_radius)
    return lengths, proj, tracking, keys


def simulate(
    measure: StepDistribution,
    n_steps: int,
    master_seed: int,
    n_walks: int,
    checkpoints=(),
    key_steps=(),
    tracking_radius: int | None = None,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
    first_walk: int = 0,
) -> WalkBatch:
    """Run walks ``first_walk .. first_walk + n_walks - 1`` for ``n_steps`` steps.

    ``checkpoints`` (``n_steps`` is always added) select the times at which
    word length and the largest syllable length are recorded; ``key_steps``
    the times at which full normal forms are kept.  With ``tracking_radius``
    set, the distance from each checkpoint position to the transition points
    of the geodesic towards the final position is recorded as well.
    """
    if n_steps < 1 or n_walks < 1:
        raise PreconditionError("n_steps and n_walks must be >= 1")
    if chunk < 1 or workers < 1:
        raise PreconditionError("chunk size and worker count must be >= 1")
    cps = tuple(sorted({int(c) for c in checkpoints if 0 <= c <= n_steps} | {n_steps}))
    ks = frozenset(int(k) for k in key_steps)
    if any(not 0 <= k <= n_steps for k in ks):
        raise PreconditionError("key steps must lie in 0..n_steps")
    tasks = [
        (measure, n_steps, master_seed, lo, min(lo + chunk, first_walk + n_walks), cps, ks, tracking_radius)
        for lo in range(first_walk, first_walk + n_walks, chunk)
    ]
    if workers == 1 or len(tasks) == 1:
        results = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    lengths = np.concatenate([r[0] for r in results])
    proj = np.concatenate([r[1] for r in results])
    tracking = np.concatenate([r[2] for r in results]) if tracking_radius is not None else None
    keys = {k: [key for r in results for key in r[3][k]] for k in sorted(ks)}
    return WalkBatch(n_steps, master_seed, first_walk, cps, lengths, proj, tracking, keys)
