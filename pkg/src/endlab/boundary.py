"""Visual and Floyd metrics, separation of ends, bottlenecks and shadows.

Separation convention: two ends are separated at level ``m`` when their
tails lie in different components of the subgraph induced on vertices at
distance ``>= m + 1`` from the basepoint.  The separation radius is the
least such ``m``, but never less than 1, and the visual distance is
``decay ** radius``.

In a free product the component of an end at level ``m`` is read off its
normal form: position ``m + 1`` of the geodesic falls in some syllable ``s``
of factor ``P`` after a prefix ``g``, and the component is fixed by
``(g, P)`` together with the component of ``s`` inside ``{c in P : |c| >=
m + 1 - |g|}``.  :func:`end_label` computes that triple; the window routes
recompute the same thing with connected components on a finite ball.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import PreconditionError
from .groups import GroupElement, GroupSpec
from .transitions import transition_points  # noqa: F401  (re-exported)
from .window import CayleyWindow, build_window

MARGIN = 4


@dataclass(frozen=True)
class MetricParams:
    decay: float
    basepoint: GroupElement | None = None

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise PreconditionError(f"decay must lie in (0, 1), got {self.decay}")


@dataclass(frozen=True)
class EndApproximation:
    """A deep vertex standing in for an end, trusted up to level ``precision``."""

    representative: GroupElement
    precision: int
    origin: str = "explicit-ray"

    def __post_init__(self):
        if self.precision < 0:
            raise PreconditionError("precision must be >= 0")
        if self.representative.length < self.precision + MARGIN:
            raise PreconditionError(
                f"representative of length {self.representative.length} cannot carry precision {self.precision} "
                f"(needs length >= precision + {MARGIN})"
            )

    @property
    def spec(self) -> GroupSpec:
        return self.representative.spec

    @classmethod
    def from_ray(cls, prefix: GroupElement, period: GroupElement, length: int) -> "EndApproximation":
        """The end ``prefix * period^infinity``, represented to word length ``>= length``."""
        if period.is_identity():
            raise PreconditionError("ray period must be nontrivial")
        g = prefix
        last = -1
        while g.length < length:
            g = g * period
            if g.length <= last:
                raise PreconditionError("ray period does not escape to infinity")
            last = g.length
        return cls(g, g.length - MARGIN, "explicit-ray")

    @classmethod
    def from_element(cls, g: GroupElement, origin: str = "trajectory-derived", precision: int | None = None):
        p = g.length - MARGIN if precision is None else min(precision, g.length - MARGIN)
        return cls(g, max(p, 0), origin)

    def translated(self, base: GroupElement) -> "EndApproximation":
        """The same end seen from basepoint ``base``: representative ``base^-1 x``."""
        rep = base.inverse() * self.representative
        p = max(0, min(self.precision - base.length, rep.length - MARGIN))
        return EndApproximation(rep, p, self.origin)

    def to_json(self) -> dict:
        return {"representative": str(self.representative), "precision": self.precision, "origin": self.origin}


def canonical_ray(spec: GroupSpec, key: tuple, length: int) -> tuple:
    """Extend ``key`` to word length ``>= length`` alternating first generators of other factors."""
    out = key
    last = key[-1][0] if key else None
    total = spec.length_key(key)
    k = len(spec.factors)
    while total < length:
        f = 0 if last is None else (last + 1) % k
        if f == last:
            f = (f + 1) % k
        g = spec.factors[f].generators[0]
        out = out + ((f, g),)
        total += spec.syllable_length(f, g)
        last = f
    return out


# -- exact separation ------------------------------------------------------

class LabelCursor:
    """Level-by-level component labels of one normal form (basepoint 1)."""

    def __init__(self, spec: GroupSpec, key: tuple):
        self.spec = spec
        self.key = key
        self.cum = [0]
        for f, e in key:
            self.cum.append(self.cum[-1] + spec.syllable_length(f, e))

    @property
    def length(self) -> int:
        return self.cum[-1]

    def label(self, m: int):
        """Component label at level ``m`` (requires ``m + 1 <= length``)."""
        pos = m + 1
        if pos > self.cum[-1]:
            raise PreconditionError(f"level {m} beyond representative length {self.cum[-1]}")
        lo, hi = 0, len(self.key) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.cum[mid + 1] >= pos:
                hi = mid
            else:
                lo = mid + 1
        k = lo
        f, e = self.key[k]
        t = pos - self.cum[k]
        return (k, self.key[:k], f, self.spec.factors[f].superlevel_component(e, t))

    def labels(self, levels) -> list:
        return [self.label(m) for m in levels]


def end_label(x: GroupElement, m: int):
    return LabelCursor(x.spec, x.syllables).label(m)


@dataclass(frozen=True)
class SeparationResult:
    radius: int | None
    separated: bool
    window_radius: int | None = None
    boundary_effect: bool = False
    method: str = "normal-form"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _base(x: EndApproximation, base: GroupElement | None) -> EndApproximation:
    return x if base is None or base.is_identity() else x.translated(base)


def separation_level(x: EndApproximation, y: EndApproximation, basepoint: GroupElement | None = None):
    """Least level at which the two ends are separated, or ``None`` within precision."""
    x, y = _base(x, basepoint), _base(y, basepoint)
    p = min(x.precision, y.precision)
    cx = LabelCursor(x.spec, x.representative.syllables)
    cy = LabelCursor(y.spec, y.representative.syllables)
    for m in range(p + 1):
        if cx.label(m) != cy.label(m):
            return m
    return None


def separation_radius(x: EndApproximation, y: EndApproximation, window: CayleyWindow | None = None,
                      basepoint: GroupElement | None = None) -> SeparationResult:
    """Separation radius from normal forms, or from components of ``window`` when given."""
    if x.spec is not y.spec:
        raise PreconditionError("ends belong to different groups")
    if window is not None:
        return separation_radius_window(x, y, window)
    m = separation_level(x, y, basepoint)
    if m is None:
        return SeparationResult(None, False)
    return SeparationResult(max(1, m), True)


def separation_radius_window(x: EndApproximation, y: EndApproximation, window: CayleyWindow,
                             cache: dict | None = None) -> SeparationResult:
    """The same radius computed by connected components on a finite ball.

    Components are judged infinite when they reach the outer shell; a
    representative whose component misses the shell sets ``boundary_effect``.
    ``cache`` (level -> component labels) may be shared across calls on one window.
    """
    base = window.basepoint
    xo, yo = _base(x, base), _base(y, base)
    p = min(xo.precision, yo.precision)
    if window.radius < p + 1:
        raise PreconditionError(f"window radius {window.radius} too small for precision {p}")
    if not (window.contains(x.representative) and window.contains(y.representative)):
        raise PreconditionError("representatives lie outside the window")
    ix, iy = window.vertex(x.representative), window.vertex(y.representative)
    shell = window.dist == window.radius
    boundary = False
    cache = {} if cache is None else cache
    for m in range(p + 1):
        if m not in cache:
            cache[m] = window.components(window.dist >= m + 1)
        comp = cache[m]
        cx, cy = comp[ix], comp[iy]
        for c in (cx, cy):
            if c < 0 or not shell[comp == c].any():
                boundary = True
        if cx != cy:
            return SeparationResult(max(1, m), True, window.radius, boundary, "window")
    return SeparationResult(None, False, window.radius, boundary, "window")


def visual_distance(x: EndApproximation, y: EndApproximation, params: MetricParams,
                    window: CayleyWindow | None = None) -> float:
    res = separation_radius(x, y, window, basepoint=params.basepoint)
    return params.decay ** res.radius if res.separated else 0.0


# -- Floyd metric -------------------------------------------------------------

@dataclass(frozen=True)
class FloydValue:
    value: float
    inner: float
    window_radius: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


class FloydGraph:
    """Edge-weighted window: an edge costs ``decay ** min(d(base,head), d(base,tail))``.

    The window is centred at ``center``; the basepoint ``base`` defining the
    weights may differ from it, so several basepoints can share one graph.
    """

    def __init__(self, spec: GroupSpec, decay: float, radius: int, center: GroupElement | None = None,
                 basepoint: GroupElement | None = None, window: CayleyWindow | None = None):
        MetricParams(decay)
        self.window = window if window is not None else build_window(spec, radius, center)
        self.decay = decay
        w = self.window
        base = basepoint if basepoint is not None else w.basepoint
        if base == w.basepoint:
            dist = w.dist
        else:
            dist = np.array([spec.length_key(spec.mul_keys(base.inverse().syllables, k)) for k in w.keys])
        self.base_dist = dist
        head, tail = w.edges()
        self._heads, self._tails = head, tail
        weights = decay ** np.minimum(dist[head], dist[tail]).astype(float)
        n = len(w)
        self.graph = sparse.csr_matrix((np.r_[weights, weights], (np.r_[head, tail], np.r_[tail, head])), shape=(n, n))
        self._inner_cache = {}

    def _inner(self, shrink: int):
        if shrink not in self._inner_cache:
            keep = self.window.dist <= self.window.radius - shrink
            k = keep.astype(float)
            self._inner_cache[shrink] = sparse.diags(k) @ self.graph @ sparse.diags(k)
        return self._inner_cache[shrink]

    def distances(self, sources, shrink: int = 0) -> np.ndarray:
        g = self.graph if shrink == 0 else self._inner(shrink)
        return csgraph.dijkstra(g, directed=False, indices=sources)

    def distance(self, x: GroupElement, y: GroupElement) -> FloydValue:
        w = self.window
        for g in (x, y):
            if not w.contains(g) or w.dist[w.vertex(g)] > w.radius - 2:
                raise PreconditionError(f"{g} must lie within radius {w.radius - 2} of the window centre")
        ix, iy = w.vertex(x), w.vertex(y)
        if ix == iy:
            return FloydValue(0.0, 0.0, w.radius)
        outer = float(self.distances([ix])[0, iy])
        inner = math.inf
        if w.dist[ix] <= w.radius - 4 and w.dist[iy] <= w.radius - 4:
            inner = float(self.distances([ix], shrink=4)[0, iy])
        return FloydValue(outer, inner, w.radius)


def floyd_distance(x: GroupElement, y: GroupElement, params: MetricParams, window_radius: int) -> FloydValue:
    """Truncated Floyd distance on the radius-``window_radius`` ball around the basepoint.

    ``inner`` is the value on the radius ``window_radius - 4`` ball (``inf`` when an
    endpoint lies outside it); refining the window can only lower the value.
    """
    spec = x.spec
    base = params.basepoint if params.basepoint is not None else spec.identity
    return FloydGraph(spec, params.decay, window_radius, base).distance(x, y)


# -- bottlenecks and shadows ------------------------------------------------------

def ball_elements(center: GroupElement, thickness: int) -> list[GroupElement]:
    spec = center.spec
    out = []
    for r in range(thickness + 1):
        for key in spec.enumerate_sphere(r):
            out.append(center * GroupElement(spec, key))
    return out


def _coset_connected(fac, forbidden: set, target) -> bool:
    """Whether the identity reaches ``target`` in the factor's Cayley graph minus ``forbidden``."""
    start = fac.identity
    if start in forbidden or target in forbidden:
        return False
    if start == target:
        return True
    if fac.kind == "finite":
        allowed = None
    else:
        pts = list(forbidden) + [start, target]
        lo = [min(p[i] for p in pts) - 1 for i in range(fac.rank)]
        hi = [max(p[i] for p in pts) + 1 for i in range(fac.rank)]
        allowed = (lo, hi)
    seen = {start}
    queue = deque([start])
    while queue:
        a = queue.popleft()
        for g in fac.generators:
            b = fac.mul(a, g)
            if b in seen or b in forbidden:
                continue
            if allowed is not None and any(not lo <= c <= hi for c, lo, hi in zip(b, *allowed)):
                continue
            if b == target:
                return True
            seen.add(b)
            queue.append(b)
    return False


def detect_bottleneck(candidate: GroupElement, x: GroupElement, y: EndApproximation, thickness: int,
                      window: CayleyWindow | None = None):
    """Whether every path from ``x`` to the end ``y`` meets the closed ``thickness``-ball at ``candidate``.

    Without a window the answer is exact, from the coset tree of the normal
    form: the path must pass every syllable boundary of ``x^-1 y`` and inside
    each coset the two boundaries must stay connected once the ball is
    removed.  With a window the answer is ``True``/``False`` or ``None``
    when the component of ``y`` does not reach the window's outer shell.
    """
    if window is not None:
        return _bottleneck_window(candidate, x, y, thickness, window)
    spec = x.spec
    shift = x.inverse()
    rep = (shift * y.representative).syllables
    ball = {(shift * head).syllables for head in ball_elements(candidate, thickness)}
    if () in ball or rep in ball:
        return True
    # forbidden factor elements per syllable index of rep
    forbidden: dict[int, set] = {}
    for key in ball:
        j = len(key)
        if j <= len(rep) and key[: j - 1] == rep[: j - 1] and key[-1][0] == rep[j - 1][0]:
            forbidden.setdefault(j - 1, set()).add(key[-1][1])
        if j < len(rep) and key == rep[:j]:
            forbidden.setdefault(j, set()).add(spec.factors[rep[j][0]].identity)
    for k, fb in forbidden.items():
        f, e = rep[k]
        if not _coset_connected(spec.factors[f], fb, e):
            return True
    return False


def _bottleneck_window(candidate, x, y, thickness, window):
    w = window
    if not (w.contains(x) and w.contains(y.representative)):
        raise PreconditionError("window must contain x and the representative of y")
    removed = np.zeros(len(w), dtype=bool)
    for head in ball_elements(candidate, thickness):
        if w.contains(head):
            removed[w.vertex(head)] = True
    ix, iy = w.vertex(x), w.vertex(y.representative)
    if removed[ix] or removed[iy]:
        return True
    comp = w.components(~removed)
    if comp[ix] == comp[iy]:
        return False
    if not (w.dist[comp == comp[iy]] == w.radius).any():
        return None
    return True


def in_big_shadow(g: GroupElement, y: EndApproximation, thickness: int) -> bool:
    """Some geodesic from 1 to the representative of ``y`` meets the ``thickness``-ball at ``g``."""
    rep = y.representative
    target = rep.length
    for head in ball_elements(g, thickness):
        if head.length + (head.inverse() * rep).length == target:
            return True
    return False


def shadow_membership(g: GroupElement, y: EndApproximation, thickness: int, window: CayleyWindow | None = None):
    """``(in_partial, in_big)`` for the end ``y`` and the shadows of ``g``."""
    partial = detect_bottleneck(g, g.spec.identity, y, thickness, window)
    return partial, in_big_shadow(g, y, thickness)


# -- geodesic helpers for the visibility check ------------------------------------

def distance_to_geodesic(point: GroupElement, a: GroupElement, b: GroupElement) -> int:
    """Word distance from ``point`` to the normal-form geodesic from ``a`` to ``b``."""
    from .transitions import geodesic_vertices

    path = geodesic_vertices(a.inverse() * b)
    w = a.inverse() * point
    return min((p.inverse() * w).length for p in path)


def sample_elements(spec: GroupSpec, rng: np.random.Generator, n: int, length_range=(1, 8)) -> list[GroupElement]:
    """Random reduced elements: random generator words, reduced to normal form."""
    out = []
    k = len(spec.generators)
    for _ in range(n):
        n_letters = int(rng.integers(length_range[0], length_range[1] + 1))
        key = ()
        for j in rng.integers(0, k, size=n_letters):
            f, g = spec.generators[int(j)]
            key = spec.rmul_syllable(key, f, g)
        out.append(GroupElement(spec, key))
    return out


__all__ = [
    "MARGIN", "MetricParams", "EndApproximation", "SeparationResult", "FloydValue", "FloydGraph",
    "canonical_ray", "LabelCursor", "end_label", "separation_level", "separation_radius",
    "separation_radius_window", "visual_distance", "floyd_distance", "ball_elements",
    "detect_bottleneck", "in_big_shadow", "shadow_membership", "transition_points",
    "distance_to_geodesic", "sample_elements",
]
