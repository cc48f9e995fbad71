"""Transition points on normal-form geodesics and distances to them.

The normal-form geodesic of ``g`` visits positions ``0..|g|``; syllable ``k``
spans positions ``cum[k]..cum[k+1]`` of one factor coset.  A position is deep
when its ``radius``-neighbourhood along the path stays inside the span of a single
syllable from a non-virtually-cyclic factor; every other position is a
transition point.
"""

from __future__ import annotations

import bisect
from itertools import accumulate

from .errors import PreconditionError
from .groups import GroupElement, GroupSpec


def syllable_offsets(spec: GroupSpec, key: tuple) -> list[int]:
    """``[0, |s_1|, |s_1|+|s_2|, ...]`` for the syllables of ``key``."""
    return [0] + list(accumulate(spec.syllable_length(f, e) for f, e in key))


def deep_intervals(spec: GroupSpec, key: tuple, radius: int, cum=None) -> list[tuple[int, int]]:
    """Closed position intervals of deep vertices, one per long parabolic syllable."""
    if radius < 1:
        raise PreconditionError("radius must be >= 1")
    cum = cum if cum is not None else syllable_offsets(spec, key)
    out = []
    for k, (f, _) in enumerate(key):
        if f in spec.parabolic_factors and cum[k + 1] - cum[k] >= 2 * radius:
            out.append((cum[k] + radius, cum[k + 1] - radius))
    return out


def transition_points(g: GroupElement, radius: int) -> list[int]:
    """Positions along the normal-form geodesic of ``g`` that are not deep."""
    spec = g.spec
    cum = syllable_offsets(spec, g.syllables)
    deep = set()
    for lo, hi in deep_intervals(spec, g.syllables, radius, cum):
        deep.update(range(lo, hi + 1))
    return [i for i in range(cum[-1] + 1) if i not in deep]


def geodesic_vertices(g: GroupElement) -> list[GroupElement]:
    """The vertices of the normal-form geodesic from 1 to ``g``, position by position."""
    spec = g.spec
    out = [spec.identity]
    key = ()
    for f, e in g.syllables:
        fac = spec.factors[f]
        path = fac.geodesic(e)
        for elem in path[1:]:
            out.append(GroupElement(spec, key + ((f, elem),)))
        key = key + ((f, e),)
    return out


def _gap_to_transition(spec, key, cum, radius, pos):
    """Distance along the path from position ``pos`` to the nearest transition position."""
    k = bisect.bisect_right(cum, pos) - 1
    if k >= len(key):
        return 0
    f = key[k][0]
    lo, hi = cum[k] + radius, cum[k + 1] - radius
    if f in spec.parabolic_factors and lo <= hi and lo <= pos <= hi:
        return min(pos - lo + 1, hi - pos + 1)
    return 0


def distance_to_transitions(spec: GroupSpec, y: tuple, x: tuple, radius: int, cum=None) -> int:
    """Word distance from ``y`` to the transition points of the normal-form geodesic to ``x``.

    Uses the tree of cosets: a path from ``y`` to the geodesic enters it
    through the last syllable boundary shared by ``y`` and ``x``, or through
    the coset of the first syllable where they disagree.
    """
    cum = cum if cum is not None else syllable_offsets(spec, x)
    j = 0
    m = min(len(x), len(y))
    while j < m and x[j] == y[j]:
        j += 1
    pos = cum[j]
    ylen = spec.length_key(y)
    if j < len(y) and j < len(x) and y[j][0] == x[j][0]:
        f = x[j][0]
        fac = spec.factors[f]
        a, b = y[j][1], x[j][1]
        rest = ylen - pos - fac.length(a)
        best = min(fac.length(a), fac.dist(a, b))
        if best > 0:
            blen = cum[j + 1] - cum[j]
            deep = f in spec.parabolic_factors and blen >= 2 * radius
            if fac.kind == "free_abelian":
                point = lambda k: fac.point_on_geodesic(b, k)
            else:
                path = fac.geodesic(b)
                point = path.__getitem__
            if deep:
                inside = list(range(1, radius)) + list(range(blen - radius + 1, blen))
            else:
                inside = range(1, blen)
            for k in inside:
                d = fac.dist(a, point(k))
                if d < best:
                    best = d
                    if d == 0:
                        break
        return rest + best
    return (ylen - pos) + _gap_to_transition(spec, x, cum, radius, pos)
