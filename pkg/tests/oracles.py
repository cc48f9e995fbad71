"""Independent reference implementations used by the tests.

Nothing here imports endlab: group arithmetic is done on letter strings or
syllable stacks, distances by plain BFS, and probabilities by dictionaries
or one-dimensional chains.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from fractions import Fraction


class LetterGroup:
    """Free product given by per-letter reduction rules on a stack of letters.

    ``letters`` lists the generators; ``combine(x, y)`` returns the letter
    (or ``""`` for the identity) equal to ``xy`` when both lie in the same
    factor, or ``None`` when they lie in different factors.
    """

    def __init__(self, letters, combine):
        self.letters = list(letters)
        self.combine = combine

    def mul_letter(self, word: str, x: str) -> str:
        if word:
            c = self.combine(word[-1], x)
            if c is not None:
                return word[:-1] + c if c else word[:-1]
        return word + x

    def mul_word(self, word: str, other: str) -> str:
        for x in other:
            word = self.mul_letter(word, x)
        return word

    def ball(self, radius: int) -> dict:
        dist = {"": 0}
        queue = deque([""])
        while queue:
            w = queue.popleft()
            if dist[w] == radius:
                continue
            for x in self.letters:
                u = self.mul_letter(w, x)
                if u not in dist:
                    dist[u] = dist[w] + 1
                    queue.append(u)
        return dist


def free_group_oracle() -> LetterGroup:
    """F_2 on letters a, A = a^-1, b, B = b^-1; same-letter products stay unreduced."""

    def combine(x, y):
        if x.lower() != y.lower():
            return None
        return "" if x != y else None

    return LetterGroup("aAbB", combine)


def z3z3_oracle() -> LetterGroup:
    """Z/3 * Z/3 on letters a, A = a^2, b, B = b^2."""

    def combine(x, y):
        if x.lower() != y.lower():
            return None
        if x != y:
            return ""
        return x.swapcase()  # a*a = A, A*A = a

    return LetterGroup("aAbB", combine)


class SyllableGroup:
    """Z^2 * Z with elements as tuples of syllables ``("v", (x, y))`` or ``("t", k)``."""

    letters = "xXyYtT"
    _moves = {"x": ("v", (1, 0)), "X": ("v", (-1, 0)), "y": ("v", (0, 1)), "Y": ("v", (0, -1)),
              "t": ("t", 1), "T": ("t", -1)}

    def mul_letter(self, word: tuple, x: str) -> tuple:
        kind, d = self._moves[x]
        if word and word[-1][0] == kind:
            last = word[-1][1]
            new = (last[0] + d[0], last[1] + d[1]) if kind == "v" else last + d
            if new in ((0, 0), 0):
                return word[:-1]
            return word[:-1] + ((kind, new),)
        return word + ((kind, d),)

    def mul_word(self, word, letters: str):
        for x in letters:
            word = self.mul_letter(word, x)
        return word

    def ball(self, radius: int) -> dict:
        dist = {(): 0}
        queue = deque([()])
        while queue:
            w = queue.popleft()
            if dist[w] == radius:
                continue
            for x in self.letters:
                u = self.mul_letter(w, x)
                if u not in dist:
                    dist[u] = dist[w] + 1
                    queue.append(u)
        return dist


def sphere_sizes(oracle, radius: int) -> list[int]:
    dist = oracle.ball(radius)
    out = [0] * (radius + 1)
    for d in dist.values():
        out[d] += 1
    return out


def shell_components(oracle, radius: int, level: int) -> int:
    """Components of ``{d >= level}`` in the radius ball that reach the outer shell (union-find)."""
    dist = oracle.ball(radius)
    parent = {w: w for w, d in dist.items() if d >= level}

    def find(w):
        while parent[w] != w:
            parent[w] = parent[parent[w]]
            w = parent[w]
        return w

    for w in parent:
        for x in oracle.letters:
            u = oracle.mul_letter(w, x)
            if u in parent:
                a, b = find(w), find(u)
                if a != b:
                    parent[a] = b
    return len({find(w) for w, d in dist.items() if d == radius})


def separated_at(oracle, radius: int, x, y, level: int) -> bool:
    """Whether ``x`` and ``y`` lie in different components of ``{d >= level + 1}`` (BFS)."""
    dist = oracle.ball(radius)
    seen = {x}
    queue = deque([x])
    while queue:
        w = queue.popleft()
        if w == y:
            return False
        for z in oracle.letters:
            u = oracle.mul_letter(w, z)
            if u in dist and dist[u] >= level + 1 and u not in seen:
                seen.add(u)
                queue.append(u)
    return True


def brute_force_convolution(oracle, step: dict, n: int) -> dict:
    """Law of the product of ``n`` i.i.d. letters drawn from ``step`` (letter -> probability)."""
    table = {"" if isinstance(oracle, LetterGroup) else (): 1.0}
    for _ in range(n):
        nxt = {}
        for w, p in table.items():
            for x, q in step.items():
                u = oracle.mul_letter(w, x)
                nxt[u] = nxt.get(u, 0.0) + p * q
        table = nxt
    return table


def entropy(table: dict) -> float:
    return -math.fsum(p * math.log(p) for p in table.values() if p > 0)


def birth_death_mean(n_steps: int, up: float, down: float, stay: float = 0.0) -> float:
    """``E[X_N]`` for the chain on ``{0, 1, ...}`` that always steps up from 0."""
    probs = [1.0]
    for _ in range(n_steps):
        nxt = [0.0] * (len(probs) + 1)
        for k, p in enumerate(probs):
            if p == 0.0:
                continue
            if k == 0:
                nxt[1] += p
            else:
                nxt[k + 1] += p * up
                nxt[k - 1] += p * down
                nxt[k] += p * stay
        probs = nxt
    return math.fsum(k * p for k, p in enumerate(probs))


def f2_hitting_cylinder(prefix_length: int) -> Fraction:
    """Harmonic measure of the ends whose geodesic starts with a fixed reduced word.

    For the simple random walk on F_2 the hitting law is invariant under the
    automorphisms permuting the letters, so the first letter has probability
    1/4 and each of the three admissible continuations 1/3.
    """
    if prefix_length == 0:
        return Fraction(1)
    return Fraction(1, 4) * Fraction(1, 3) ** (prefix_length - 1)


def linear_fit(xs, ys) -> tuple[float, float]:
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx
    return slope, my - slope * mx


def floyd_dijkstra(oracle, radius: int, decay: float, x, y) -> float:
    """Shortest path inside the radius ball, an edge costing ``decay ** min(|u|, |v|)``."""

    dist = oracle.ball(radius)
    best = {x: 0.0}
    heap = [(0.0, 0, x)]
    tick = 1
    while heap:
        d, _, w = heapq.heappop(heap)
        if w == y:
            return d
        if d > best.get(w, math.inf):
            continue
        for z in oracle.letters:
            u = oracle.mul_letter(w, z)
            if u not in dist:
                continue
            nd = d + decay ** min(dist[w], dist[u])
            if nd < best.get(u, math.inf):
                best[u] = nd
                heapq.heappush(heap, (nd, tick, u))
                tick += 1
    return math.inf
