"""Finite balls of the Cayley graph with array adjacency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import BudgetExceeded, PreconditionError
from .groups import GroupElement, GroupSpec

WINDOW_BUDGET = 5 * 10**6


@dataclass
class CayleyWindow:
    """Ball of radius ``radius`` around ``basepoint``.

    ``keys[i]`` is the normal form of vertex i, ``dist[i]`` its distance from
    the basepoint and ``nbr[i, j]`` the index of ``keys[i] * generator_j``
    (-1 when that neighbour lies outside the window).
    """

    spec: GroupSpec
    radius: int
    basepoint: GroupElement
    keys: list
    index: dict
    dist: np.ndarray
    nbr: np.ndarray
    _csr: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.keys)

    def vertex(self, g) -> int:
        key = g.syllables if isinstance(g, GroupElement) else g
        try:
            return self.index[key]
        except KeyError:
            raise PreconditionError(f"{self.spec.format_key(key)} lies outside the radius-{self.radius} window") from None

    def contains(self, g) -> bool:
        key = g.syllables if isinstance(g, GroupElement) else g
        return key in self.index

    def element(self, i: int) -> GroupElement:
        return GroupElement(self.spec, self.keys[i])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Each undirected edge once, as arrays ``(head, tail)`` with ``head < tail``."""
        if "edges" not in self._csr:
            n, k = self.nbr.shape
            head = np.repeat(np.arange(n), k)
            tail = self.nbr.ravel()
            keep = (tail >= 0) & (head < tail)
            self._csr["edges"] = (head[keep], tail[keep])
        return self._csr["edges"]

    def adjacency(self) -> sparse.csr_matrix:
        if "adj" not in self._csr:
            head, tail = self.edges()
            n = len(self)
            data = np.ones(2 * len(head), dtype=np.int8)
            self._csr["adj"] = sparse.csr_matrix((data, (np.r_[head, tail], np.r_[tail, head])), shape=(n, n))
        return self._csr["adj"]

    def shell(self) -> np.ndarray:
        """Indices of the outer sphere ``dist == radius``."""
        return np.flatnonzero(self.dist == self.radius)

    def bfs(self, source: int, mask: np.ndarray | None = None) -> np.ndarray:
        """Hop distances from ``source`` (``-1`` where unreachable), optionally inside ``mask``."""
        adj = self.adjacency()
        if mask is not None:
            keep = mask.astype(np.int8)
            adj = sparse.diags(keep) @ adj @ sparse.diags(keep)
        d = csgraph.shortest_path(adj, method="D", unweighted=True, indices=source)
        return np.where(np.isinf(d), -1, d).astype(np.int64)

    def components(self, mask: np.ndarray) -> np.ndarray:
        """Component labels of the subgraph induced on ``mask`` (``-1`` off the mask)."""
        head, tail = self.edges()
        keep = mask[head] & mask[tail]
        n = len(self)
        g = sparse.csr_matrix((np.ones(int(keep.sum()), dtype=np.int8), (head[keep], tail[keep])), shape=(n, n))
        _, labels = csgraph.connected_components(g, directed=False)
        return np.where(mask, labels, -1)


def build_window(spec: GroupSpec, radius: int, basepoint: GroupElement | None = None, budget: int = WINDOW_BUDGET) -> CayleyWindow:
    """Breadth-first construction of the radius-``radius`` ball around ``basepoint``."""
    if radius < 0:
        raise PreconditionError("window radius must be >= 0")
    base = basepoint if basepoint is not None else spec.identity
    counts = spec.sphere_counts(radius)
    if sum(counts) > budget:
        feasible = max(r for r in range(radius + 1) if sum(counts[: r + 1]) <= budget)
        raise BudgetExceeded(f"window of radius {radius} has {sum(counts)} vertices > budget {budget}", feasible=feasible)
    gens = spec.generators
    ngen = len(gens)
    factors = spec.factors
    # per last syllable: for each generator, (replaces_last, new_last_or_None | appended syllable)
    moves = {}

    def moves_for(last):
        out = []
        for f, g in gens:
            if last is not None and last[0] == f:
                x = factors[f].mul(last[1], g)
                out.append((True, None if factors[f].is_identity(x) else (f, x)))
            else:
                out.append((False, (f, g)))
        moves[last] = out
        return out

    keys = [base.syllables]
    index = {base.syllables: 0}
    dist = [0]
    rows = []
    frontier = [0]
    for d in range(radius + 1):
        nxt = []
        grow = d < radius
        for i in frontier:
            key = keys[i]
            last = key[-1] if key else None
            mv = moves.get(last) or moves_for(last)
            prefix = key[:-1]
            row = []
            for replaces, syl in mv:
                if replaces:
                    nk = prefix + (syl,) if syl is not None else prefix
                else:
                    nk = key + (syl,)
                t = index.get(nk)
                if t is None:
                    if grow:
                        t = len(keys)
                        index[nk] = t
                        keys.append(nk)
                        dist.append(d + 1)
                        nxt.append(t)
                    else:
                        t = -1
                row.append(t)
            rows.append(row)
        frontier = nxt
    # vertices are appended in BFS order and rows are produced in the same order
    nbr = np.asarray(rows, dtype=np.int64).reshape(len(keys), ngen)
    return CayleyWindow(spec, radius, base, keys, index, np.asarray(dist, dtype=np.int64), nbr)


def right_multiplication_map(window: CayleyWindow, word: list[int]) -> np.ndarray:
    """``out[i]`` = index of ``element(i) * word`` for the generator word (-1 if it leaves the window)."""
    cur = np.arange(len(window))
    for j in word:
        ok = cur >= 0
        nxt = np.full_like(cur, -1)
        nxt[ok] = window.nbr[cur[ok], j]
        cur = nxt
    return cur
