"""Exact convolution powers of a step distribution.

Masses live on the vertices of a Cayley window large enough to hold the
support of the ``n``-th power; one convolution step scatters each vertex's
mass to its right translates by the support elements with ``np.bincount``,
always in support order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, InternalConsistencyError, PreconditionError
from .groups import GroupElement
from .walks import StepDistribution
from .window import WINDOW_BUDGET, CayleyWindow, build_window, right_multiplication_map


@dataclass
class ConvolutionTable:
    """The law of the walk after ``n`` steps, stored on a window."""

    n: int
    window: CayleyWindow
    values: np.ndarray

    def mass(self, g: GroupElement) -> float:
        i = self.window.index.get(g.syllables)
        return 0.0 if i is None else float(self.values[i])

    @property
    def masses(self) -> dict:
        idx = np.flatnonzero(self.values)
        return {self.window.element(i): float(self.values[i]) for i in idx}

    def support_size(self) -> int:
        return int(np.count_nonzero(self.values))

    def total(self) -> float:
        return math.fsum(self.values)

    def entropy(self) -> float:
        return table_entropy(self.values)

    def mean_length(self) -> float:
        p = self.values
        nz = p > 0
        return math.fsum(p[nz] * self.window.dist[nz])


def table_entropy(values: np.ndarray) -> float:
    p = values[values > 0]
    return -math.fsum(p * np.log(p))


def _window_for(measure: StepDistribution, n: int, budget: int):
    spec = measure.spec
    step = measure.max_step_length
    counts = spec.sphere_counts(n * step)
    if sum(counts) > budget:
        feasible = 0
        while sum(counts[: (feasible + 1) * step + 1]) <= budget:
            feasible += 1
        raise BudgetExceeded(
            f"exact convolution to n={n} needs a window of {sum(counts)} vertices (> {budget}); "
            f"largest feasible n is {feasible}",
            feasible=feasible,
        )
    return build_window(spec, n * step, budget=budget)


class ConvolutionRun:
    """Iterates the convolution powers ``0, 1, ...`` up to ``n_max`` on one shared window."""

    def __init__(self, measure: StepDistribution, n_max: int, budget: int = WINDOW_BUDGET):
        if n_max < 0:
            raise PreconditionError("convolution power must be >= 0")
        self.measure = measure
        self.n_max = n_max
        self.window = _window_for(measure, n_max, budget)
        self.maps = [right_multiplication_map(self.window, measure.spec.generator_word(g.syllables)) for g in measure.elements]

    def __iter__(self):
        size = len(self.window)
        p = np.zeros(size)
        p[0] = 1.0
        yield ConvolutionTable(0, self.window, p)
        for n in range(1, self.n_max + 1):
            idx = np.flatnonzero(p)
            q = np.zeros(size)
            for w, m in zip(self.measure.probs, self.maps):
                tgt = m[idx]
                if (tgt < 0).any():
                    raise InternalConsistencyError("convolution mass left the window")
                q += np.bincount(tgt, weights=p[idx] * w, minlength=size)
            p = q
            yield ConvolutionTable(n, self.window, p)


def exact_convolution(measure: StepDistribution, n: int, budget: int = WINDOW_BUDGET) -> ConvolutionTable:
    """The ``n``-fold convolution power as a :class:`ConvolutionTable`."""
    table = None
    for table in ConvolutionRun(measure, n, budget):
        pass
    return table


@dataclass
class ConvolutionSequence:
    """Entropy and mean length of each convolution power ``n = 0..n_max``."""

    entropies: list
    mean_lengths: list
    last: ConvolutionTable


def convolution_sequence(measure: StepDistribution, n_max: int, budget: int = WINDOW_BUDGET, keep=()) -> tuple[ConvolutionSequence, dict]:
    """Run the convolution once, recording entropies and mean lengths and keeping tables at ``keep``."""
    hs, ls, kept = [], [], {}
    table = None
    for table in ConvolutionRun(measure, n_max, budget):
        hs.append(table.entropy())
        ls.append(table.mean_length())
        if table.n in keep:
            kept[table.n] = ConvolutionTable(table.n, table.window, table.values.copy())
    return ConvolutionSequence(hs, ls, table), kept


def convolve_tables(left: dict, right: dict) -> dict:
    """Dictionary convolution ``(p * q)(g) = sum p(x) q(x^{-1} g)``; reference implementation."""
    out: dict = {}
    for x, px in left.items():
        for y, qy in right.items():
            g = x * y
            out[g] = out.get(g, 0.0) + px * qy
    return out


def step_table(measure: StepDistribution) -> dict:
    out: dict = {}
    for g, p in zip(measure.elements, measure.probs):
        out[g] = out.get(g, 0.0) + float(p)
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
