"""Free products of finite groups and free abelian groups.

Elements are stored in normal form: a tuple of syllables ``(factor, element)``
with no identity syllables and no two consecutive syllables from the same
factor.  Finite-factor elements are integers (row indices of the
multiplication table, 0 is the identity); free-abelian elements are integer
tuples.  The generating set of the product is the union of the factor
generating sets, so word length is the sum of the factor lengths of the
syllables.
"""

from __future__ import annotations

import itertools
import math
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import BudgetExceeded, PreconditionError, SpecificationError

SPHERE_BUDGET = 10**7
_TOKEN = re.compile(r"([A-Za-z_]+)(\d*)(?:\^(-?\d+))?$")
_IDENTITY_WORDS = {"", "1", "e", "id"}


class FiniteFactor:
    """A finite group given by a multiplication table, row-major, 0 = identity."""

    kind = "finite"
    virtually_cyclic = True

    def __init__(self, name: str, table: Sequence[Sequence[int]], generators=None, where="factor"):
        violations = validate_table(table, where)
        if violations:
            raise SpecificationError(violations)
        self.name = name
        self.order = len(table)
        self._mul = [list(map(int, row)) for row in table]
        self._inv = [row.index(0) for row in self._mul]
        if generators is None:
            gens = list(range(1, self.order))
        else:
            gens = sorted(set(int(g) for g in generators))
            bad = [g for g in gens if not 0 < g < self.order]
            if bad:
                raise SpecificationError([f"{where}.generators: invalid element ids {bad}"])
            # the Cayley graph is undirected, so the set is closed under inverses
            gens = sorted(set(gens) | {self._inv[g] for g in gens})
        self.generators = gens
        self._lengths, self._parent = self._bfs()
        if any(d is None for d in self._lengths):
            raise SpecificationError([f"{where}.generators: {gens} do not generate the group"])
        self._spheres: dict[int, list[int]] = {}
        for a, d in enumerate(self._lengths):
            self._spheres.setdefault(d, []).append(a)
        self.diameter = max(self._lengths)
        self._components: dict[int, dict[int, int]] = {}

    def _bfs(self):
        lengths = [None] * self.order
        parent = [None] * self.order
        lengths[0] = 0
        queue = deque([0])
        while queue:
            a = queue.popleft()
            for g in self.generators:
                b = self._mul[a][g]
                if lengths[b] is None:
                    lengths[b] = lengths[a] + 1
                    parent[b] = a
                    queue.append(b)
        return lengths, parent

    identity = 0

    def mul(self, a: int, b: int) -> int:
        return self._mul[a][b]

    def inv(self, a: int) -> int:
        return self._inv[a]

    def is_identity(self, a) -> bool:
        return a == 0

    def length(self, a: int) -> int:
        return self._lengths[a]

    def dist(self, a: int, b: int) -> int:
        return self._lengths[self._mul[self._inv[a]][b]]

    def geodesic(self, a: int) -> list[int]:
        """Vertices of the canonical (BFS-tree) geodesic from the identity to ``a``."""
        path = [a]
        while path[-1] != 0:
            path.append(self._parent[path[-1]])
        return path[::-1]

    def sphere(self, m: int) -> list[int]:
        return list(self._spheres.get(m, []))

    def sphere_size(self, m: int) -> int:
        return len(self._spheres.get(m, []))

    def elements(self):
        return range(self.order)

    def superlevel_component(self, a: int, t: int) -> int:
        """Component id of ``a`` in the subgraph induced on ``{c : |c| >= t}``."""
        comp = self._components.get(t)
        if comp is None:
            comp = self._superlevel(t)
            self._components[t] = comp
        return comp[a]

    def superlevel_count(self, t: int) -> int:
        if t > self.diameter:
            return 0
        self.superlevel_component(next(a for a in range(self.order) if self._lengths[a] >= t), t)
        return len(set(self._components[t].values()))

    def _superlevel(self, t):
        comp = {}
        label = 0
        for a in range(self.order):
            if self._lengths[a] < t or a in comp:
                continue
            comp[a] = label
            queue = deque([a])
            while queue:
                x = queue.popleft()
                for g in self.generators:
                    y = self._mul[x][g]
                    if self._lengths[y] >= t and y not in comp:
                        comp[y] = label
                        queue.append(y)
            label += 1
        return comp

    def encode(self, a) -> list[int]:
        return [int(a)]

    def decode(self, vec) -> int:
        return int(vec[0])

    def format(self, a: int) -> str:
        return f"{self.name}{a}"

    def describe(self) -> dict:
        return {"kind": "finite", "name": self.name, "table": self._mul, "generators": self.generators}


class FreeAbelianFactor:
    """Z^d with the standard generators ``±e_i``."""

    kind = "free_abelian"

    def __init__(self, names: Sequence[str], where="factor"):
        names = list(names)
        if len(names) < 1:
            raise SpecificationError([f"{where}.rank: free abelian factor needs rank >= 1"])
        self.names = names
        self.name = names[0]
        self.rank = len(names)
        self.identity = (0,) * self.rank
        gens = []
        for i in range(self.rank):
            for s in (1, -1):
                vec = [0] * self.rank
                vec[i] = s
                gens.append(tuple(vec))
        self.generators = gens
        self.virtually_cyclic = self.rank == 1

    def mul(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def inv(self, a):
        return tuple(-x for x in a)

    def is_identity(self, a) -> bool:
        return not any(a)

    def length(self, a) -> int:
        return sum(abs(x) for x in a)

    def dist(self, a, b) -> int:
        return sum(abs(x - y) for x, y in zip(a, b))

    def geodesic(self, a) -> list[tuple]:
        """Lattice path that exhausts coordinate 0 first, then 1, and so on."""
        cur = [0] * self.rank
        path = [tuple(cur)]
        for i, x in enumerate(a):
            step = 1 if x > 0 else -1
            for _ in range(abs(x)):
                cur[i] += step
                path.append(tuple(cur))
        return path

    def point_on_geodesic(self, a, k: int):
        """The ``k``-th vertex of :meth:`geodesic` without building the path."""
        out = []
        for x in a:
            take = min(abs(x), k)
            out.append(take if x > 0 else -take)
            k -= take
        return tuple(out)

    def sphere(self, m: int) -> list[tuple]:
        return list(_lattice_sphere(self.rank, m))

    def sphere_size(self, m: int) -> int:
        return lattice_sphere_size(self.rank, m)

    def superlevel_component(self, a, t: int) -> int:
        # {|c|_1 >= t} is connected for rank >= 2 and has the two rays of Z otherwise
        if self.rank >= 2:
            return 0
        return 0 if a[0] > 0 else 1

    def superlevel_count(self, t: int) -> int:
        if t <= 0:
            return 1
        return 1 if self.rank >= 2 else 2

    def encode(self, a) -> list[int]:
        return list(a)

    def decode(self, vec) -> tuple:
        return tuple(int(x) for x in vec[: self.rank])

    def format(self, a) -> str:
        parts = []
        for name, x in zip(self.names, a):
            if x == 1:
                parts.append(name)
            elif x:
                parts.append(f"{name}^{x}")
        return " ".join(parts)

    def describe(self) -> dict:
        return {"kind": "free_abelian", "rank": self.rank, "names": self.names}


def lattice_sphere_size(d: int, m: int) -> int:
    if m == 0:
        return 1
    return sum(2**k * math.comb(d, k) * math.comb(m - 1, k - 1) for k in range(1, min(d, m) + 1))


def _lattice_sphere(d, m):
    if d == 1:
        if m == 0:
            yield (0,)
        else:
            yield (m,)
            yield (-m,)
        return
    for x in range(-m, m + 1):
        for rest in _lattice_sphere(d - 1, m - abs(x)):
            yield (x,) + rest


def validate_table(table, where="factor") -> list[str]:
    """All problems with a multiplication table, each tagged with its location."""
    out = []
    n = len(table)
    if n < 2:
        return [f"{where}.table: factor must be nontrivial (order >= 2)"]
    for i, row in enumerate(table):
        if len(row) != n:
            out.append(f"{where}.table[{i}]: row has {len(row)} entries, expected {n}")
            continue
        for j, x in enumerate(row):
            if not isinstance(x, int) or not 0 <= x < n:
                out.append(f"{where}.table[{i}][{j}]: entry {x!r} not in 0..{n - 1}")
    if out:
        return out
    for i in range(n):
        if table[0][i] != i or table[i][0] != i:
            out.append(f"{where}.table[0]/[{i}]: element 0 is not the identity at index {i}")
        if 0 not in table[i]:
            out.append(f"{where}.table[{i}]: element {i} has no right inverse")
    for a, b, c in itertools.product(range(n), repeat=3):
        if table[table[a][b]][c] != table[a][table[b][c]]:
            out.append(f"{where}.table: not associative at ({a},{b},{c})")
            break
    return out


@dataclass(frozen=True)
class CosetRef:
    """Left coset ``representative · factor`` of a free factor."""

    representative: tuple
    factor: int


class GroupSpec:
    """A free product of at least two nontrivial factors with infinitely many ends."""

    def __init__(self, factors, name: str | None = None):
        factors = list(factors)
        problems = []
        if len(factors) < 2:
            problems.append("group.factors: a free product needs at least 2 factors")
        if len(factors) == 2 and all(f.kind == "finite" and f.order == 2 for f in factors):
            problems.append("group.factors: Z/2 * Z/2 is two-ended (virtually cyclic); rejected")
        seen = {}
        for i, f in enumerate(factors):
            names = f.names if f.kind == "free_abelian" else [f.name]
            for nm in names:
                if nm in _IDENTITY_WORDS or not re.fullmatch(r"[A-Za-z_]+", nm):
                    problems.append(f"group.factors[{i}]: invalid generator name {nm!r}")
                elif nm in seen:
                    problems.append(f"group.factors[{i}]: name {nm!r} already used by factor {seen[nm]}")
                seen[nm] = i
        if problems:
            raise SpecificationError(problems)
        self.factors = factors
        self.name = name or " * ".join(_factor_label(f) for f in factors)
        self._names = {}
        for i, f in enumerate(factors):
            if f.kind == "free_abelian":
                for c, nm in enumerate(f.names):
                    self._names[nm] = (i, c)
            else:
                self._names[f.name] = (i, None)
        self.generators = [(i, g) for i, f in enumerate(factors) for g in f.generators]
        self.gen_index = {s: j for j, s in enumerate(self.generators)}
        self.gen_inverse = [self.gen_index[(i, factors[i].inv(g))] for i, g in self.generators]
        self.parabolic_factors = frozenset(i for i, f in enumerate(factors) if not f.virtually_cyclic)
        self.identity = GroupElement(self, ())

    def __repr__(self):
        return f"GroupSpec({self.name!r})"

    def describe(self) -> dict:
        return {"name": self.name, "factors": [f.describe() for f in self.factors]}

    # -- elements --------------------------------------------------------
    def element(self, syllables) -> "GroupElement":
        """Build an element from syllables, reducing to normal form."""
        key = ()
        for f, e in syllables:
            key = self.rmul_syllable(key, f, self._coerce(f, e))
        return GroupElement(self, key)

    def _coerce(self, f, e):
        if not 0 <= f < len(self.factors):
            raise SpecificationError([f"syllable factor index {f} out of range"])
        fac = self.factors[f]
        if fac.kind == "free_abelian":
            e = tuple(int(x) for x in (e if isinstance(e, (tuple, list)) else (e,)))
            if len(e) != fac.rank:
                raise SpecificationError([f"syllable {e} has wrong rank for factor {f}"])
            return e
        e = int(e)
        if not 0 <= e < fac.order:
            raise SpecificationError([f"syllable element {e} out of range for factor {f}"])
        return e

    def generator(self, j: int) -> "GroupElement":
        f, g = self.generators[j]
        return GroupElement(self, ((f, g),))

    def rmul_syllable(self, key: tuple, f: int, e) -> tuple:
        fac = self.factors[f]
        if fac.is_identity(e):
            return key
        if key and key[-1][0] == f:
            x = fac.mul(key[-1][1], e)
            if fac.is_identity(x):
                return key[:-1]
            return key[:-1] + ((f, x),)
        return key + ((f, e),)

    def mul_keys(self, a: tuple, b: tuple) -> tuple:
        i, j = len(a), 0
        mid = None
        while i > 0 and j < len(b) and a[i - 1][0] == b[j][0]:
            f = b[j][0]
            fac = self.factors[f]
            x = fac.mul(a[i - 1][1], b[j][1])
            i -= 1
            j += 1
            if not fac.is_identity(x):
                mid = ((f, x),)
                break
        return a[:i] + (mid or ()) + b[j:]

    def inv_key(self, a: tuple) -> tuple:
        return tuple((f, self.factors[f].inv(e)) for f, e in reversed(a))

    def length_key(self, a: tuple) -> int:
        return sum(self.factors[f].length(e) for f, e in a)

    def syllable_length(self, f: int, e) -> int:
        return self.factors[f].length(e)

    # -- text format -------------------------------------------------------
    def format_key(self, key: tuple) -> str:
        if not key:
            return "1"
        return " ".join(self.factors[f].format(e) for f, e in key)

    def parse(self, text: str) -> "GroupElement":
        """Parse a word such as ``"a^2 b^-1"``, ``"x^3 y t"`` or ``"a1 b2"``."""
        words = text.replace("*", " ").replace("·", " ").split()
        key = ()
        for tok in words:
            if tok in _IDENTITY_WORDS:
                continue
            m = _TOKEN.match(tok)
            if not m or m.group(1) not in self._names:
                raise SpecificationError([f"word {text!r}: unknown token {tok!r}"])
            name, idx, exp = m.group(1), m.group(2), m.group(3)
            f, coord = self._names[name]
            fac = self.factors[f]
            power = int(exp) if exp is not None else 1
            if fac.kind == "free_abelian":
                if idx:
                    raise SpecificationError([f"word {text!r}: token {tok!r} has an index on a free generator"])
                vec = [0] * fac.rank
                vec[coord] = power
                key = self.rmul_syllable(key, f, tuple(vec))
            else:
                e = int(idx) if idx else 1
                if not 0 <= e < fac.order:
                    raise SpecificationError([f"word {text!r}: element {e} out of range in {tok!r}"])
                x = fac.identity
                base = e if power >= 0 else fac.inv(e)
                for _ in range(abs(power)):
                    x = fac.mul(x, base)
                key = self.rmul_syllable(key, f, x)
        return GroupElement(self, key)

    def generator_word(self, key: tuple) -> list[int]:
        """A geodesic word, as generator indices, spelling the element ``key``."""
        out = []
        for f, e in key:
            path = self.factors[f].geodesic(e)
            for prev, nxt in zip(path, path[1:]):
                out.append(self.gen_index[(f, self.factors[f].mul(self.factors[f].inv(prev), nxt))])
        return out

    # -- growth ----------------------------------------------------------
    def sphere_counts(self, n_max: int) -> list[int]:
        """Exact ``#S_n`` for ``n = 0..n_max`` by dynamic programming over syllables."""
        return list(_sphere_counts(self, n_max)[0])

    def ending_counts(self, n_max: int) -> list[list[int]]:
        """``out[n][f]``: number of elements of length n whose last syllable lies in factor f."""
        return [list(r) for r in _sphere_counts(self, n_max)[1]]

    def enumerate_sphere(self, n: int, budget: int = SPHERE_BUDGET, forbid_first=None) -> Iterator[tuple]:
        """Yield the normal-form keys of every element of the sphere of radius ``n``."""
        if n < 0:
            raise PreconditionError("sphere radius must be >= 0")
        total = self.sphere_counts(n)[n]
        if total > budget:
            raise BudgetExceeded(f"#S_{n} = {total} exceeds sphere budget {budget}", partial={"count": total, "truncated": True})
        yield from self._extend((), forbid_first, n)

    def _extend(self, prefix, last, remaining):
        if remaining == 0:
            yield prefix
            return
        for f, fac in enumerate(self.factors):
            if f == last:
                continue
            for m in range(1, remaining + 1):
                sph = fac.sphere(m)
                if not sph and fac.kind == "finite" and m > fac.diameter:
                    break
                for e in sph:
                    yield from self._extend(prefix + ((f, e),), f, remaining - m)


def _sphere_counts(spec: GroupSpec, n_max: int):
    cache = spec.__dict__.setdefault("_count_cache", {})
    if n_max in cache:
        return cache[n_max]
    k = len(spec.factors)
    ending = [[0] * k for _ in range(n_max + 1)]
    total = [1] + [0] * n_max
    sizes = [[fac.sphere_size(m) for m in range(n_max + 1)] for fac in spec.factors]
    for n in range(1, n_max + 1):
        for f in range(k):
            s = 0
            for m in range(1, n + 1):
                if sizes[f][m]:
                    prev = total[n - m] - (ending[n - m][f] if n - m > 0 else 0)
                    s += sizes[f][m] * prev
            ending[n][f] = s
        total[n] = sum(ending[n])
    cache[n_max] = (tuple(total), tuple(tuple(r) for r in ending))
    return cache[n_max]


def _factor_label(f):
    if f.kind == "free_abelian":
        return "Z" if f.rank == 1 else f"Z^{f.rank}"
    return f"G{f.order}"


class GroupElement:
    """Immutable normal-form element of a :class:`GroupSpec`."""

    __slots__ = ("spec", "syllables")

    def __init__(self, spec: GroupSpec, syllables: tuple):
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "syllables", tuple(syllables))

    def __setattr__(self, name, value):
        raise AttributeError("GroupElement is immutable")

    def __reduce__(self):
        return (GroupElement, (self.spec, self.syllables))

    def __eq__(self, other):
        return isinstance(other, GroupElement) and self.spec is other.spec and self.syllables == other.syllables

    def __hash__(self):
        return hash(self.syllables)

    def __mul__(self, other):
        return multiply(self, other)

    def __repr__(self):
        return f"<{self.spec.format_key(self.syllables)}>"

    def __str__(self):
        return self.spec.format_key(self.syllables)

    def __len__(self):
        return len(self.syllables)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.spec, self.spec.inv_key(self.syllables))

    @property
    def length(self) -> int:
        return self.spec.length_key(self.syllables)

    def is_identity(self) -> bool:
        return not self.syllables

    def sort_key(self):
        """Canonical order: by word length, then lexicographically on syllables."""
        return (self.length, _canonical(self.syllables))

    def to_json(self) -> list:
        return [[f, self.spec.factors[f].encode(e)] for f, e in self.syllables]


def _canonical(key):
    return tuple((f, e if isinstance(e, tuple) else (e,)) for f, e in key)


def multiply(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.spec is not b.spec:
        raise SpecificationError(["multiply: operands belong to different group specifications"])
    return GroupElement(a.spec, a.spec.mul_keys(a.syllables, b.syllables))


def invert(a: GroupElement) -> GroupElement:
    return a.inverse()


def word_length(g: GroupElement) -> int:
    return g.length


def distance(a: GroupElement, b: GroupElement) -> int:
    return word_length(multiply(a.inverse(), b))


def enumerate_sphere(spec: GroupSpec, n: int, budget: int = SPHERE_BUDGET) -> set[GroupElement]:
    return {GroupElement(spec, k) for k in spec.enumerate_sphere(n, budget)}


def coset_projection_sup(g: GroupElement) -> tuple[int, CosetRef | None]:
    """Largest ``d_U(1, g)`` over factor cosets ``U``, with the maximizing coset.

    In a free product the projections of 1 and g on a coset ``pP`` touched by
    the normal form are the entry and exit points of the corresponding
    syllable, so ``d_U`` is that syllable's factor length.
    """
    best, witness = 0, None
    for i, (f, e) in enumerate(g.syllables):
        d = g.spec.syllable_length(f, e)
        if d > best:
            best, witness = d, CosetRef(g.syllables[:i], f)
    return best, witness


def element_from_json(spec: GroupSpec, data) -> GroupElement:
    return spec.element((f, spec.factors[f].decode(code)) for f, code in data)


def free_group(rank: int = 2) -> GroupSpec:
    names = "abcdefgh"[:rank]
    return GroupSpec([FreeAbelianFactor([n]) for n in names], name=f"F_{rank}")


def cyclic_table(n: int) -> list[list[int]]:
    return [[(i + j) % n for j in range(n)] for i in range(n)]


def cyclic_free_product(orders=(3, 3), names="ab") -> GroupSpec:
    facs = [FiniteFactor(nm, cyclic_table(k)) for nm, k in zip(names, orders)]
    return GroupSpec(facs, name=" * ".join(f"Z/{k}" for k in orders))


def z2_star_z() -> GroupSpec:
    return GroupSpec([FreeAbelianFactor(["x", "y"]), FreeAbelianFactor(["t"])], name="Z^2 * Z")
