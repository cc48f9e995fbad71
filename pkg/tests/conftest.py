from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from endlab.groups import cyclic_free_product, free_group, z2_star_z  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

# oracle letter -> package word token
LETTERS = {
    "F_2": {"a": "a", "A": "a^-1", "b": "b", "B": "b^-1"},
    "Z/3 * Z/3": {"a": "a1", "A": "a2", "b": "b1", "B": "b2"},
    "Z^2 * Z": {"x": "x", "X": "x^-1", "y": "y", "Y": "y^-1", "t": "t", "T": "t^-1"},
}


def to_element(spec, letters: str):
    table = LETTERS[spec.name]
    return spec.parse(" ".join(table[c] for c in letters) or "1")


def syllables_to_letters(word) -> str:
    """Z^2 * Z oracle element -> a letter word representing it."""
    out = []
    for kind, vec in word:
        if kind == "v":
            out.append(("x" if vec[0] > 0 else "X") * abs(vec[0]) + ("y" if vec[1] > 0 else "Y") * abs(vec[1]))
        else:
            out.append(("t" if vec > 0 else "T") * abs(vec))
    return "".join(out)


@pytest.fixture(scope="session")
def f2():
    return free_group(2)


@pytest.fixture(scope="session")
def z3z3():
    return cyclic_free_product()


@pytest.fixture(scope="session")
def z2z():
    return z2_star_z()


@pytest.fixture(scope="session")
def oracle_f2():
    return oracles.free_group_oracle()


@pytest.fixture(scope="session")
def oracle_z3z3():
    return oracles.z3z3_oracle()


@pytest.fixture(scope="session")
def oracle_z2z():
    return oracles.SyllableGroup()
