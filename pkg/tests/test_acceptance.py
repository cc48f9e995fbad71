"""Acceptance suite: eleven criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines are printed
even under output capture) or directly with ``python3 tests/test_acceptance.py``.
Every criterion runs the shipped configs through the same entry point as the CLI.
"""

from __future__ import annotations

import math
import sys

import pytest

import oracles
from conftest import CONFIGS
from endlab.cli import run_command
from endlab.config import load_config

LOG3 = math.log(3)
_CACHE: dict = {}


def run(config: str, command: str, workers: int | None = None):
    key = (config, command, workers)
    if key not in _CACHE:
        _CACHE[key] = run_command(load_config(CONFIGS / f"{config}.yaml"), command, workers=workers)
    return _CACHE[key]


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}")
        assert ok, detail
    return emit


def test_criterion_01_drift(verdict):
    d = run("f2_srw", "estimate").outputs["drift"]
    finite_n = oracles.birth_death_mean(2000, 0.75, 0.25) / 2000
    ok = (d.extras["n_steps"] == 2000 and d.samples == 10_000
          and abs(d.value - 0.5) <= 3 * d.stderr and abs(d.value - finite_n) <= 3 * d.stderr)
    verdict(1, ok, f"F_2 drift {d.value:.6f} +- {d.stderr:.6f} (limit 0.5, chain at 2000 steps {finite_n:.6f}, 3 SE)")


def test_criterion_02_entropy(verdict, oracle_f2):
    est = run("f2_srw", "estimate").outputs["entropy"]
    ex = est.extras
    target = 0.5 * LOG3
    brute = oracles.entropy(oracles.brute_force_convolution(
        oracle_f2, {c: 0.25 for c in oracle_f2.letters}, 7))
    tables_ok = abs(ex["entropies"][7] - brute) < 1e-12
    rel = abs(est.value - target) / target
    ok = ex["n_exact"] == 12 and rel <= 0.05 and tables_ok and ex["smb_consistent"]
    verdict(2, ok, f"F_2 entropy {est.value:.4f} vs {target:.4f} ({100 * rel:.2f}%, band 5%); "
                   f"last raw difference {ex['last_difference']:.4f}; SMB {ex['smb']:.4f} vs exact rate at n=12 "
                   f"{ex['exact_rate']:.4f}; tables match brute force at n=7: {tables_ok}")


def test_criterion_03_growth(verdict, oracle_f2, oracle_z3z3):
    f2 = run("f2_srw", "estimate").outputs["growth"]
    z3 = run("z3z3_srw", "estimate").outputs["growth"]
    counts_ok = (f2.extras["counts"][:8] == oracles.sphere_sizes(oracle_f2, 7)
                 and z3.extras["counts"][:8] == oracles.sphere_sizes(oracle_z3z3, 7))
    ok = abs(f2.value - LOG3) <= 1e-6 and abs(z3.value - math.log(2)) <= 1e-6 and counts_ok
    verdict(3, ok, f"growth F_2 {f2.value:.9f} (log 3 {LOG3:.9f}), Z/3*Z/3 {z3.value:.9f} "
                   f"(log 2 {math.log(2):.9f}); BFS sphere counts agree: {counts_ok}")


def test_criterion_04_guivarch(verdict):
    parts, ok = [], True
    for name in ("f2_srw", "z3z3_srw", "z2z_srw"):
        out = run(name, "estimate").outputs
        ent, drift, growth = out["entropy"], out["drift"], out["growth"]
        spread = math.sqrt(ent.stderr**2 + (growth.value * drift.stderr) ** 2 + (drift.value * growth.stderr) ** 2)
        holds = ent.value <= drift.value * growth.value + 3 * spread
        ok &= holds and out["guivarch"].passed == holds
        parts.append(f"{name} entropy {ent.value:.4f} <= drift*growth {drift.value * growth.value:.4f} (+3 SE {3 * spread:.4f})")
    verdict(4, ok, "; ".join(parts))


def test_criterion_05_dimension(verdict):
    rep = run("f2_srw", "dimension")
    cfg = rep.config["dimension"]
    row = rep.outputs["by_decay"][0]
    formula = LOG3 / math.log(2)
    gap = abs(row["aggregate"] - row["target"]) / row["target"]
    ok = (row["decay"] == 0.5 and cfg["centers"] == 50 and cfg["walks"] == 20_000
          and gap <= 0.05 and abs(row["aggregate"] - formula) / formula <= 0.05 and row["dispersion"] < 0.10)
    verdict(5, ok, f"F_2 local dimension {row['aggregate']:.4f} vs (entropy/drift)/log 2 = {row['target']:.4f} "
                   f"({100 * gap:.2f}%, band 5%), log3/log2 {formula:.4f}; dispersion "
                   f"{100 * row['dispersion']:.2f}% (< 10%)")


def test_criterion_06_box_dimension(verdict, oracle_f2):
    rep = run("f2_srw", "boundary-dim")
    counts = {r["n"]: r["components"] for r in rep.tables["components"]}
    exact = all(counts[n] == 4 * 3 ** (n - 1) for n in range(1, 11))
    uf = all(counts[n] == oracles.shell_components(oracle_f2, 9, n) for n in range(1, 8))
    parts, ok = [], exact and uf
    for name, growth in (("f2_srw", LOG3), ("z3z3_srw", math.log(2))):
        row = run(name, "boundary-dim").outputs["by_decay"][0]
        target = growth / -math.log(row["decay"])
        ok &= abs(row["slope"] - target) <= 1e-3 and abs(row["slope"] - row["target"]) <= 1e-3
        parts.append(f"{name} slope {row['slope']:.6f} vs {target:.6f}")
    verdict(6, ok, f"component counts = 4*3^(n-1) for n<=10: {exact}; union-find oracle agrees: {uf}; " + "; ".join(parts))


def _formula(spec: dict, horizon: int) -> float:
    ratio = spec["ratio"]
    logs = [sum(math.log(m) for m in spec["branching"][:k]) / (-spec["scales"][k - 1] * math.log(ratio))
            for k in range(1, horizon + 1)]
    return min(logs[horizon // 2 - 1:])


def test_criterion_07_tree_formula(verdict):
    rep = run("trees", "tree-dim")
    specs = rep.config["tree"]["specs"]
    rows = rep.tables["tree"]
    ok = len(rows) == len(specs) == 5
    parts = []
    for spec, row in zip(specs, rows):
        direct = _formula(spec, len(spec["branching"]))
        ok &= abs(row["formula"] - direct) <= 1e-12 and row["depth"] <= 12 and row["relative_gap"] <= 0.02
        parts.append(f"{row['formula']:.4f}/{row['box']:.4f}")
    verdict(7, ok, "formula/box per tree " + ", ".join(parts) + " (within 2%)")


def test_criterion_08_doubling(verdict):
    f2 = run("f2_srw", "doubling")
    z = run("z2z_srw", "doubling")
    a, b = f2.outputs["by_decay"][0], z.outputs["by_decay"][0]
    scale_ok = all(r["sep_factor"] == r["decay"] ** 3 for r in f2.tables["packing"] + z.tables["packing"])
    verified = all(r["verified"] for r in f2.tables["packing"] + z.tables["packing"])
    plateau = a["ns"] == list(range(3, 11)) and len(set(a["counts"])) == 1 and a["constant_from"] == 3
    growth = (b["ns"] == list(range(3, 11)) and all(x < y for x, y in zip(b["counts"], b["counts"][1:]))
              and b["slope"] > 0 and b["p_value"] < 0.01)
    ok = scale_ok and verified and plateau and growth and f2.passed and z.passed
    verdict(8, ok, f"F_2 counts {a['counts']} (plateau from n=3); Z^2*Z counts {b['counts']} "
                   f"slope {b['slope']:.3f} p={b['p_value']:.2g}; separations verified: {verified}")


SUITES = ("ultrametric", "basepoint-change-visual", "floyd-dominates-visual", "shadow-sandwich", "floyd-refinement")


def test_criterion_09_property_suites(verdict):
    ok, parts = True, []
    for name in ("f2_srw", "z3z3_srw", "z2z_srw"):
        rows = {r["suite"]: r for r in run(name, "properties").tables["suites"]}
        fewest = min(rows[s]["instances"] for s in SUITES)
        bad = sum(rows[s]["violations"] for s in SUITES)
        ok &= fewest >= 1000 and bad == 0
        parts.append(f"{name} min instances {fewest}, violations {bad}")
    verdict(9, ok, "; ".join(parts))


def test_criterion_10_tracking(verdict):
    ok, parts = True, []
    for name in ("f2_srw", "z2z_srw"):
        rep = run(name, "tracking")
        rows = {r["n"]: r for r in rep.tables["tracking"]}
        first, last = rows[100], rows[1000]
        for col in ("tracking", "projection"):
            se = math.hypot(first[f"{col}_se"], last[f"{col}_se"])
            drop = first[col] - last[col]
            slope = rep.outputs[f"{col}_slope"]
            ok &= drop >= 2 * se and slope <= 0
            parts.append(f"{name} {col} {first[col]:.4g} -> {last[col]:.4g} "
                         f"({drop / se if se else math.inf:.1f} SE, slope {slope:.2g})")
    verdict(10, ok, "; ".join(parts))


DETERMINISM = [("f2_srw", "estimate"), ("f2_srw", "dimension"), ("f2_srw", "tracking"),
               ("f2_srw", "metrics-check"), ("z3z3_srw", "properties"), ("z2z_srw", "tracking")]


def test_criterion_11_determinism(verdict):
    ok, parts = True, []
    for name, command in DETERMINISM:
        base = run(name, command).payload_text()
        same = all(run_command(load_config(CONFIGS / f"{name}.yaml"), command, workers=w).payload_text() == base
                   for w in (1, 4, 8))
        ok &= same
        parts.append(f"{name}/{command} {'identical' if same else 'DIFFERS'}")
    verdict(11, ok, "payloads with 1, 4 and 8 workers: " + ", ".join(parts))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
