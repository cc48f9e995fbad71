"""Experiment configuration files (YAML).

Validation collects every problem before failing, each prefixed with the
dotted location of the offending field.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .dimension import RegularTreeSpec
from .errors import SpecificationError
from .groups import FiniteFactor, FreeAbelianFactor, GroupSpec
from .walks import StepDistribution

COMMANDS = ("estimate", "metrics-check", "dimension", "boundary-dim", "doubling", "tracking", "tree-dim", "properties")

BUDGET_DEFAULTS = {
    "steps": 2000,
    "walks": 10000,
    "window_radius": 10,
    "convolution_depth": 12,
    "sphere_depth": 14,
    "workers": 1,
}

SECTION_DEFAULTS = {
    "estimate": {},
    "dimension": {"centers": 50, "walks": 20000, "steps": 400, "levels": [2, 14]},
    "boundary_dim": {"n_max": 10},
    "doubling": {"mode": "enumeration", "k": 2, "n_range": [3, 10], "center": None, "factor": 0, "expect": None},
    "tracking": {"steps": 2000, "walks": 2000, "checkpoints": None, "radius": 2},
    "tree": {"specs": []},
    "properties": {"instances": 1000, "convolution_depth": 6, "bank_walks": 2000, "bank_steps": 200},
}


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    group: GroupSpec
    measure: StepDistribution
    decays: list
    budgets: dict
    sections: dict
    document: dict = field(repr=False)

    def to_dict(self) -> dict:
        """Canonical form with defaults filled in; re-parses to an equal config."""
        return copy.deepcopy(self.document)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.to_dict() == other.to_dict()

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def echo(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _group(doc, problems) -> tuple[GroupSpec | None, dict]:
    if not isinstance(doc, dict) or "factors" not in doc:
        problems.append("group.factors: missing")
        return None, {}
    facs, canon = [], []
    raw = doc["factors"]
    if not isinstance(raw, list):
        problems.append("group.factors: must be a list")
        return None, {}
    for i, f in enumerate(raw):
        where = f"group.factors[{i}]"
        if not isinstance(f, dict):
            problems.append(f"{where}: must be a mapping")
            continue
        kind = f.get("kind")
        try:
            if kind == "finite":
                name = str(f.get("name", ""))
                table = f.get("table")
                if not isinstance(table, list) or not all(isinstance(r, list) for r in table):
                    problems.append(f"{where}.table: must be a list of rows")
                    continue
                gens = f.get("generators")
                facs.append(FiniteFactor(name, table, gens, where=where))
                canon.append({"kind": "finite", "name": name, "table": table, "generators": gens})
            elif kind == "free_abelian":
                names = f.get("names")
                if names is None and "rank" in f:
                    names = [f"{f.get('name', 'z')}{j}" for j in range(int(f["rank"]))]
                if not isinstance(names, list) or not names:
                    problems.append(f"{where}.names: rank must be >= 1 (give a non-empty list of names)")
                    continue
                facs.append(FreeAbelianFactor([str(n) for n in names], where=where))
                canon.append({"kind": "free_abelian", "names": [str(n) for n in names]})
            else:
                problems.append(f"{where}.kind: expected 'finite' or 'free_abelian', got {kind!r}")
        except SpecificationError as exc:
            problems.extend(exc.violations)
    if len(facs) != len(raw):
        return None, {}
    try:
        spec = GroupSpec(facs, name=doc.get("name"))
    except SpecificationError as exc:
        problems.extend(exc.violations)
        return None, {}
    return spec, {"name": spec.name, "factors": canon}


def _measure(doc, spec, problems) -> tuple[StepDistribution | None, dict]:
    if spec is None:
        return None, {}
    if doc is None:
        problems.append("measure: missing")
        return None, {}
    if not isinstance(doc, dict):
        problems.append("measure: must be a mapping")
        return None, {}
    try:
        if doc.get("simple_random_walk"):
            measure = StepDistribution.simple_random_walk(spec)
            return measure, {"simple_random_walk": True}
        support = doc.get("support")
        if not isinstance(support, list) or not support:
            problems.append("measure.support: must be a non-empty list of [word, probability] pairs")
            return None, {}
        pairs = []
        for i, item in enumerate(support):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                problems.append(f"measure.support[{i}]: expected [word, probability]")
                continue
            pairs.append((str(item[0]), item[1]))
        if len(pairs) != len(support):
            return None, {}
        measure = StepDistribution.from_words(spec, pairs)
        return measure, {"support": [[w, p if isinstance(p, (int, float)) else str(p)] for w, p in pairs]}
    except SpecificationError as exc:
        problems.extend(exc.violations)
        return None, {}


def _positive_int(value, where, problems):
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        problems.append(f"{where}: must be a positive integer, got {value!r}")
        return False
    return True


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`SpecificationError` listing every violation."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecificationError([f"config: not valid YAML ({exc})"]) from None
    if not isinstance(doc, dict):
        raise SpecificationError(["config: top level must be a mapping"])
    problems: list[str] = []
    known = {"name", "seed", "group", "measure", "decays", "budgets"} | set(SECTION_DEFAULTS)
    for k in doc:
        if k not in known:
            problems.append(f"{k}: unknown field")
    seed = doc.get("seed")
    if seed is None:
        problems.append("seed: missing (every run needs an explicit master seed)")
    elif isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append(f"seed: must be a non-negative integer, got {seed!r}")
    spec, gdoc = _group(doc.get("group"), problems)
    measure, mdoc = _measure(doc.get("measure"), spec, problems)
    decays = doc.get("decays", [0.5])
    if not isinstance(decays, list) or not decays:
        problems.append("decays: must be a non-empty list")
        decays = []
    for i, decay in enumerate(decays):
        if isinstance(decay, bool) or not isinstance(decay, (int, float)) or not 0 < decay < 1:
            problems.append(f"decays[{i}]: {decay!r} not in (0, 1)")
    budgets = dict(BUDGET_DEFAULTS)
    raw_b = doc.get("budgets", {}) or {}
    if not isinstance(raw_b, dict):
        problems.append("budgets: must be a mapping")
        raw_b = {}
    for k, val in raw_b.items():
        if k not in BUDGET_DEFAULTS:
            problems.append(f"budgets.{k}: unknown budget")
        elif _positive_int(val, f"budgets.{k}", problems):
            budgets[k] = val
    sections = {}
    for name, defaults in SECTION_DEFAULTS.items():
        raw = doc.get(name, {}) or {}
        if not isinstance(raw, dict):
            problems.append(f"{name}: must be a mapping")
            raw = {}
        merged = copy.deepcopy(defaults)
        for k, val in raw.items():
            if k not in defaults:
                problems.append(f"{name}.{k}: unknown field")
            else:
                merged[k] = val
        sections[name] = merged
    _check_sections(sections, problems)
    if problems:
        raise SpecificationError(problems)
    document = {
        "name": str(doc.get("name", "experiment")),
        "seed": seed,
        "group": gdoc,
        "measure": mdoc,
        "decays": [float(x) for x in decays],
        "budgets": budgets,
        **sections,
    }
    return ExperimentConfig(document["name"], seed, spec, measure, document["decays"], budgets, sections, document)


def _check_sections(sections, problems):
    d = sections["dimension"]
    for k in ("centers", "walks", "steps"):
        _positive_int(d[k], f"dimension.{k}", problems)
    lv = d["levels"]
    if not (isinstance(lv, list) and len(lv) == 2 and all(isinstance(x, int) for x in lv) and 1 <= lv[0] <= lv[1]):
        problems.append(f"dimension.levels: expected [low, high] with 1 <= low <= high, got {lv!r}")
    _positive_int(sections["boundary_dim"]["n_max"], "boundary_dim.n_max", problems)
    db = sections["doubling"]
    if db["mode"] not in ("enumeration", "construction"):
        problems.append(f"doubling.mode: expected 'enumeration' or 'construction', got {db['mode']!r}")
    if db["expect"] not in (None, "plateau", "growth"):
        problems.append(f"doubling.expect: expected 'plateau' or 'growth', got {db['expect']!r}")
    _positive_int(db["k"], "doubling.k", problems)
    nr = db["n_range"]
    if not (isinstance(nr, list) and len(nr) == 2 and all(isinstance(x, int) for x in nr) and 1 <= nr[0] <= nr[1]):
        problems.append(f"doubling.n_range: expected [lo, hi] with 1 <= lo <= hi, got {nr!r}")
    tr = sections["tracking"]
    for k in ("steps", "walks", "radius"):
        _positive_int(tr[k], f"tracking.{k}", problems)
    cps = tr["checkpoints"]
    if cps is not None:
        if not isinstance(cps, list) or not all(isinstance(c, int) for c in cps):
            problems.append("tracking.checkpoints: must be a list of integers")
        elif isinstance(tr["steps"], int) and any(not 1 <= c <= tr["steps"] // 2 for c in cps):
            problems.append("tracking.checkpoints: must lie in 1..steps/2")
    for i, t in enumerate(sections["tree"]["specs"] or []):
        if not isinstance(t, dict) or not {"branching", "scales", "ratio"} <= set(t):
            problems.append(f"tree.specs[{i}]: needs branching, scales and ratio")
            continue
        try:
            RegularTreeSpec(tuple(t["branching"]), tuple(t["scales"]), float(t["ratio"]))
        except (SpecificationError, TypeError, ValueError) as exc:
            detail = exc.violations if isinstance(exc, SpecificationError) else [str(exc)]
            problems.extend(f"tree.specs[{i}].{item}" for item in detail)
    p = sections["properties"]
    for k in p:
        _positive_int(p[k], f"properties.{k}", problems)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
