from __future__ import annotations

import json
import textwrap

import jsonschema
import pytest
import yaml

from conftest import CONFIGS
from endlab.cli import main, run_command
from endlab.config import parse_config
from endlab.errors import SpecificationError
from endlab.report import emit_report, report_schema

F2 = """
seed: 7
group:
  factors:
    - {kind: free_abelian, names: [a]}
    - {kind: free_abelian, names: [b]}
measure: {simple_random_walk: true}
"""

SMALL = F2 + """
budgets: {steps: 200, walks: 400, convolution_depth: 6, sphere_depth: 10, window_radius: 8}
"""

Z3Z3_SMALL = """
seed: 3
group:
  factors:
    - {kind: finite, name: a, table: [[0, 1, 2], [1, 2, 0], [2, 0, 1]]}
    - {kind: finite, name: b, table: [[0, 1, 2], [1, 2, 0], [2, 0, 1]]}
measure: {simple_random_walk: true}
properties: {instances: 150, convolution_depth: 5, bank_walks: 300, bank_steps: 120}
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_minimal_config_is_valid():
    cfg = parse_config(F2)
    assert cfg.seed == 7 and cfg.group.name == "Z * Z" and cfg.decays == [0.5]


def test_decay_out_of_range_names_field():
    with pytest.raises(SpecificationError) as info:
        parse_config(F2 + "decays: [1.5]\n")
    assert info.value.violations == ["decays[0]: 1.5 not in (0, 1)"]


def test_non_generating_measure_rejected():
    text = F2.replace("{simple_random_walk: true}", "{support: [[a, 1]]}")
    with pytest.raises(SpecificationError) as info:
        parse_config(text)
    assert any(msg.startswith("measure") and "b" in msg for msg in info.value.violations)


def test_all_violations_reported():
    text = """
    group:
      factors:
        - {kind: finite, name: q, table: [[0, 1], [1, 2]]}
        - {kind: free_abelian, names: []}
    measure: {simple_random_walk: true}
    decays: [0.5, 2]
    budgets: {walks: -3}
    colour: blue
    """
    with pytest.raises(SpecificationError) as info:
        parse_config(textwrap.dedent(text))
    joined = "\n".join(info.value.violations)
    for needle in ("seed", "group.factors[0].table", "group.factors[1]", "decays[1]", "budgets.walks", "colour"):
        assert needle in joined


def test_echo_reparses_to_equal_config():
    for path in CONFIGS.glob("*.yaml"):
        cfg = parse_config(path.read_text())
        again = parse_config(cfg.echo())
        assert again == cfg and again.digest() == cfg.digest()


def test_estimate_report_contents_and_schema(tmp_path):
    cfg = parse_config(SMALL)
    rep = run_command(cfg, "estimate")
    payload = rep.to_json()
    jsonschema.validate(payload, report_schema())
    for key in ("drift", "entropy", "growth", "guivarch"):
        assert key in payload["outputs"]
    assert payload["checks"]["guivarch"] is True
    assert parse_config(yaml.safe_dump(payload["config"])) == cfg
    paths = emit_report(rep, tmp_path)
    names = sorted(p.name for p in paths)
    assert names[0] == f"estimate-{cfg.digest()}-s7-entropy.csv"
    assert f"estimate-{cfg.digest()}-s7.json" in names


def test_same_config_gives_identical_payload():
    cfg = parse_config(SMALL)
    a = run_command(cfg, "estimate")
    b = run_command(parse_config(SMALL), "estimate")
    assert a.payload_text() == b.payload_text()


def test_truncated_run_is_marked(tmp_path):
    text = SMALL.replace("convolution_depth: 6", "convolution_depth: 40")
    path = write(tmp_path, text)
    code = main(["estimate", "--config", str(path), "--out", str(tmp_path / "out"), "--format", "json"])
    assert code == 3
    (report,) = (tmp_path / "out").glob("*.json")
    data = json.loads(report.read_text())
    assert data["truncated"] is True and data["truncation"]
    jsonschema.validate(data, report_schema())


def test_tree_dim_command(tmp_path):
    text = F2 + """
tree:
  specs:
    - {branching: [2, 2, 2, 2, 2, 2], scales: [1, 2, 3, 4, 5, 6], ratio: 0.5}
"""
    rep = run_command(parse_config(text), "tree-dim")
    assert rep.tables["tree"][0]["formula"] == pytest.approx(1.0)
    assert rep.passed


def test_properties_command_small_budget():
    rep = run_command(parse_config(Z3Z3_SMALL), "properties")
    assert rep.outputs["all_passed"] is True
    assert rep.outputs["suites"] == len(rep.checks) >= 20


def test_exit_codes(tmp_path):
    out = str(tmp_path / "out")
    bad = write(tmp_path, F2 + "decays: [0]\n", "bad.yaml")
    assert main(["estimate", "--config", str(bad), "--out", out]) == 2
    assert main(["estimate", "--config", str(tmp_path / "missing.yaml"), "--out", out]) == 1
    good = write(tmp_path, F2 + "boundary_dim: {n_max: 8}\n", "good.yaml")
    assert main(["boundary-dim", "--config", str(good), "--out", out]) == 0
    # a plateau expectation on Z^2 * Z fails its check
    z2z = write(tmp_path, (CONFIGS / "z2z_srw.yaml").read_text().replace(
        "doubling: {mode: construction, k: 2, n_range: [3, 10], factor: 0, expect: growth}",
        "doubling: {mode: construction, k: 2, n_range: [3, 6], factor: 0, expect: plateau}"), "z.yaml")
    assert main(["doubling", "--config", str(z2z), "--out", out]) == 4
    assert main(["doubling", "--config", str(good), "--out", out, "--format", "xml"]) == 2


def test_csv_tables_written(tmp_path):
    path = write(tmp_path, F2 + "boundary_dim: {n_max: 6}\n")
    main(["boundary-dim", "--config", str(path), "--out", str(tmp_path), "--format", "csv"])
    (csv,) = tmp_path.glob("boundary-dim-*-components.csv")
    lines = csv.read_text().splitlines()
    assert lines[0] == "n,components" and lines[2] == "1,4"
