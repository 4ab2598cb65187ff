import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from partsens.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_RESOURCE, cross_assertions, main
from partsens.config import ConfigError, parse_config
from partsens.report import Report, Series

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_run_doubling_sensitivity(tmp_path):
    cfg = write(tmp_path, "d.yaml", "kind: sensitivity\nsystem: {type: doubling}\nparams: {n_max: 20, cell_cap: 4194304}\n")
    assert run("run", cfg, "--out", tmp_path / "out") == EXIT_OK
    rep = Report.from_json((tmp_path / "out" / "d.report.json").read_text())
    assert rep.verdict == "SensitiveUpTo(20, 1/2097152)" and rep.engine == "exact"
    rows = list(csv.reader((tmp_path / "out" / "d.series.csv").open()))
    assert len(rows) == 22


def test_run_rational_rotation(tmp_path):
    cfg = write(tmp_path, "r.yaml", "kind: sensitivity\nsystem: {type: rotation, alpha: '1/3'}\n")
    assert run("run", cfg, "--out", tmp_path) == EXIT_OK
    assert Report.from_json((tmp_path / "r.report.json").read_text()).verdict == "StabilizedNonSensitive(2, 1/6)"


def test_negative_verdict_still_exits_zero(tmp_path):
    cfg = write(tmp_path, "g.yaml", "kind: sensitivity\nsystem: {type: rotation, alpha: golden_conjugate}\nparams: {n_max: 5}\n")
    assert run("run", cfg, "--out", tmp_path) == EXIT_OK
    assert Report.from_json((tmp_path / "g.report.json").read_text()).verdict.startswith("Inconclusive")


def test_bad_delta_is_a_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "p.yaml", "kind: pairwise\nsystem: {type: doubling}\nparams:\n  seed: 1\n  delta: 0.7\n")
    assert run("run", cfg, "--out", tmp_path) == EXIT_CONFIG
    assert "p.yaml:5:" in capsys.readouterr().err
    assert not (tmp_path / "p.report.json").exists()


@pytest.mark.parametrize(
    "text,line",
    [
        ("kind: sensitivity\nsystem: {type: tent}\n", 2),
        ("kind: nonsense\nsystem: {type: doubling}\n", 1),
        ("kind: pairwise\nsystem: {type: doubling}\nparams:\n  delta: 1/10\n", 3),
        ("kind: sensitivity\nsystem: {type: rotation, alpha: pi}\n", 2),
        ("kind: sensitivity\nsystem: {type: doubling}\nparams:\n  n_max: 3\n  colour: red\n", 5),
        ("kind: sensitivity\nsystem: {type: doubling\n", 3),
    ],
    ids=["system", "kind", "seed", "constant", "param", "yaml"],
)
def test_config_errors_carry_lines(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, source="c.yaml")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"c.yaml:{line}:")


def test_command_line_overrides(tmp_path):
    cfg = write(tmp_path, "d.yaml", "kind: sensitivity\nsystem: {type: doubling}\nparams: {n_max: 20}\n")
    assert run("run", cfg, "--n-max", 6, "--threshold", "1/100", "--out", tmp_path) == EXIT_OK
    rep = Report.from_json((tmp_path / "d.report.json").read_text())
    assert rep.verdict == "SensitiveUpTo(6, 1/128)"
    assert rep.config["params"]["threshold"] == "1/100"
    assert run("run", cfg, "--delta", "3/5", "--out", tmp_path) == EXIT_CONFIG


def test_resource_limit_writes_partial_report(tmp_path):
    cfg = write(tmp_path, "d.yaml", "kind: sensitivity\nsystem: {type: doubling}\nparams: {n_max: 20}\n")
    assert run("run", cfg, "--cell-cap", 1000, "--out", tmp_path) == EXIT_RESOURCE
    rep = Report.from_json((tmp_path / "d.report.json").read_text())
    assert rep.status == "resource-limit" and rep.verdict.startswith("Inconclusive")


def test_log_base_two(tmp_path):
    cfg = write(tmp_path, "e.yaml", "kind: entropy\nsystem: {type: doubling}\nparams: {n_max: 8}\n")
    assert run("run", cfg, "--log-base", "2", "--out", tmp_path) == EXIT_OK
    rep = Report.from_json((tmp_path / "e.report.json").read_text())
    assert abs(rep.result["rates"][-1] - 1.0) < 1e-12


@pytest.mark.parametrize("kind", ["pairwise", "smb"])
def test_series_are_byte_identical_across_runs(tmp_path, kind):
    text = {
        "pairwise": "kind: pairwise\nsystem: {type: rotation, alpha: golden_conjugate}\n"
                    "params: {delta: 1/10, n_max: 20, pair_count: 3000, seed: 5}\n",
        "smb": "kind: smb\nsystem: {type: bernoulli, p: ['3/10', '7/10']}\n"
               "partition: {type: cylinders}\nparams: {n_max: 300, seeds: 3, seed: 5}\n",
    }[kind]
    cfg = write(tmp_path, "m.yaml", text)
    outs = []
    for d in ("a", "b"):
        assert run("run", cfg, "--out", tmp_path / d) == EXIT_OK
        outs.append((tmp_path / d / "m.series.csv").read_bytes())
    assert outs[0] == outs[1] and len(outs[0]) > 50


@settings(max_examples=30)
@given(
    st.dictionaries(st.text("abcxyz", min_size=1, max_size=4),
                    st.one_of(st.integers(), st.text(max_size=6), st.floats(allow_nan=False), st.booleans()),
                    max_size=4),
    st.lists(st.lists(st.one_of(st.integers(), st.floats(allow_nan=False, allow_infinity=False)),
                      min_size=2, max_size=2), max_size=4),
)
def test_report_json_round_trip(result, rows):
    rep = Report("x", "entropy", "exact", {"a": 1}, "completed", "v", result,
                 Series(["n", "value"], rows), seed=3, wall_time=0.5)
    again = Report.from_json(rep.to_json())
    assert again == rep
    assert again.to_json() == rep.to_json()


def test_report_file_round_trip(tmp_path):
    cfg = write(tmp_path, "a.yaml", "kind: aperiodicity\nsystem: {type: doubling}\nparams: {n_max: 3, k_max: 2, fix_n_max: 4, idempotent_k: 2}\n")
    assert run("run", cfg, "--out", tmp_path) == EXIT_OK
    text = (tmp_path / "a.report.json").read_text()
    assert Report.from_json(text).to_json() == text


def test_empty_manifest(tmp_path):
    m = write(tmp_path, "m.yaml", "")
    assert run("suite", m, "--out", tmp_path / "o") == EXIT_OK
    assert (tmp_path / "o" / "suite.summary.csv").read_text().strip() == \
        "name,kind,system,partition,status,verdict,expectations,message"


def test_suite_with_failing_member(tmp_path):
    write(tmp_path, "good.yaml", "kind: sensitivity\nsystem: {type: identity}\n")
    write(tmp_path, "bad.yaml", "kind: sensitivity\nsystem: {type: tent}\n")
    m = write(tmp_path, "m.yaml", "workers: 2\nconfigs: [good.yaml, bad.yaml, missing.yaml]\n")
    assert run("suite", m, "--out", tmp_path / "o") == EXIT_FAILED
    rows = list(csv.DictReader((tmp_path / "o" / "suite.summary.csv").open()))
    assert [r["name"] for r in rows] == ["good", "bad", "missing"]
    assert [r["status"] for r in rows] == ["completed", "error", "error"]
    assert "tent" in rows[1]["message"]


def test_suite_flags_missed_expectation(tmp_path):
    write(tmp_path, "a.yaml", "kind: sensitivity\nsystem: {type: identity}\nexpect: {verdict: SensitiveUpTo}\n")
    m = write(tmp_path, "m.yaml", "configs: [a.yaml]\n")
    assert run("suite", m, "--out", tmp_path) == EXIT_FAILED
    assert list(csv.DictReader((tmp_path / "suite.summary.csv").open()))[0]["expectations"] == "FAIL"


def test_cross_assertion_catches_contradiction():
    # a forged pairing: non-null periodic mass next to a Sensitive row for the same system
    ap = parse_config("name: ap\nkind: aperiodicity\nsystem: {type: doubling}\n")
    se = parse_config("name: se\nkind: sensitivity\nsystem: {type: doubling}\n")
    fake_ap = Report("ap", "aperiodicity", "exact", {}, "completed", "not aperiodic at (n=1, k=0), measure 1", {})
    fake_se = Report("se", "sensitivity", "exact", {}, "completed", "SensitiveUpTo(5, 1/64)", {})
    checks = cross_assertions([(ap, fake_ap), (se, fake_se)])
    assert [(c["assertion"], c["checked"], c["ok"]) for c in checks] == \
        [("periodic-mass-excludes-sensitivity", ["se"], False)]


def test_console_script(tmp_path):
    cfg = write(tmp_path, "r.yaml", "kind: sensitivity\nsystem: {type: rotation, alpha: '1/3'}\n")
    out = subprocess.run([sys.executable, "-m", "partsens", "run", str(cfg), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "StabilizedNonSensitive(2, 1/6)" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "partsens", "run", str(tmp_path / "nope.yaml")],
                         capture_output=True, text=True)
    assert bad.returncode == EXIT_CONFIG


def test_shipped_matrix(tmp_path):
    manifest = ROOT / "experiments" / "matrix.yaml"
    assert run("suite", manifest, "--out", tmp_path, "--workers", 4) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "suite.summary.csv").open()))
    assert len(rows) >= 12
    assert all(r["status"] == "completed" and r["expectations"] in ("pass", "") for r in rows)
    assert sum(r["expectations"] == "pass" for r in rows) >= 20
    kinds = {r["kind"] for r in rows}
    assert kinds >= {"refine", "entropy", "smb", "sensitivity", "power-consistency", "pairwise",
                     "sandwich", "aperiodicity", "invariance"}
    checks = json.loads((tmp_path / "suite.assertions.json").read_text())
    assert checks and all(c["ok"] for c in checks)
