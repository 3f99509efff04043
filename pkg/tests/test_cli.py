import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from qclock.cli import main, read_table, validate_dump, write_archive
from qclock.clocksim import RunRecord
from qclock.config import ExperimentSpec, SpecError, load_experiment

TINY = """\
name: tiny
atoms: 1
noise:
  kind: brownian
  h: 0.03
interrogations: 8
runs: 2
seed: 3
tracker:
  points: 15
analysis:
  last_steps: 4
  bootstrap: 10
"""

PRIOR = """\
atoms: 2
gaussian:
  std: {std}
  points: 21
starts: 2
refine_rounds: 1
"""


@pytest.fixture(scope="module")
def archive(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "tiny.yaml"
    spec.write_text(TINY)
    res = CliRunner().invoke(main, ["simulate", "--spec", str(spec), "--out", str(root / "a")])
    assert res.exit_code == 0, res.output
    return root


def test_simulate_writes_archive(archive):
    a = archive / "a"
    for proto in ("adaptive", "ramsey", "buzek"):
        assert (a / proto / "runs.jsonl").is_file()
        header, rows = read_table(a / proto / "metrics.csv")
        assert header[0] == "step" and len(rows) == 8
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["protocols"] == ["adaptive", "ramsey", "buzek"] and len(manifest["spec_hash"]) == 64
    _, rows = read_table(a / "improvement.csv")
    assert len(rows) == 6


def test_rerun_is_byte_identical(archive):
    res = CliRunner().invoke(main, ["simulate", "--spec", str(archive / "tiny.yaml"), "--out", str(archive / "b")])
    assert res.exit_code == 0
    for rel in ["improvement.csv", "spec.json"] + [f"{p}/{f}" for p in ("adaptive", "ramsey", "buzek")
                                                   for f in ("runs.jsonl", "metrics.csv", "allan.csv")]:
        assert (archive / "a" / rel).read_bytes() == (archive / "b" / rel).read_bytes(), rel


def test_seed_override_changes_results(archive):
    res = CliRunner().invoke(main, ["simulate", "--spec", str(archive / "tiny.yaml"), "--out", str(archive / "c"),
                                    "--seed", "4"])
    assert res.exit_code == 0
    assert (archive / "a/ramsey/runs.jsonl").read_bytes() != (archive / "c/ramsey/runs.jsonl").read_bytes()


def test_analyze_shapes_and_passthrough(archive):
    res = CliRunner().invoke(main, ["analyze", str(archive / "a")])
    assert res.exit_code == 0, res.output
    out = archive / "a" / "analysis"
    for proto in ("adaptive", "ramsey", "buzek"):
        h, rows = read_table(out / f"error_{proto}.csv")
        assert h == ["time", "rms_freq_error", "sq_freq_error"] and len(rows) == 8
        h, rows = read_table(out / f"allan_{proto}.csv")
        assert h == ["m", "tau", "allan_deviation", "allan_variance"] and len(rows) == 4
        _, arch = read_table(archive / "a" / proto / "allan.csv")
        assert np.allclose([float(r[3]) for r in rows], [float(r[1]) for r in arch], rtol=1e-12, atol=0)
    _, a_rows = read_table(out / "improvement.csv")
    _, s_rows = read_table(archive / "a" / "improvement.csv")
    assert len(a_rows) == len(s_rows)
    for x, y in zip(a_rows, s_rows):
        assert x[:2] == y[:2]
        assert float(x[2]) == pytest.approx(float(y[2]), abs=1e-12)


def test_constant_estimates_give_zero_allan(tmp_path):
    spec = ExperimentSpec.model_validate({"atoms": 1, "noise": {"kind": "brownian", "h": 0.03},
                                          "interrogations": 6, "runs": 2, "protocols": ["ramsey"]})
    M = 6
    recs = [RunRecord("ramsey", r, np.full(M, 0.3), np.full(M, 0.2), np.zeros(M), np.zeros(M, int),
                      np.zeros(M), np.zeros(M), np.ones(M), np.zeros(M), np.zeros(M), np.zeros(M, bool))
            for r in range(2)]
    write_archive(tmp_path / "s", spec, {"ramsey": recs}, "now")
    res = CliRunner().invoke(main, ["analyze", str(tmp_path / "s"), "--out", str(tmp_path / "o")])
    assert res.exit_code == 0, res.output
    _, rows = read_table(tmp_path / "o" / "allan_ramsey.csv")
    assert len(rows) == 3 and all(float(r[3]) == 0.0 for r in rows)
    _, rows = read_table(tmp_path / "o" / "error_ramsey.csv")
    assert all(float(r[2]) == pytest.approx(0.01) for r in rows)


def test_corrupt_archive_exits_4(archive, tmp_path):
    bad = tmp_path / "bad"
    shutil.copytree(archive / "a", bad)
    lines = (bad / "ramsey" / "runs.jsonl").read_text().splitlines()
    (bad / "ramsey" / "runs.jsonl").write_text(lines[0] + "\n")
    res = CliRunner().invoke(main, ["analyze", str(bad)])
    assert res.exit_code == 4
    (bad / "spec.json").write_text((bad / "spec.json").read_text().replace('"runs":2', '"runs":3'))
    assert CliRunner().invoke(main, ["analyze", str(bad)]).exit_code == 4
    assert CliRunner().invoke(main, ["analyze", str(tmp_path / "missing")]).exit_code == 4


def test_unknown_key_is_named_with_line(tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text(TINY + "interogations: 9\n")
    res = CliRunner().invoke(main, ["simulate", "--spec", str(f), "--out", str(tmp_path / "x")])
    assert res.exit_code == 2
    assert "interogations" in res.output and "unknown key" in res.output and f":{TINY.count(chr(10)) + 1}:" in res.output
    with pytest.raises(SpecError):
        load_experiment(f)


def test_bad_value_reports_field(tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text(TINY.replace("points: 15", "points: 14"))
    res = CliRunner().invoke(main, ["simulate", "--spec", str(f), "--out", str(tmp_path / "x")])
    assert res.exit_code == 2 and "points" in res.output


def test_missing_spec_exits_2(tmp_path):
    res = CliRunner().invoke(main, ["simulate", "--spec", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_optimize_zero_variance_prior(tmp_path):
    f = tmp_path / "p.yaml"
    f.write_text(PRIOR.format(std=0.0))
    res = CliRunner().invoke(main, ["optimize", "--spec", str(f), "--out", str(tmp_path / "o.json")])
    assert res.exit_code == 0, res.output
    dump = json.loads((tmp_path / "o.json").read_text())
    assert abs(dump["objective"]) < 1e-12
    validate_dump(dump)


def test_optimize_dump_revalidates(tmp_path):
    f = tmp_path / "p.yaml"
    f.write_text(PRIOR.format(std=0.3))
    res = CliRunner().invoke(main, ["optimize", "--spec", str(f)])
    assert res.exit_code == 0
    dump = json.loads(res.stdout)
    assert dump["format"] == "qclock-algorithm/1" and dump["certificate_ok"]
    povm = validate_dump(dump)
    assert len(povm) == len(dump["labels"])
    dump["povm"][0][0][0] = [5.0, 0.0]
    with pytest.raises(ValueError):
        validate_dump(dump)


def test_strict_mode_fails_on_certificate(tmp_path):
    f = tmp_path / "p.yaml"
    f.write_text(PRIOR.format(std=0.3) + "certificate_tol: 1.0e-300\n")
    lax = CliRunner().invoke(main, ["optimize", "--spec", str(f)])
    assert lax.exit_code == 0 and "warning" in lax.stderr
    strict = CliRunner().invoke(main, ["optimize", "--spec", str(f), "--strict"])
    assert strict.exit_code == 3


def test_shipped_configs_parse():
    for f in Path(__file__).resolve().parents[1].joinpath("configs").glob("*.yaml"):
        if f.name != "prior.yaml":
            load_experiment(f)
