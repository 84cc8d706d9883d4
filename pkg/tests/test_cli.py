import csv
import json

import pytest

from stablelld.cli import ConfigError, ExperimentConfig, bundled_configs, run
from stablelld.lld_verify import read_report

SMALL = {"name": "small", "spec": {"kind": "scalar", "alpha": 0.5, "p": 1, "q": 0},
         "grid": {"n": [16, 64, 256]}, "budget": {"N": 10000}, "seed": 3}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_norming_closed_form(tmp_path):
    cfg = dict(SMALL, grid={"n": [4, 100]})
    assert run(["norming", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    body = rows(tmp_path / "norming.csv")
    assert body[0] == ["n", "a_n", "b_n"]
    assert int(body[1][0]) == 4 and float(body[1][1]) == pytest.approx(16.0, rel=1e-12)
    assert float(body[2][1]) == pytest.approx(1e4, rel=1e-12)


def test_alpha_one_exits_with_message(tmp_path, capsys):
    cfg = dict(SMALL, spec={"kind": "scalar", "alpha": 1.0, "p": 1, "q": 0})
    assert run(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "alpha = 1 is excluded" in err and "logarithmic centering" in err


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"budget": {"N": 10}},
    {"eps": 1.0},
    {"seed": -1},
    {"spec": {"kind": "dynamics", "map": "tent", "alpha": 0.5}},
])
def test_bad_configs_exit_3(tmp_path, patch):
    cfg = dict(SMALL, **patch)
    assert run(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 3


def test_wrong_subcommand_for_spec(tmp_path):
    lat = dict(SMALL, spec={"kind": "lattice", "alpha": 1.5, "p": 0.5, "q": 0.5})
    assert run(["sweep", "--config", write(tmp_path, lat), "--out", str(tmp_path)]) == 3
    assert run(["eigencurve", "--config", write(tmp_path, SMALL), "--out", str(tmp_path)]) == 3


def test_sweep_csv_schema_and_provenance(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    assert run(["sweep", "--config", write(tmp_path, SMALL), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "sweep.csv").read_text()
    assert f"# config_sha256={cfg.sha256()}" in text
    assert "# version=" in text
    rep = read_report(tmp_path / "sweep.csv")
    assert rep.verdict == "PASS"
    assert sorted({r.n for r in rep.rows}) == [16, 64, 256]


def test_threads_byte_identical(tmp_path):
    path = write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["sweep", "--config", path, "--out", str(a), "--threads", "1", "--dump-tallies"]) == 0
    assert run(["sweep", "--config", path, "--out", str(b), "--threads", "2", "--dump-tallies"]) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    assert (a / "sweep_tallies.csv").read_bytes() == (b / "sweep_tallies.csv").read_bytes()


def test_seed_override_changes_hash(tmp_path):
    path = write(tmp_path, SMALL)
    run(["sample", "--config", path, "--out", str(tmp_path / "a")])
    run(["sample", "--config", path, "--out", str(tmp_path / "b"), "--seed", "99"])
    ha = (tmp_path / "a" / "samples.csv").read_text().splitlines()[0]
    hb = (tmp_path / "b" / "samples.csv").read_text().splitlines()[0]
    assert ha != hb


def test_report_aggregates(tmp_path, capsys):
    assert run(["sweep", "--config", write(tmp_path, SMALL), "--out", str(tmp_path)]) == 0
    assert run(["report", "--out", str(tmp_path)]) == 0
    body = rows(tmp_path / "report.csv")
    assert body[0][:2] == ["file", "verdict"] and body[1][:2] == ["sweep.csv", "PASS"]
    assert run(["report", "--out", str(tmp_path / "empty")]) == 2


def test_kernel_check_and_cf(tmp_path):
    path = write(tmp_path, SMALL)
    assert run(["kernel-check", "--config", path, "--out", str(tmp_path)]) == 0
    assert run(["cf-diagnostics", "--config", path, "--out", str(tmp_path)]) == 0


def test_bundled_configs_validate():
    bundled = bundled_configs()
    assert {"pareto_a05", "plane_a075", "gauss_z2", "afu_z2", "lattice_a15"} <= set(bundled)
    for path in bundled.values():
        ExperimentConfig.load(path)


def test_unknown_bundled_name(tmp_path):
    assert run(["sweep", "--config", "no_such_config", "--out", str(tmp_path)]) == 3


def test_config_hash_is_canonical():
    a = ExperimentConfig.from_dict(SMALL)
    b = ExperimentConfig.from_dict(json.loads(json.dumps(SMALL, sort_keys=True, indent=4)))
    assert a.sha256() == b.sha256()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"spec": {"kind": "scalar"}})
