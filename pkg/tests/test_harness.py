import json
import subprocess
import sys

import pytest

from gffperc.cli import main
from gffperc.harness import (
    CSV_HEADER,
    ExperimentSpec,
    SpecError,
    csv_to_rows,
    parse_config,
    recipe,
    rows_to_csv,
    run,
)
from gffperc.sampler import read_fields


def _cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_greens_command(capsys):
    code, out, _ = _cli(capsys, "greens", "--dim", "3", "--point", "0,0,0")
    assert code == 0
    payload = json.loads(out)
    assert payload["value"] == pytest.approx(1.516386, abs=1e-6)
    assert {"value", "error", "method", "schema_version"} <= payload.keys()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gffperc", "greens", "--dim", "4"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["method"] == "quadrature"


def test_malformed_flag_exits_nonzero():
    res = subprocess.run([sys.executable, "-m", "gffperc", "greens", "--dimension", "3"], capture_output=True, text=True)
    assert res.returncode != 0
    assert "usage" in res.stderr


def test_invalid_value_reports_error(capsys):
    code, _, err = _cli(capsys, "slab-cert", "--h0", "0.0001", "--L0", "50", "--pcsite", "0.31")
    assert code == 2
    assert "h0 too small" in err


def test_same_spec_twice_identical(capsys):
    args = ("estimate", "--what", "crossing", "--L", "4", "--h", "0,0.5,1", "--n", "20", "--seed", "3")
    _, first, _ = _cli(capsys, *args)
    _, second, _ = _cli(capsys, *args)
    assert first == second


def test_workers_do_not_change_numbers():
    base = {"what": "crossing", "L": [4], "h": [0.0, 0.5], "n": 12}
    a = run(ExperimentSpec("w", "estimate", base, seed=5, workers=1), write=False)
    b = run(ExperimentSpec("w", "estimate", base, seed=5, workers=2), write=False)
    assert a.payload_json() == b.payload_json()
    assert a.spec_hash == b.spec_hash


def test_csv_round_trip():
    rows = [
        {"d": 3, "L": 16, "h": 0.1 + 0.2, "n": 400, "seed": 7, "estimate": 1 / 3, "se": 0.0235702260395516},
        {"d": 3, "L": 32, "h": -1.5, "n": 200, "seed": 7, "estimate": 0.0, "se": 0.0},
    ]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert csv_to_rows(text) == rows


def test_persisted_outputs(tmp_path):
    spec = ExperimentSpec("curve", "estimate", {"what": "decay", "L": [3, 4, 5], "h": [0.5, 1.0], "n": 30}, seed=1, output=str(tmp_path))
    rec = run(spec)
    assert (tmp_path / "results.jsonl").exists()
    assert csv_to_rows((tmp_path / "curve.csv").read_text()) == rec.payload["rows"]
    svg = (tmp_path / "curve.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    lines = (tmp_path / "results.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["spec_hash"] == spec.spec_hash
    run(spec)
    again = (tmp_path / "results.jsonl").read_text().splitlines()
    assert json.loads(again[0])["payload"] == json.loads(again[1])["payload"]


def test_plot_flag(tmp_path, capsys):
    path = tmp_path / "c.svg"
    code, _, _ = _cli(capsys, "estimate", "--L", "3", "--h", "0,1", "--n", "10", "--plot", str(path))
    assert code == 0
    assert "<svg" in path.read_text()


def test_recipes():
    (hstar,) = recipe("d3-hstar")
    assert hstar.params["L"] == [16, 32, 64]
    assert hstar.params["h_step"] == 0.05
    (decay,) = recipe("decay-scan")
    assert decay.params["h"] == [1.5, 2.0, 2.5, 3.0]
    assert decay.params["L"] == [8, 16, 32]
    (trace,) = recipe("renorm-trace")
    assert (trace.params["L0"], trace.params["l0"]) == (10, 100)
    with pytest.raises(SpecError):
        recipe("nope")


def test_recipe_command_writes_specs(tmp_path, capsys):
    code, out, _ = _cli(capsys, "recipe", "renorm-trace", "--out-dir", str(tmp_path))
    assert code == 0
    text = (tmp_path / "renorm-trace.cfg").read_text()
    assert text == out
    spec = ExperimentSpec.from_config(text)
    assert spec.params["h0"] == 16.0


def test_config_round_trip():
    spec = recipe("d3-hstar")[0]
    back = ExperimentSpec.from_config(spec.to_config())
    assert back.params == spec.params
    assert back.spec_hash == spec.spec_hash


def test_parse_config():
    cfg = parse_config("# comment\nL = 8, 16\nh-min = 0.5  # trailing\nname = run1\nflag = true\n")
    assert cfg == {"L": [8, 16], "h_min": 0.5, "name": "run1", "flag": True}
    with pytest.raises(SpecError):
        parse_config("no equals sign")


def test_run_command_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("subcommand = greens\ndim = 3\npoint = 0,0,0\n")
    code, out, _ = _cli(capsys, "run", str(cfg), "--set", "point=1,0,0")
    assert code == 0
    assert json.loads(out)["point"] == [1, 0, 0]
    code, _, err = _cli(capsys, "run", str(cfg), "--set", "oops")
    assert code == 2 and "KEY=VALUE" in err


def test_unknown_subcommand_in_config():
    with pytest.raises(SpecError):
        ExperimentSpec.from_config("subcommand = dance\n")


def test_renorm_command(capsys):
    code, out, _ = _cli(capsys, "renorm", "--h0", "16", "--nmax", "10")
    payload = json.loads(out)
    assert code == 0
    assert payload["valid"] and payload["certificate"] == "analytic-conditional"
    assert payload["Ln"][1] == "1000"
    for key in ("Mn", "beta_n", "h_n", "K_n", "pn_bound", "h_infinity", "provenance"):
        assert key in payload


def test_sample_command_dump(tmp_path, capsys):
    path = tmp_path / "f.bin"
    code, out, _ = _cli(capsys, "sample", "--dim", "3", "--window", "5", "--n", "2", "--out", str(path), "--seed", "4")
    assert code == 0
    meta, data = read_fields(path)
    assert meta["count"] == 2 and data.shape == (2, 5, 5, 5) and meta["seed"] == 4


def test_slab_command(capsys):
    code, out, _ = _cli(capsys, "slab-cert", "--h0", "0.25", "--L0", "2", "--pcsite", "0.31")
    assert code == 0
    payload = json.loads(out)
    assert payload["d0"] == 7617
    assert set(payload["gates"]) >= {"perturbation", "iid_level", "stochastic_domination"}


def test_failed_fit_is_recorded():
    spec = ExperimentSpec("f", "estimate", {"what": "decay", "L": [3, 4], "h": [0.0], "n": 5}, seed=0)
    rec = run(spec, write=False)
    assert rec.failures and "fit" in rec.failures[0]["task"]
