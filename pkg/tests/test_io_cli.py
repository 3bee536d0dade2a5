import json
import subprocess
import sys
import time

import numpy as np
import pytest

from penvmf import io
from penvmf.cli import main
from penvmf.model import VmfComponent, VmfMixture, sample_uniform_sphere, sample_vmf

ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]


@pytest.fixture
def dataset(tmp_path):
    x = sample_vmf(VmfComponent([0, 0, 1], 5.0), 100, 3)
    path = tmp_path / "data.csv"
    io.write_dataset(path, x)
    return path, x


def test_dataset_round_trip_is_exact(tmp_path):
    x = sample_uniform_sphere(4, 50, 1)
    io.write_dataset(tmp_path / "x.csv", x)
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "# d=4 n=50"
    np.testing.assert_array_equal(io.read_dataset(tmp_path / "x.csv"), x)


def test_model_round_trip_is_exact(tmp_path):
    mix = VmfMixture([0.3, 0.7], sample_uniform_sphere(3, 2, 2), [1 / 3, 12.345678901234567])
    io.write_model(tmp_path / "m.json", mix, {"pll": -1.5})
    back = io.read_model(tmp_path / "m.json")
    np.testing.assert_array_equal(back.weights, mix.weights)
    np.testing.assert_array_equal(back.means, mix.means)
    np.testing.assert_array_equal(back.kappas, mix.kappas)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert list(doc) == ["d", "p", "weights", "components", "metadata"]


def test_non_unit_row_rejected_or_renormalized(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# d=2 n=3\n1,0\n0,1\n0.6,0.9\n")
    with pytest.raises(io.DataFormatError, match="row 3"):
        io.read_dataset(path)
    x = io.read_dataset(path, renormalize=True)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-15)


@pytest.mark.parametrize(
    "text,match",
    [
        ("1,0\n", "first line"),
        ("# d=2 n=2\n1,0\n", "n=2"),
        ("# d=2 n=1\n1,0,0\n", "row 1"),
        ("# d=2 n=1\nfoo,1\n", "row 1"),
    ],
)
def test_malformed_datasets(tmp_path, text, match):
    path = tmp_path / "x.csv"
    path.write_text(text)
    with pytest.raises(io.DataFormatError, match=match):
        io.read_dataset(path)


def test_parse_penalty():
    assert io.parse_penalty("zeta=1.0").psi_for(100) == pytest.approx(0.01)
    assert io.parse_penalty("fixed=0.2").psi_for(5) == 0.2
    assert io.parse_penalty("none").psi_for(5) == 0.0
    assert io.parse_penalty("circvar").rule == "circular_variance"
    with pytest.raises(ValueError):
        io.parse_penalty("bogus=1")


def test_spec_loading(tmp_path):
    name, specs = io.load_experiment_specs(ROOT / "configs" / "table1_d2.spec")
    assert name == "table1_d2" and [s.n for s in specs] == [100, 500, 1000]
    assert specs[0].replications == 500 and specs[0].em.penalty.zeta == 1.0
    bad = tmp_path / "bad.spec"
    bad.write_text(json.dumps({"d": 2, "n": 10, "replications": 1, "true_weights": [1], "true_kappas": [1], "colour": 3}))
    with pytest.raises(io.DataFormatError, match="colour"):
        io.load_experiment_specs(bad)
    bad.write_text(json.dumps({"d": 2, "n": 10, "replications": 1, "true_weights": [1], "true_kappas": [1], "em": {"speed": 1}}))
    with pytest.raises(io.DataFormatError, match="speed"):
        io.load_experiment_specs(bad)


def test_cli_fit_is_byte_deterministic(dataset, tmp_path, capsys):
    path, _ = dataset
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["fit", str(path), "--p", "2", "--seed", "3", "--out", str(a)]) == 0
    assert main(["fit", str(path), "--p", "2", "--seed", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    out = capsys.readouterr().out
    assert "pll=" in out and "iterations=" in out and "converged=" in out


def test_cli_fit_records_psi(dataset, tmp_path):
    path, _ = dataset
    out = tmp_path / "m.json"
    assert main(["fit", str(path), "--p", "1", "--psi", "zeta=1.0", "--out", str(out)]) == 0
    meta = json.loads(out.read_text())["metadata"]
    assert meta["psi_n"] == pytest.approx(0.01)
    assert meta["renormalized"] is False


def test_cli_fit_usage_and_data_errors(dataset, tmp_path, capsys):
    path, _ = dataset
    assert main(["fit", str(path), "--p", "101", "--out", str(tmp_path / "m.json")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("# d=2 n=2\n1,0\n3,4\n")
    assert main(["fit", str(bad), "--out", str(tmp_path / "m.json")]) == 3
    assert "row 2" in capsys.readouterr().err
    assert main(["fit", str(bad), "--renormalize", "--p", "1", "--out", str(tmp_path / "m.json")]) == 0


def test_cli_fit_failure_exit_code(dataset, tmp_path, monkeypatch):
    import penvmf.cli as cli
    from penvmf.em import FitFailureError

    def boom(*a, **k):
        raise FitFailureError("all restarts degenerate")

    monkeypatch.setattr(cli, "fit", boom)
    path, _ = dataset
    assert main(["fit", str(path), "--out", str(tmp_path / "m.json")]) == 4


def test_cli_sample_then_fit_round_trip(tmp_path):
    data, model = tmp_path / "s.csv", tmp_path / "m.json"
    args = ["sample", "--n", "5000", "--kappas", "10", "--means", "0,0.6,0.8", "--seed", "4"]
    assert main(args + ["--out", str(data), "--labels", str(tmp_path / "l.txt")]) == 0
    assert (tmp_path / "l.txt").read_text().count("\n") == 5000
    assert main(["fit", str(data), "--p", "1", "--out", str(model)]) == 0
    kappa = io.read_model(model).kappas[0]
    assert abs(kappa - 10) / 10 < 0.1


def test_cli_sample_determinism_and_errors(tmp_path):
    m = tmp_path / "m.json"
    io.write_model(m, VmfMixture([0.5, 0.5], [[1, 0], [0, 1]], [3.0, 1.0]))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sample", "--model", str(m), "--n", "50", "--seed", "1", "--out", str(a)]) == 0
    assert main(["sample", "--model", str(m), "--n", "50", "--seed", "1", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["sample", "--model", str(m), "--n", "0", "--out", str(a)]) == 2
    (tmp_path / "broken.json").write_text('{"d": 2}')
    assert main(["sample", "--model", str(tmp_path / "broken.json"), "--n", "5", "--out", str(a)]) == 3


def test_cli_simulate_smoke(tmp_path, capsys):
    start = time.perf_counter()
    assert main(["simulate", str(ROOT / "configs" / "smoke.spec"), "--out", str(tmp_path / "sim")]) == 0
    assert time.perf_counter() - start < 10
    header = (tmp_path / "sim" / "smoke_table.csv").read_text().splitlines()[0]
    assert header == "d,n,stat,pi1,mu1,mu2,kappa1,kappa2"
    assert (tmp_path / "sim" / "smoke_d2_n300.csv").exists()
    assert "(" in capsys.readouterr().out


def test_cli_simulate_unknown_field(tmp_path, capsys):
    spec = tmp_path / "x.spec"
    spec.write_text(json.dumps({"d": 2, "n": 10, "replications": 1, "true_weights": [1], "true_kappas": [1], "rows": 1}))
    assert main(["simulate", str(spec), "--out", str(tmp_path / "o")]) == 3
    assert "rows" in capsys.readouterr().err


def _trace(path):
    rows = [ln.split(",") for ln in path.read_text().splitlines()[1:]]
    return np.array([[float(v) for v in r] for r in rows])


def test_cli_degeneracy_default_and_penalized(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["degeneracy", "--q-max", "100000", "--out", str(out)]) == 0
    tr = _trace(out)
    assert tr.shape[1] == 3
    tail = tr[-3:, 1]
    assert np.all(np.diff(tail) >= 0)
    pen = tr[:, 2]
    assert np.argmax(pen) < len(pen) - 1


def test_cli_degeneracy_single_row(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["degeneracy", "--q-max", "1", "--out", str(out)]) == 0
    assert _trace(out).shape[0] == 1


def test_cli_degeneracy_bad_anchor(tmp_path):
    assert main(["degeneracy", "--anchor", "5,0", "--out", str(tmp_path / "t.csv")]) == 2


def test_cli_check_penalty(capsys):
    assert main(["check-penalty", "--d", "3", "--psi", "zeta=1.0"]) == 0
    assert "C3 pass" in capsys.readouterr().out
    assert main(["check-penalty", "--d", "3", "--psi", "none"]) == 0
    assert "C3 FAIL" in capsys.readouterr().out


def test_cli_verify_lemmas(tmp_path, capsys):
    out = tmp_path / "v.csv"
    assert main(["verify-lemmas", "--d", "3", "--n-values", "5000", "--trials", "2", "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert out.read_text().startswith("n,trial,regime")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "penvmf", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("fit", "sample", "simulate", "degeneracy", "check-penalty", "verify-lemmas"):
        assert cmd in res.stdout


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
