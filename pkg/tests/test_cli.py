import csv
import json

import numpy as np
import pytest

from unbiased_mvsde.cli import main
from unbiased_mvsde.config import ConfigError, load_config, parse_config

CW = {"name": "curie_weiss", "params": {"beta": 1.0, "K": 0.25, "sigma": 1.0, "x0": 1.0}}
SMALL = {"l_star": 2, "l_max": 5, "p_max": 3, "n_base": 4}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def run_cfg(tmp_path):
    return _write(tmp_path / "run.json", {
        "mode": "run", "model": CW, "estimator": SMALL,
        "phi": {"kind": "moment", "component": 0, "k": 2}, "M": 30, "seed": 9,
    })


class TestRun:
    def test_outputs(self, run_cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", run_cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert {"estimate", "std_error", "M", "total_cost_units", "wall_seconds"} <= set(summary)
        rows = _rows(out / "replicates.csv")
        assert rows[0] == ["id", "L", "P", "value", "cost_units"]
        assert len(rows) == 31
        values = np.array([float(r[3]) for r in rows[1:]])
        np.testing.assert_allclose(values.mean(), summary["estimate"], rtol=1e-12)

    def test_format(self, run_cfg, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", run_cfg, "--out", str(out)])
        raw = (out / "replicates.csv").read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
        value = _rows(out / "replicates.csv")[1][3]
        assert float(value) == float(f"{float(value):.17g}")
        assert len(value.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 17

    def test_thread_invariance(self, run_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", run_cfg, "--out", str(a), "--threads", "1"])
        main(["run", "--config", run_cfg, "--out", str(b), "--threads", "3"])
        assert (a / "replicates.csv").read_bytes() == (b / "replicates.csv").read_bytes()

    def test_seed_flag_and_env(self, run_cfg, tmp_path, monkeypatch):
        main(["run", "--config", run_cfg, "--out", str(tmp_path / "cfg")])
        monkeypatch.setenv("MV_SEED", "9")
        main(["run", "--config", run_cfg, "--out", str(tmp_path / "env")])
        main(["run", "--config", run_cfg, "--out", str(tmp_path / "flag"), "--seed", "10"])
        same = (tmp_path / "cfg" / "replicates.csv").read_bytes()
        assert (tmp_path / "env" / "replicates.csv").read_bytes() == same
        assert (tmp_path / "flag" / "replicates.csv").read_bytes() != same
        assert json.loads((tmp_path / "flag" / "summary.json").read_text())["seed"] == 10

    def test_mle_from_file(self, tmp_path):
        (tmp_path / "y.txt").write_text("1 2 3\n")
        cfg = _write(tmp_path / "mle.json", {
            "mode": "run", "model": {"name": "mle_gaussian", "params": {"y_file": "y.txt"}},
            "estimator": SMALL, "phi": {"kind": "moment", "component": 0, "k": 1}, "M": 5,
        })
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


class TestErrors:
    def test_invalid_model(self, tmp_path, capsys):
        cfg = _write(tmp_path / "bad.json", {"mode": "run", "model": {"name": "ising"},
                                             "phi": {"kind": "moment"}})
        out = tmp_path / "never"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 2
        assert not out.exists()
        assert "unknown model" in capsys.readouterr().err

    @pytest.mark.parametrize("patch", [
        {"extra": 1}, {"estimator": {"l_star": 5, "l_max": 4}}, {"phi": {"kind": "moment", "component": 3}},
        {"M": [1, 2]}, {"M": 0}, {"estimator": {"lmax": 3}}, {"seed": -1}, {"phi": None},
    ])
    def test_config_errors(self, tmp_path, patch):
        obj = {"mode": "run", "model": CW, "phi": {"kind": "moment", "k": 2}, "M": 3}
        obj.update(patch)
        obj = {k: v for k, v in obj.items() if v is not None}
        assert main(["run", "--config", _write(tmp_path / "c.json", obj), "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_missing_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2

    def test_not_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{")
        assert main(["run", "--config", str(p)]) == 2

    def test_blow_up(self, tmp_path, capsys):
        cfg = _write(tmp_path / "boom.json", {
            "mode": "run", "model": {"name": "curie_weiss", "params": {"x0": 1e110}},
            "estimator": SMALL, "phi": {"kind": "moment", "k": 1}, "M": 2,
        })
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
        err = capsys.readouterr().err
        assert "replicate 0" in err and "k=0" in err

    def test_mode_mismatch(self, run_cfg):
        assert main(["kde", "--config", run_cfg]) == 2

    def test_bad_threads(self, run_cfg):
        assert main(["run", "--config", run_cfg, "--threads", "0"]) == 2


class TestModes:
    def test_mse_two_runs(self, tmp_path):
        cfg = _write(tmp_path / "mse.json", {
            "mode": "mse", "model": CW, "estimator": SMALL, "phi": {"kind": "moment", "k": 2},
            "M": 4, "runs": 2, "truth": 0.8935,
        })
        assert main(["mse", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        assert len(_rows(tmp_path / "o" / "mse_runs.csv")) == 1 + 2
        assert _rows(tmp_path / "o" / "mse.csv")[0] == ["M", "mse", "mean_cost_units"]

    def test_kde_neuron(self, tmp_path):
        cfg = _write(tmp_path / "kde.json", {
            "mode": "kde", "model": {"name": "neuron3d", "params": {}}, "estimator": SMALL,
            "M": 10, "kde": {"bandwidth": 0.05},
        })
        out = tmp_path / "o"
        assert main(["kde", "--config", cfg, "--out", str(out)]) == 0
        assert sorted(p.name for p in out.glob("kde_c*.csv")) == ["kde_c1.csv", "kde_c2.csv", "kde_c3.csv"]
        assert _rows(out / "kde_c1.csv")[0] == ["x", "density"]

    def test_cost_singleton(self, tmp_path, capsys):
        cfg = _write(tmp_path / "cost.json", {
            "mode": "cost", "model": CW, "estimator": {"l_star": 0, "l_max": 0, "p_max": 0, "n_base": 1},
        })
        assert main(["cost", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        rows = _rows(tmp_path / "o" / "cost.csv")
        assert len(rows) == 2 and float(rows[1][5]) == 1.0
        assert "expected cost units: 1" in capsys.readouterr().out

    def test_diagnose(self, tmp_path):
        cfg = _write(tmp_path / "d.json", {
            "mode": "diagnose", "model": {"name": "mean_field_ou", "params": {}},
            "diagnose": {"level": 3, "n": 20, "horizon": 4, "seeds": 2},
        })
        assert main(["diagnose", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        rows = _rows(tmp_path / "o" / "diagnose.csv")
        assert rows[0] == ["seed_index", "t", "W2"] and len(rows) == 1 + 2 * 5

    def test_diagnose_needs_1d(self, tmp_path):
        cfg = _write(tmp_path / "d.json", {"mode": "diagnose", "model": {"name": "neuron3d"}})
        assert main(["diagnose", "--config", cfg]) == 2


class TestConfigParsing:
    def test_named_phi(self):
        cfg = parse_config({"model": CW, "phi": {"kind": "named", "name": "sum_squares"}}, mode="run")
        np.testing.assert_array_equal(cfg.phi.function()(np.array([[1.0, 2.0]])), [5.0])

    def test_quadrature_truth_only_for_cw(self):
        with pytest.raises(ConfigError):
            parse_config({"model": {"name": "mean_field_ou"}, "phi": {"kind": "moment"}, "M": [2],
                          "truth": "curie_weiss_quadrature"}, mode="mse")

    def test_y_file_json(self, tmp_path):
        (tmp_path / "y.json").write_text("[1.0, 2.0]")
        p = _write(tmp_path / "c.json", {"model": {"name": "mle_gaussian", "params": {"y_file": "y.json"}}})
        assert load_config(p).build_model().dim == 3
