import json

import numpy as np
import pytest

from immse import cli, sources
from immse.core_math import make_rng
from immse.io import ParseError, ingest, write_raw


class TestIngest:
    def test_csv(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1,x2\n0,0\n")
        ds = ingest(p)
        assert ds.data.shape == (1, 2) and np.all(ds.data == 0)

    def test_csv_errors_name_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,2\n3\n")
        with pytest.raises(ParseError, match=":3:"):
            ingest(p)
        p.write_text("a\n1\nfoo\n")
        with pytest.raises(ParseError, match=":3:"):
            ingest(p)

    def test_u8_mapping(self, tmp_path):
        p = tmp_path / "d.u8"
        np.array([0, 255, 128], dtype=np.uint8).tofile(p)
        (tmp_path / "d.u8.json").write_text('{"n": 3, "d": 1}')
        ds = ingest(p, "raw-u8")
        assert ds.data[:, 0] == pytest.approx([-1.0, 1.0, -1.0 + 256 / 255])
        assert ds.delta == pytest.approx(2 / 255)

    def test_f32_roundtrip(self, tmp_path):
        X = make_rng(0).standard_normal((7, 3))
        p = tmp_path / "d.f32"
        write_raw(p, X)
        assert ingest(p, "raw-f32").data == pytest.approx(X, rel=1e-6)

    def test_sidecar_mismatch(self, tmp_path):
        p = tmp_path / "d.f32"
        np.zeros(5, dtype="<f4").tofile(p)
        (tmp_path / "d.f32.json").write_text('{"n": 2, "d": 3}')
        with pytest.raises(ParseError, match="sidecar"):
            ingest(p, "raw-f32")

    def test_missing_sidecar(self, tmp_path):
        p = tmp_path / "d.u8"
        p.write_bytes(b"\x00")
        with pytest.raises(ParseError):
            ingest(p, "raw-u8")

    def test_file_untouched(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x\n1\n2\n")
        before = p.read_bytes()
        ingest(p)
        assert p.read_bytes() == before


def test_sources_registry():
    assert sources.lattice2().atoms.shape == (25, 2)
    assert sources.gmm2().weights == pytest.approx([0.5, 0.5])
    with pytest.raises(ValueError):
        sources.get_source("nope")


def run(tmp_path, *argv):
    out = tmp_path / "out.json"
    code = cli.main([*argv, "--out", str(out), "--threads", "1"])
    return code, out


class TestCli:
    def test_estimate_gaussian(self, tmp_path, capsys):
        code, out = run(tmp_path, "estimate", "--source", "gaussian", "--n-eps", "10")
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["bpd"] == pytest.approx(2.047, abs=3 * doc["std_error_nats"] / np.log(2) + 1e-3)
        assert doc["seed"] == 0 and "version" in doc and doc["config"]["source"] == "gaussian"
        assert "nats" in capsys.readouterr().out

    def test_deterministic_bytes(self, tmp_path):
        _, out = run(tmp_path, "estimate", "--source", "gmm2", "--seed", "5")
        first = out.read_bytes()
        _, out = run(tmp_path, "estimate", "--source", "gmm2", "--seed", "5")
        assert out.read_bytes() == first

    def test_verify(self, tmp_path):
        code, out = run(tmp_path, "verify", "--source", "gmm2")
        doc = json.loads(out.read_text())
        assert code == 0 and doc["rel_error"] <= 0.01

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"source": "binary", "mode": "discrete", "n_alpha": 50, "seed": 3}))
        code, out = run(tmp_path, "estimate", "--config", str(cfg), "--n-alpha", "60")
        doc = json.loads(out.read_text())
        assert code == 0 and doc["kind"] == "discrete" and doc["n_alpha"] == 60 and doc["seed"] == 3

    def test_curve_csv(self, tmp_path):
        out = tmp_path / "c.csv"
        assert cli.main(["curve", "--source", "gaussian", "--n-alpha", "5", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "alpha,mse_eps,mse_x,mmse_gauss,n"

    def test_train_then_ensemble(self, tmp_path):
        ckpt = tmp_path / "m.json"
        assert cli.main(["train", "--source", "bimodal1d", "--steps", "20", "--out", str(ckpt)]) == 0
        code, out = run(tmp_path, "ensemble", "--source", "bimodal1d", "--model", "oracle", "--model", str(ckpt), "--n-data", "500")
        doc = json.loads(out.read_text())
        assert code == 0 and len(doc["members"]) == 2
        assert doc["ensemble"]["nats"] <= min(m["nats"] for m in doc["members"]) + 3 * doc["ensemble"]["std_error_nats"]

    def test_bootstrap(self, tmp_path):
        code, out = run(tmp_path, "bootstrap", "--source", "gaussian", "--n-alpha", "200", "--n-data", "500")
        doc = json.loads(out.read_text())
        assert code == 0 and doc["n_subsets"] == 10 and doc["subset_std"] > 0

    def test_dequantized_estimate(self, tmp_path):
        code, out = run(tmp_path, "estimate", "--source", "binary", "--dequantize", "--n-data", "2000")
        doc = json.loads(out.read_text())
        assert code == 0 and doc["discrete_nats"] == pytest.approx(doc["nats"] - np.log(2.0))

    def test_error_json(self, tmp_path, capsys):
        code, _ = run(tmp_path, "estimate", "--source", "lattice2", "--mode", "discrete", "--model", "missing.json")
        err = json.loads(capsys.readouterr().err)
        assert code == 1 and err["error"] == "FileNotFoundError"

    def test_discrete_needs_delta(self, tmp_path, capsys):
        code, _ = run(tmp_path, "estimate", "--source", "gaussian", "--mode", "discrete")
        assert code == 1 and "delta" in json.loads(capsys.readouterr().err)["message"]
