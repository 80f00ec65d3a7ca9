import json
import subprocess
import sys

import numpy as np
import pytest

from adaptest import engine
from adaptest.bank import bank_to_dict, load_bank
from adaptest.cli import EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main


@pytest.fixture
def vlat_path(tmp_path):
    path = tmp_path / "vlat.json"
    assert main(["bank", "synth", "--family", "vlat", "--seed", "1", "--out", str(path)]) == EXIT_OK
    return path


@pytest.fixture
def calvi_path(tmp_path):
    path = tmp_path / "calvi.json"
    assert main(["bank", "synth", "--family", "calvi", "--seed", "1", "--out", str(path)]) == EXIT_OK
    return path


class TestBankCommands:
    def test_synth_vlat_is_53_items(self, vlat_path):
        bank = load_bank(vlat_path)
        assert len(bank.items) == 53

    def test_synth_byte_identical_reruns(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        main(["bank", "synth", "--family", "calvi", "--seed", "9", "--out", str(p1)])
        main(["bank", "synth", "--family", "calvi", "--seed", "9", "--out", str(p2)])
        assert p1.read_bytes() == p2.read_bytes()

    def test_validate_clean_bank(self, vlat_path, tmp_path):
        out = tmp_path / "v.json"
        code = main(["bank", "validate", "--bank", str(vlat_path), "--out", str(out)])
        assert code == EXIT_OK
        assert json.loads(out.read_text()) == {"violations": []}

    def test_validate_broken_bank_exits_2(self, vlat_path, tmp_path):
        data = json.loads(vlat_path.read_text())
        data["items"][0]["params"]["a"] = -1.0
        broken = tmp_path / "broken.json"
        broken.write_text(json.dumps(data))
        out = tmp_path / "v.json"
        code = main(["bank", "validate", "--bank", str(broken), "--out", str(out)])
        assert code == EXIT_VALIDATION
        report = json.loads(out.read_text())
        assert any("discrimination" in v for v in report["violations"])


class TestSimulateCommands:
    def test_sweep_range_produces_35_length_groups(self, vlat_path, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main([
            "simulate", "sweep", "--bank", str(vlat_path), "--lengths", "19:53",
            "--persons", "3", "--seed", "7", "--out", str(out), "--no-figure",
        ])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()[1:]
        lengths = {int(line.split(",")[0]) for line in lines}
        assert lengths == set(range(19, 54))
        assert len(lengths) == 35
        summary = json.loads(out.with_suffix(".summary.json").read_text())
        assert summary["lengths"] == list(range(19, 54))

    def test_sweep_byte_identical_reruns(self, calvi_path, tmp_path):
        outs = []
        for name in ("s1.csv", "s2.csv"):
            out = tmp_path / name
            main([
                "simulate", "sweep", "--bank", str(calvi_path), "--lengths", "11,12",
                "--persons", "4", "--seed", "3", "--baseline", "static_reference",
                "--out", str(out), "--no-figure",
            ])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_sweep_infeasible_length_exits_2(self, vlat_path, tmp_path):
        code = main([
            "simulate", "sweep", "--bank", str(vlat_path), "--lengths", "5:6",
            "--persons", "2", "--seed", "1", "--out", str(tmp_path / "x.csv"),
        ])
        assert code == EXIT_VALIDATION

    def test_sweep_renders_figure(self, calvi_path, tmp_path):
        out = tmp_path / "sweep.csv"
        main([
            "simulate", "sweep", "--bank", str(calvi_path), "--lengths", "11,13",
            "--persons", "4", "--seed", "3", "--out", str(out),
        ])
        png = out.with_suffix(".png")
        assert png.exists()
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_recovery_outputs(self, calvi_path, tmp_path):
        out = tmp_path / "rec.csv"
        code = main([
            "simulate", "recovery", "--bank", str(calvi_path), "--persons", "10",
            "--seed", "2", "--out", str(out),
        ])
        assert code == EXIT_OK
        assert out.read_text().startswith("person,mistake_step,recovery_length,censored")
        summary = json.loads(out.with_suffix(".summary.json").read_text())
        assert summary["rule"] == "printed"
        assert out.with_suffix(".png").exists()


class TestEvalCommands:
    def _retest_csv(self, tmp_path):
        from adaptest import evalmodels as ev

        data = ev.simulate_retest_data(60, 0.0, 1.0, 0.4, 0.2, seed=5)
        path = tmp_path / "retest.csv"
        rows = ["person_id,theta_1,se_1,theta_2,se_2"]
        rows += [
            f"{o.person_id},{o.theta_t1},{o.se_t1},{o.theta_t2},{o.se_t2}"
            for o in data
        ]
        path.write_text("\n".join(rows) + "\n")
        return path

    def test_eval_icc(self, tmp_path):
        data = self._retest_csv(tmp_path)
        out = tmp_path / "icc.json"
        code = main([
            "eval", "icc", "--data", str(data), "--seed", "1", "--out", str(out),
            "--chains", "2", "--iterations", "1500", "--warmup", "750", "--thin", "1",
        ])
        assert code == EXIT_OK
        result = json.loads(out.read_text())
        assert "icc" in result["parameters"]
        assert 0 < result["parameters"]["icc"]["median"] < 1
        assert out.with_suffix(".png").exists()

    def test_eval_validity(self, tmp_path):
        from adaptest import evalmodels as ev

        data = ev.simulate_paired_data(50, rho=0.7, seed=2)
        path = tmp_path / "paired.csv"
        rows = ["person_id,theta_1,se_1,theta_2,se_2"]
        rows += [
            f"{o.person_id},{o.theta_original},{o.se_original},{o.theta_adaptive},{o.se_adaptive}"
            for o in data
        ]
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "validity.json"
        code = main([
            "eval", "validity", "--data", str(path), "--seed", "1", "--out", str(out),
            "--chains", "2", "--iterations", "1500", "--warmup", "750", "--thin", "1",
            "--no-figure",
        ])
        assert code == EXIT_OK
        result = json.loads(out.read_text())
        assert -1 < result["parameters"]["rho"]["median"] < 1

    def test_eval_samplesize(self, tmp_path):
        out = tmp_path / "ss.json"
        code = main([
            "eval", "samplesize", "--model", "validity", "--ns", "30",
            "--target", "0.5", "--seed", "3", "--replicates", "2", "--out", str(out),
        ])
        assert code == EXIT_OK
        result = json.loads(out.read_text())
        assert result["recommended_n"] == 30

    def test_eval_samplesize_csv_format(self, tmp_path):
        out = tmp_path / "ss.csv"
        code = main([
            "eval", "samplesize", "--model", "validity", "--ns", "30",
            "--target", "0.5", "--seed", "3", "--replicates", "2",
            "--out", str(out), "--format", "csv",
        ])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "n,median_ci_halfwidth"
        assert lines[1].startswith("30,")


class TestCalibrateCommand:
    def test_calibrate_small_matrix(self, tmp_path):
        rng = np.random.default_rng(0)
        theta = rng.normal(0, 1, 40)
        z = 1.2 * (theta[:, None] + rng.normal(0, 1, 6)[None, :])
        y = (rng.random((40, 6)) < 1 / (1 + np.exp(-z))).astype(int)
        path = tmp_path / "m.csv"
        rows = ["person_id," + ",".join(f"i{k}" for k in range(6))]
        rows += [f"p{j}," + ",".join(str(v) for v in y[j]) for j in range(40)]
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "cal.json"
        code = main([
            "calibrate", "--matrix", str(path), "--seed", "1", "--out", str(out),
            "--chains", "2", "--iterations", "1000", "--warmup", "500", "--thin", "1",
        ])
        assert code == EXIT_OK
        result = json.loads(out.read_text())
        assert len(result["bank_fragment"]["items"]) == 6


class TestCorrelationsCommand:
    def test_feature_correlations_json(self, tmp_path, vlat_path):
        bank = load_bank(vlat_path)
        rng = np.random.default_rng(0)
        theta = rng.normal(0, 1, 60)
        ids = [it.item_id for it in bank.items]
        a = np.array([it.params.a for it in bank.items])
        b = np.array([it.params.b for it in bank.items])
        z = a[None, :] * (theta[:, None] + b[None, :])
        y = (rng.random((60, 53)) < 1 / (1 + np.exp(-z))).astype(int)
        path = tmp_path / "m.csv"
        rows = ["person_id," + ",".join(ids)]
        rows += [f"p{j}," + ",".join(str(v) for v in y[j]) for j in range(60)]
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "corr.json"
        code = main([
            "correlations", "--matrix", str(path), "--bank", str(vlat_path),
            "--dimension", "task", "--seed", "1", "--out", str(out),
            "--chains", "2", "--iterations", "800", "--warmup", "400", "--thin", "1",
        ])
        assert code == EXIT_OK
        result = json.loads(out.read_text())
        assert result["dimension"] == "task"
        n = len(result["values"])
        corr = np.array(result["correlation"])
        assert corr.shape == (n, n)
        assert np.allclose(corr, corr.T)
        assert np.allclose(np.diag(corr), 1.0)
        assert np.all(np.abs(corr) <= 1.0)


class TestServeCommand:
    def test_serve_real_http_roundtrip(self, tmp_path, calvi_path):
        import socket
        import time
        import urllib.request

        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.close()
        config = tmp_path / "service.json"
        config.write_text(json.dumps({
            "banks": [str(calvi_path)],
            "data_dir": str(tmp_path / "data"),
            "port": port,
        }))
        proc = subprocess.Popen(
            [sys.executable, "-m", "adaptest.cli", "serve", "--config", str(config)],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        try:
            bank = load_bank(calvi_path)
            payload = json.dumps({"bank_id": bank.bank_id}).encode()
            body = None
            for _ in range(50):
                time.sleep(0.2)
                try:
                    req = urllib.request.Request(
                        f"http://127.0.0.1:{port}/api/v1/sessions",
                        data=payload,
                        headers={"Content-Type": "application/json"},
                    )
                    with urllib.request.urlopen(req, timeout=2) as resp:
                        body = json.loads(resp.read())
                    break
                except OSError:
                    continue
            assert body is not None, "service never came up"
            assert body["item"]["total"] == 15
            assert "session_id" in body
        finally:
            proc.terminate()
            proc.wait(timeout=10)


class TestReplayCommand:
    def test_replay_matches_logged_score(self, tmp_path, calvi_path):
        bank = load_bank(calvi_path)
        config = engine.default_config(bank, rng_seed=5)
        state = engine.start_session(bank, config)
        rng = np.random.default_rng(5)
        while state.status == "active":
            item = bank.item(state.pending_item)
            engine.submit_answer(
                state, bank, item.item_id, int(rng.integers(0, len(item.options)))
            )
        transcript = tmp_path / "t.jsonl"
        engine.write_transcript(state, transcript)
        out = tmp_path / "replay.json"
        code = main([
            "replay", "--transcript", str(transcript), "--bank", str(calvi_path),
            "--out", str(out),
        ])
        assert code == EXIT_OK
        result = json.loads(out.read_text())
        assert result["match"] is True
        assert result["recomputed_score"] == result["logged_score"]


class TestUsageErrors:
    def test_unknown_flag_exits_64(self, vlat_path):
        with pytest.raises(SystemExit) as exc:
            main(["bank", "validate", "--bank", str(vlat_path), "--sideways"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_subcommand_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == EXIT_USAGE

    def test_console_script_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "adaptest.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        for cmd in ("bank", "simulate", "calibrate", "eval", "correlations", "serve", "replay"):
            assert cmd in proc.stdout
