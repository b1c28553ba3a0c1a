import json
import subprocess
import sys
import threading
from pathlib import Path

import pytest
import requests

from sentigen.cli import main
from sentigen.config import TrainRunConfig, config_to_text
from sentigen.corpus import generate_synthetic_corpus
from sentigen.evaluation import SentimentClassifier
from sentigen.server import create_server, load_service_state, respond
from sentigen.trainer import run_training

TINY_CFG = dict(
    model_family="seq2seq",
    corpus="synthetic:60:3",
    seed=11,
    emb_dim=4,
    enc_hidden=4,
    sent_dim=4,
    z_dim=2,
    disc_resp_hidden=4,
    disc_mlp_hidden=4,
    batch_size=8,
    pretrain_g_steps=6,
    pretrain_d_steps=0,
    adversarial_steps=0,
    sample_max_len=5,
    max_vocab=100,
)


def write_cfg(path, **overrides):
    values = dict(TINY_CFG)
    values.update(overrides)
    cfg = TrainRunConfig(**values).validate()
    Path(path).write_text(config_to_text(cfg), encoding="utf-8")
    return cfg


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = TrainRunConfig(**TINY_CFG).validate()
    corpus = generate_synthetic_corpus(3, 60)
    summary = run_training(corpus, cfg, root)
    clf = SentimentClassifier(len(corpus.vocab), emb_dim=4, enc_hidden=4, mlp_hidden=4, seed=0)
    clf.save(root / "classifier.ckpt", extra={"vocab": corpus.vocab.id_to_token})
    return root, corpus, summary


class TestTrainCommand:
    def test_missing_config_exits_2_naming_path(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "nope.cfg")])
        assert code == 2
        assert "nope.cfg" in capsys.readouterr().err

    def test_unknown_key_exits_2_naming_key(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("model_family = seq2seq\nwarp_speed = 9\n", encoding="utf-8")
        code = main(["train", "--config", str(path)])
        assert code == 2
        assert "warp_speed" in capsys.readouterr().err

    def test_zero_step_run_writes_init_checkpoint_and_empty_metrics(self, tmp_path):
        cfg_path = tmp_path / "null.cfg"
        write_cfg(cfg_path, pretrain_g_steps=0)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "generator.ckpt").exists()
        assert (out / "metrics.jsonl").read_text() == ""
        assert (out / "config.cfg").exists()

    def test_rerun_reproduces_metrics_bytes(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        write_cfg(cfg_path)
        for name in ("r1", "r2"):
            assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "r1" / "metrics.jsonl").read_bytes() == (tmp_path / "r2" / "metrics.jsonl").read_bytes()


class TestEvalCommand:
    def test_uniform_init_reports_vocab_size_ppl(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.cfg"
        write_cfg(cfg_path, pretrain_g_steps=0)
        out = tmp_path / "run"
        main(["train", "--config", str(cfg_path), "--out", str(out)])
        # zero the output projection so every step is exactly uniform
        from sentigen.seq2seq import Seq2SeqGenerator

        g, extra = Seq2SeqGenerator.load(out / "generator.ckpt")
        g.params["out_w"].data[...] = 0.0
        g.params["out_b"].data[...] = 0.0
        g.save(out / "generator.ckpt", extra={"vocab": extra["vocab"], "config": extra["config"]})
        report_path = tmp_path / "report.json"
        code = main([
            "eval", "--checkpoint", str(out / "generator.ckpt"),
            "--corpus", "synthetic:60:3", "--split", "dev",
            "--classifier-steps", "5", "--n-sentiment", "10",
            "--out", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        vocab_size = len(extra["vocab"])
        assert abs(report["perplexity"] - vocab_size) < 1e-3
        assert report["n_examples"] == 10
        assert set(report) == {
            "perplexity", "ppl_is_bound", "sentiment_accuracy", "n_examples",
            "per_label", "label_assignment", "config_fingerprint", "model_family",
        }

    def test_vocab_mismatch_is_explicit_error(self, trained_run, capsys):
        root, _, _ = trained_run
        code = main([
            "eval", "--checkpoint", str(root / "generator.ckpt"),
            "--corpus", "synthetic:60:4",  # different seed, different vocab
            "--classifier-steps", "1", "--n-sentiment", "2",
        ])
        assert code == 1
        assert "vocabulary" in capsys.readouterr().err


class TestChatCommand:
    def _run(self, root, stdin_text):
        cmd = [sys.executable, "-m", "sentigen.cli", "chat",
               "--checkpoint", str(root / "generator.ckpt"),
               "--classifier", str(root / "classifier.ckpt"), "--seed", "5"]
        src = Path(__file__).resolve().parent.parent / "src"
        return subprocess.run(cmd, input=stdin_text, capture_output=True, text=True,
                              env={"PYTHONPATH": str(src), "PATH": "/usr/bin:/bin"})

    def test_quit_immediately(self, trained_run):
        root, _, _ = trained_run
        result = self._run(root, ":q\n")
        assert result.returncode == 0

    def test_scripted_session_deterministic(self, trained_run):
        root, _, _ = trained_run
        script = "how was the movie\npositive\n:q\n"
        a = self._run(root, script)
        b = self._run(root, script)
        assert a.returncode == 0
        assert a.stdout == b.stdout
        assert "bot>" in a.stdout

    def test_empty_line_reprompts_without_model_call(self, trained_run):
        root, _, _ = trained_run
        result = self._run(root, "\n\n:q\n")
        assert result.returncode == 0
        assert "bot>" not in result.stdout

    def test_bad_sentiment_reprompts(self, trained_run):
        root, _, _ = trained_run
        result = self._run(root, "hello there\nhappy\nnegative\n:q\n")
        assert result.returncode == 0
        assert "please answer" in result.stdout
        assert "bot>" in result.stdout


@pytest.fixture(scope="module")
def server(trained_run):
    root, _, _ = trained_run
    srv = create_server(root, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base
    srv.shutdown()
    srv.server_close()


class TestService:
    def test_health(self, server):
        r = requests.get(f"{server}/v1/health", timeout=5)
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_models_listing(self, server):
        r = requests.get(f"{server}/v1/models", timeout=5)
        ids = [m["model_id"] for m in r.json()["models"]]
        assert "generator" in ids
        assert all(m["family"] in ("seq2seq", "cvae") for m in r.json()["models"])

    def test_respond_roundtrip_with_verdict(self, server):
        body = {"history": "how was the movie", "sentiment": "positive",
                "model_id": "generator", "mode": "greedy"}
        r = requests.post(f"{server}/v1/respond", json=body, timeout=10)
        assert r.status_code == 200
        data = r.json()
        assert data["model_id"] == "generator"
        assert data["log_prob"] <= 0.0
        assert isinstance(data["tokens"], list) and data["tokens"]
        assert data["classifier_sentiment"]["label"] in ("positive", "negative")

    def test_invalid_sentiment_400(self, server):
        body = {"history": "hi", "sentiment": "happy", "model_id": "generator"}
        r = requests.post(f"{server}/v1/respond", json=body, timeout=5)
        assert r.status_code == 400

    def test_unknown_model_404_with_json_error(self, server):
        body = {"history": "hi", "sentiment": "positive", "model_id": "ghost"}
        r = requests.post(f"{server}/v1/respond", json=body, timeout=5)
        assert r.status_code == 404
        assert "error" in r.json()

    def test_greedy_determinism_over_http(self, server):
        body = {"history": "tell me about the trip", "sentiment": "negative",
                "model_id": "generator", "mode": "greedy"}
        r1 = requests.post(f"{server}/v1/respond", json=body, timeout=10)
        r2 = requests.post(f"{server}/v1/respond", json=body, timeout=10)
        assert r1.content == r2.content

    def test_concurrent_identical_requests_agree(self, server):
        body = {"history": "what about the game", "sentiment": "positive",
                "model_id": "generator", "mode": "greedy"}
        results = []

        def hit():
            results.append(requests.post(f"{server}/v1/respond", json=body, timeout=10).content)

        threads = [threading.Thread(target=hit) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(results)) == 1

    def test_cors_preflight(self, server):
        r = requests.options(f"{server}/v1/respond", timeout=5)
        assert r.status_code == 204
        assert r.headers["Access-Control-Allow-Origin"] == "*"


class TestServiceUnit:
    def test_empty_history_400(self, trained_run):
        root, _, _ = trained_run
        state = load_service_state(root)
        status, body = respond(state, {"history": "   ", "sentiment": "positive", "model_id": "generator"})
        assert status == 400

    def test_no_checkpoints_is_startup_error(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_service_state(tmp_path)

    def test_state_never_mutates_checkpoints(self, trained_run):
        root, _, _ = trained_run
        before = (root / "generator.ckpt").read_bytes()
        state = load_service_state(root)
        respond(state, {"history": "the movie", "sentiment": "negative", "model_id": "generator"})
        assert (root / "generator.ckpt").read_bytes() == before


class TestHumanEvalCommands:
    def test_export_and_import_roundtrip(self, trained_run, tmp_path, capsys):
        root, corpus, _ = trained_run
        out = tmp_path / "sheets"
        code = main([
            "export-human-eval", "--checkpoints", str(root / "generator.ckpt"),
            "--corpus", "synthetic:60:3", "--split", "dev", "--n", "2",
            "--seed", "5", "--out", str(out),
        ])
        assert code == 0
        import csv

        with open(out / "sheet_b.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        with open(out / "sheet_b.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(rows[0] + ["judge1"])
            for r in rows[1:]:
                writer.writerow(r + ["positive"])
        with open(out / "sheet_a.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        with open(out / "sheet_a.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(rows[0] + ["judge1"])
            for r in rows[1:]:
                writer.writerow(r + ["3"])
        capsys.readouterr()  # drain the export output
        code = main(["import-human-eval", "--sheets", str(out)])
        assert code == 0
        scores = json.loads(capsys.readouterr().out)
        assert scores["quality"]["generator"] == 3.0


class TestSynthCommand:
    def test_writes_corpus(self, tmp_path, capsys):
        out = tmp_path / "synth.jsonl"
        assert main(["synth", "--out", str(out), "--n", "40", "--seed", "3"]) == 0
        assert out.exists()
        info = json.loads(capsys.readouterr().out)
        assert info["overall"]["n_examples"] == 40
