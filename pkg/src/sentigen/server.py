"""Stateless HTTP inference service.

Endpoints:
  GET  /v1/health   -> {"status": "ok"}
  GET  /v1/models   -> {"models": [{"model_id", "family"}, ...]}
  POST /v1/respond  -> RespondRequest body:
        {history, sentiment, model_id, mode?, seed?}
     response body:
        {response, tokens, log_prob, classifier_sentiment, model_id}

Requests carry the full history (no server-side session state); checkpoints
are loaded once and never mutated, so concurrent requests are safe and
identical greedy requests return identical bodies. The default seed is 0,
which makes greedy responses reproducible even for latent-variable models
(their prior draw is seeded). CORS is permissive so a browser client served
from any origin can talk to the service.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .corpus import SentimentLabel, Vocabulary, tokenize
from .cvae import CvaeGenerator
from .evaluation import SentimentClassifier
from .recurrent import load_checkpoint
from .seq2seq import Seq2SeqGenerator

__all__ = ["ServiceState", "load_service_state", "respond", "create_server"]

GENERATOR_FAMILIES = {"seq2seq": Seq2SeqGenerator, "cvae": CvaeGenerator}


class ServiceState:
    def __init__(self):
        self.models: dict[str, dict] = {}
        self.classifier: SentimentClassifier | None = None
        self.classifier_vocab: Vocabulary | None = None

    def model_list(self) -> list[dict]:
        return [
            {"model_id": mid, "family": entry["family"]}
            for mid, entry in sorted(self.models.items())
        ]


def load_service_state(checkpoint_dir) -> ServiceState:
    """Scan a directory for checkpoints; generator families become servable
    models (model_id = file stem), a classifier checkpoint provides
    verdicts, anything else is ignored."""
    state = ServiceState()
    checkpoint_dir = Path(checkpoint_dir)
    for path in sorted(checkpoint_dir.glob("*.ckpt")):
        family, _, extra = load_checkpoint(path)
        if family in GENERATOR_FAMILIES:
            model, extra = GENERATOR_FAMILIES[family].load(path)
            vocab = Vocabulary(extra["vocab"])
            max_len = extra.get("config", {}).get("sample_max_len", 12)
            state.models[path.stem] = {
                "family": family, "model": model, "vocab": vocab, "max_len": max_len,
            }
        elif family == "classifier":
            clf, extra = SentimentClassifier.load(path)
            state.classifier = clf
            state.classifier_vocab = Vocabulary(extra["vocab"])
    if not state.models:
        raise FileNotFoundError(f"no generator checkpoints under {checkpoint_dir}")
    return state


def _classify(state: ServiceState, text: str) -> dict | None:
    if state.classifier is None:
        return None
    ids = state.classifier_vocab.encode(tokenize(text))
    if not ids:
        return None
    label, prob = state.classifier.predict(tuple(ids))
    return {"label": str(label), "probability": prob}


def respond(state: ServiceState, payload: dict) -> tuple[int, dict]:
    """Pure request handler: (status code, response body)."""
    if not isinstance(payload, dict):
        return 400, {"error": "request body must be a JSON object"}
    model_id = payload.get("model_id")
    if model_id not in state.models:
        return 404, {"error": f"unknown model_id {model_id!r}"}
    sentiment = payload.get("sentiment")
    if sentiment not in ("positive", "negative"):
        return 400, {"error": f"sentiment must be 'positive' or 'negative', got {sentiment!r}"}
    mode = payload.get("mode", "greedy")
    if mode not in ("greedy", "sample"):
        return 400, {"error": f"mode must be 'greedy' or 'sample', got {mode!r}"}
    seed = payload.get("seed", 0)
    if not isinstance(seed, int):
        return 400, {"error": "seed must be an integer"}
    history = payload.get("history", "")
    entry = state.models[model_id]
    vocab = entry["vocab"]
    tokens = vocab.encode(tokenize(history if isinstance(history, str) else ""))
    if not tokens:
        return 400, {"error": "history is empty after tokenization"}
    label = SentimentLabel.parse(sentiment)
    out_tokens, log_prob = entry["model"].respond(
        tuple(tokens), label, mode=mode, seed=seed, max_len=entry["max_len"]
    )
    text = vocab.text(out_tokens)
    return 200, {
        "response": text,
        "tokens": [int(t) for t in out_tokens],
        "log_prob": log_prob,
        "classifier_sentiment": _classify(state, text),
        "model_id": model_id,
    }


class _Handler(BaseHTTPRequestHandler):
    server_version = "sentigen/0.1"

    def _send(self, status: int, body: dict):
        blob = json.dumps(body, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self._cors()
        self.end_headers()
        self.wfile.write(blob)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.end_headers()

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(200, {"status": "ok"})
        elif self.path == "/v1/models":
            self._send(200, {"models": self.server.state.model_list()})
        else:
            self._send(404, {"error": f"no route {self.path}"})

    def do_POST(self):
        if self.path != "/v1/respond":
            self._send(404, {"error": f"no route {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, json.JSONDecodeError):
            self._send(400, {"error": "invalid JSON body"})
            return
        status, body = respond(self.server.state, payload)
        self._send(status, body)

    def log_message(self, *args):
        pass  # keep test output quiet


def create_server(checkpoint_dir, port: int = 8642, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    state = load_service_state(checkpoint_dir)
    server = ThreadingHTTPServer((host, port), _Handler)
    server.state = state
    return server
