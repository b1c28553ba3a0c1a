"""Command-line surface.

Subcommands: synth (write a synthetic corpus), train, eval, chat,
export-human-eval, import-human-eval, serve. Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .config import ConfigError, TrainRunConfig, parse_config
from .corpus import CorpusError, IngestConfig, SentimentLabel, Vocabulary, tokenize
from .cvae import CvaeGenerator
from .evaluation import (
    EvalReport,
    SentimentClassifier,
    config_fingerprint,
    corpus_perplexity,
    export_human_eval,
    import_human_eval,
    sentiment_accuracy,
    train_sentiment_classifier,
)
from .recurrent import load_checkpoint
from .seq2seq import Seq2SeqGenerator
from .trainer import run_training

GENERATOR_FAMILIES = {"seq2seq": Seq2SeqGenerator, "cvae": CvaeGenerator}


def _load_corpus_arg(spec: str, cfg: TrainRunConfig | None = None, vocab=None):
    """A corpus argument is either 'synthetic:<n>:<seed>' or a JSONL path."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise CorpusError(f"synthetic corpus spec must be synthetic:<n>:<seed>, got {spec!r}")
        n, seed = int(parts[1]), int(parts[2])
        return corpus_mod.generate_synthetic_corpus(seed, n)
    ingest = IngestConfig()
    if cfg is not None:
        ingest = IngestConfig(max_len=cfg.max_len, max_vocab=cfg.max_vocab, min_count=cfg.min_count)
    return corpus_mod.load_corpus(spec, vocab=vocab, config=ingest)


def _load_generator(path):
    family, _, extra = load_checkpoint(path)
    if family not in GENERATOR_FAMILIES:
        raise ValueError(f"{path} holds a {family!r} checkpoint, not a generator")
    model, extra = GENERATOR_FAMILIES[family].load(path)
    return model, Vocabulary(extra["vocab"]), extra


def cmd_synth(args) -> int:
    split = corpus_mod.generate_synthetic_corpus(args.seed, args.n)
    corpus_mod.write_jsonl(split, args.out)
    print(json.dumps({"written": str(args.out), **{k: v for k, v in split.stats.items() if k == "overall"}},
                     sort_keys=True))
    return 0


def cmd_train(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return 2
    cfg = parse_config(config_path)
    split = _load_corpus_arg(cfg.corpus, cfg)
    run_dir = Path(args.out) if args.out else Path("runs") / config_path.stem
    summary = run_training(split, cfg, run_dir)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    model, vocab, extra = _load_generator(args.checkpoint)
    cfg = TrainRunConfig(**extra.get("config", {}))
    split = _load_corpus_arg(args.corpus, cfg, vocab=None if args.corpus.startswith("synthetic:") else vocab)
    if split.vocab.id_to_token != vocab.id_to_token:
        print("error: corpus vocabulary does not match the checkpoint vocabulary", file=sys.stderr)
        return 1
    examples = split.split(args.split)
    if args.classifier:
        clf, _ = SentimentClassifier.load(args.classifier)
    else:
        clf, _ = train_sentiment_classifier(split, cfg, steps=args.classifier_steps)
    ppl, is_bound = corpus_perplexity(model, examples)
    acc = sentiment_accuracy(model, examples, clf, n=args.n_sentiment, seed=args.seed,
                             use_gold_labels=args.gold_labels, max_len=cfg.sample_max_len)
    report = EvalReport(
        perplexity=ppl,
        ppl_is_bound=is_bound,
        sentiment_accuracy=acc["accuracy"],
        n_examples=acc["n"],
        per_label=acc["per_label"],
        label_assignment=acc["label_assignment"],
        config_fingerprint=config_fingerprint(extra.get("config", {})),
        model_family=model.family,
    ).validate()
    bound_note = " (bound)" if is_bound else ""
    print(f"perplexity{bound_note}: {ppl:.4f}")
    print(f"sentiment accuracy: {acc['accuracy']:.4f}")
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_chat(args) -> int:
    model, vocab, extra = _load_generator(args.checkpoint)
    clf = clf_vocab = None
    if args.classifier:
        clf, clf_extra = SentimentClassifier.load(args.classifier)
        clf_vocab = Vocabulary(clf_extra["vocab"])
    max_len = extra.get("config", {}).get("sample_max_len", 12)
    turn = 0
    print("type a message; ':q' quits")
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            return 0
        if line == ":q":
            return 0
        if not line:
            continue
        sentiment = None
        while sentiment is None:
            try:
                raw = input("sentiment [positive/negative]> ").strip().lower()
            except EOFError:
                return 0
            if raw == ":q":
                return 0
            if raw in ("positive", "negative"):
                sentiment = SentimentLabel.parse(raw)
            else:
                print("please answer 'positive' or 'negative'")
        ids = vocab.encode(tokenize(line))
        tokens, _ = model.respond(tuple(ids), sentiment, mode=args.mode,
                                  seed=args.seed + turn, max_len=max_len)
        text = vocab.text(tokens)
        print(f"bot> {text}")
        if clf is not None:
            clf_ids = clf_vocab.encode(tokenize(text))
            if clf_ids:
                label, prob = clf.predict(tuple(clf_ids))
                verdict = "match" if label is sentiment else "mismatch"
                print(f"classifier: {label} ({prob:.3f}) [{verdict}]")
        turn += 1


def cmd_export_human_eval(args) -> int:
    models = []
    vocab = None
    for path in args.checkpoints:
        model, ckpt_vocab, _ = _load_generator(path)
        if vocab is not None and ckpt_vocab.id_to_token != vocab.id_to_token:
            print("error: checkpoints disagree on vocabulary", file=sys.stderr)
            return 1
        vocab = ckpt_vocab
        models.append((Path(path).stem, model))
    split = _load_corpus_arg(args.corpus, vocab=None if args.corpus.startswith("synthetic:") else vocab)
    if split.vocab.id_to_token != vocab.id_to_token:
        print("error: corpus vocabulary does not match the checkpoints", file=sys.stderr)
        return 1
    info = export_human_eval(models, split.split(args.split), vocab, n=args.n,
                             seed=args.seed, out_dir=args.out)
    print(json.dumps(info, sort_keys=True))
    return 0


def cmd_import_human_eval(args) -> int:
    sheets = Path(args.sheets)
    scores = import_human_eval(sheets / "sheet_a.csv", sheets / "sheet_b.csv", sheets / "key.json")
    print(json.dumps(scores, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from .server import create_server

    server = create_server(args.checkpoint_dir, port=args.port, host=args.host)
    host, port = server.server_address
    print(f"serving on http://{host}:{port} (ctrl-c stops)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentigen",
                                     description="sentiment-controlled dialogue generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="run directory (default runs/<config name>)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True, help="JSONL path or synthetic:<n>:<seed>")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--classifier", help="classifier checkpoint (trained fresh if omitted)")
    p.add_argument("--classifier-steps", type=int, default=300)
    p.add_argument("--n-sentiment", type=int, default=200)
    p.add_argument("--seed", type=int, default=99)
    p.add_argument("--gold-labels", action="store_true")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("chat", help="interactive chat with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--classifier")
    p.add_argument("--mode", default="greedy", choices=["greedy", "sample"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("export-human-eval", help="write blinded judging sheets")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_human_eval)

    p = sub.add_parser("import-human-eval", help="score filled judging sheets")
    p.add_argument("--sheets", required=True, help="directory with sheet_a.csv, sheet_b.csv, key.json")
    p.set_defaults(fn=cmd_import_human_eval)

    p = sub.add_parser("serve", help="HTTP inference service")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CorpusError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
