"""Command-line entry point.

stdout carries machine-readable JSON payloads only; human diagnostics go
to stderr. Usage errors exit 2, runtime errors exit 1 with a JSON error
object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .corpus import ContextWindow, Utterance
from .encoder import tokenize
from .gradcheck import model_gradcheck, ops_gradcheck
from .model import ModelConfig, SrlGnnModel, classify_utterance
from .pipeline import (
    ExperimentConfig, context_sweep, evaluate, sweep_table, train,
)
from .srl_graph import (
    SrlFrame, build_graph, graph_stats, parse_srl_file, validate_frames,
)

logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                    format="%(levelname)s %(name)s: %(message)s")


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        if not args.corpus:
            raise ValueError("either --config or --corpus is required")
        cfg = ExperimentConfig(train_path=args.corpus)
    if args.corpus:
        cfg.train_path = args.corpus
    for attr, flag in (("srl_path", "srl"), ("label_set", "labels"),
                       ("context_n", "context"), ("epochs", "epochs"),
                       ("seed", "seed"), ("precision", "precision")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "mode", None) is not None:
        cfg.model.attention_mode = args.mode
    if args.seed is not None:
        cfg.model.seed = args.seed
    return cfg


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    _model, report = train(cfg, out_dir=args.out)
    payload = report.to_dict()
    payload.pop("confusion", None)
    print(json.dumps(payload))
    return 0


def cmd_eval(args) -> int:
    model = SrlGnnModel.load(args.checkpoint)
    cfg = _experiment_config(args)
    if args.labels is None:
        cfg.label_set = "custom"
        cfg.custom_labels = list(model.labels)
    if args.mode is None and args.seed is None:
        cfg.model = ModelConfig(**dict(model.cfg.__dict__))
    report = evaluate(model, args.corpus or cfg.test_path or cfg.train_path,
                      cfg, out_dir=args.out)
    print(json.dumps(report.to_dict()))
    return 0


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    values = [int(v) for v in args.values.split(",")] if args.values else [0, 1, 2, 4, 8]
    results = context_sweep(cfg, values, out_dir=args.out)
    print(json.dumps(sweep_table(results)))
    return 0


def cmd_predict(args) -> int:
    model = SrlGnnModel.load(args.checkpoint)
    target = Utterance("cli-target", args.speaker, args.text)
    context = tuple(
        Utterance(f"cli-ctx{i}", args.speaker, text)
        for i, text in enumerate(args.context or [])
    )
    window = ContextWindow(target, context, n_requested=len(context))
    frames = []
    if args.srl_frames:
        for entry in json.loads(args.srl_frames):
            frames.append(SrlFrame(tuple(entry["predicate"]),
                                   tuple(tuple(a) for a in entry["arguments"])))
    out = classify_utterance(model, window, frames)
    print(json.dumps({
        "predicted": out.predicted,
        "logits": out.per_emotion_logits,
        "alphas": out.alphas,
    }))
    return 0


def cmd_build_graphs(args) -> int:
    conversations = _load_corpus_lenient(args.corpus)
    frames_map = parse_srl_file(args.srl)
    rows = []
    for conv in conversations:
        for u in conv.utterances:
            frames = frames_map.get((conv.id, u.id), [])
            graph = build_graph(frames, len(tokenize(u.text)))
            rows.append({
                "conv_id": conv.id,
                "utt_id": u.id,
                "nodes": [
                    {"id": n.node_id, "span": list(n.span), "kind": n.kind}
                    for n in graph.nodes
                ],
                "edges": sorted(sorted(e) for e in graph.edges),
                "stats": graph_stats(graph),
            })
    out = "\n".join(json.dumps(r) for r in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    else:
        print(out)
    return 0


def _load_corpus_lenient(path):
    """Corpus load without label validation; graph building and SRL
    validation only need ids and text."""
    from .corpus import Conversation, Utterance as U
    convs, cur_id, cur = [], None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["conv_id"] != cur_id:
                if cur_id is not None:
                    convs.append(Conversation(cur_id, tuple(cur)))
                cur_id, cur = obj["conv_id"], []
            cur.append(U(obj["utt_id"], obj["speaker"], obj["text"],
                         tuple(obj.get("votes", ())), obj.get("gold")))
    if cur_id is not None:
        convs.append(Conversation(cur_id, tuple(cur)))
    return convs


def cmd_validate_srl(args) -> int:
    frames_map = parse_srl_file(args.srl)
    conversations = _load_corpus_lenient(args.corpus)
    counts = {
        (conv.id, u.id): len(tokenize(u.text))
        for conv in conversations
        for u in conv.utterances
    }
    validate_frames(frames_map, counts)
    print(json.dumps({"ok": True, "entries": len(frames_map)}))
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    ops = ops_gradcheck(seed)
    groups = model_gradcheck(seed)
    print(json.dumps({"ops": ops, "model_groups": groups}))
    worst_ops = max(ops.values())
    worst_model = max(groups.values())
    print(f"ops max rel error: {worst_ops:.3e}; "
          f"model max rel error: {worst_model:.3e}", file=sys.stderr)
    return 0 if worst_ops < 1e-6 and worst_model < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srlgnn",
        description="Emotion classification with a predicate-argument graph "
                    "network over a toy transformer encoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, corpus=False, srl=False, checkpoint=False, training=False):
        if corpus:
            p.add_argument("--corpus", help="corpus JSONL path")
        if srl:
            p.add_argument("--srl", help="SRL annotation JSON path")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint file")
        if training:
            p.add_argument("--config", help="experiment config JSON")
            p.add_argument("--labels", help="label set name "
                           "(iemocap4|friends8|friends4|custom)")
            p.add_argument("--context", type=int, help="context utterances N")
            p.add_argument("--epochs", type=int, help="training epochs")
            p.add_argument("--precision", choices=["f32", "f64"],
                           help="numeric precision")
            p.add_argument("--mode", choices=["softmax", "literal"],
                           help="attention normalization mode")
            p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p, corpus=True, srl=True, training=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    common(p, corpus=True, srl=True, checkpoint=True, training=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="train+evaluate across context sizes")
    common(p, corpus=True, srl=True, training=True)
    p.add_argument("--values", help="comma-separated context sizes "
                   "(default 0,1,2,4,8)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("predict", help="classify one utterance")
    common(p, checkpoint=True)
    p.add_argument("--text", required=True, help="target utterance text")
    p.add_argument("--context", action="append",
                   help="context utterance, oldest first (repeatable)")
    p.add_argument("--speaker", default="speaker", help="speaker tag")
    p.add_argument("--srl-frames", dest="srl_frames",
                   help='inline SRL frames JSON, e.g. '
                        '\'[{"predicate":[1,2],"arguments":[[0,1]]}]\'')
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("build-graphs",
                       help="emit predicate-argument graphs and stats")
    p.add_argument("--corpus", required=True)
    p.add_argument("--srl", required=True)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--seed", type=int, help="unused; accepted for uniformity")
    p.set_defaults(fn=cmd_build_graphs)

    p = sub.add_parser("validate-srl",
                       help="cross-check SRL spans against a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--srl", required=True)
    p.add_argument("--seed", type=int, help="unused; accepted for uniformity")
    p.set_defaults(fn=cmd_validate_srl)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of ops and the model")
    p.add_argument("--seed", type=int, help="random seed")
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
