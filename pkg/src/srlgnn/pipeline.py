"""Training, evaluation, and context-sweep orchestration."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import (
    Conversation, ContextWindow, CorpusSchema, LabelSet, Metrics,
    assign_consensus_gold, compute_metrics, load_corpus, make_windows,
)
from .encoder import Vocab, tokenize
from .model import ModelConfig, SrlGnnModel, classify_utterance
from .srl_graph import SrlFrame, parse_srl_file, validate_frames

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    train_path: str
    srl_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    label_set: str = "iemocap4"
    custom_labels: list[str] | None = None
    vote_label_set: str | None = None
    context_n: int = 0
    epochs: int = 9
    batch_size: int = 4
    lr: float = 5e-6
    seed: int = 0
    precision: str = "f32"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.context_n < 0:
            raise ConfigError(f"context_n must be >= 0, got {self.context_n}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.precision not in T.DTYPES:
            raise ConfigError(f"unknown precision {self.precision!r}")

    def labels(self) -> LabelSet:
        if self.label_set == "custom":
            if not self.custom_labels:
                raise ConfigError("label_set 'custom' needs custom_labels")
            return LabelSet(tuple(self.custom_labels))
        return LabelSet.named(self.label_set)

    def schema(self) -> CorpusSchema:
        votes = LabelSet.named(self.vote_label_set) if self.vote_label_set else None
        return CorpusSchema(labels=self.labels(), vote_labels=votes)

    def check_files(self) -> None:
        for name in ("train_path", "dev_path", "test_path", "srl_path"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"{name} does not exist: {path}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        model = obj.pop("model", None) or {}
        if isinstance(model, dict):
            model = ModelConfig(**model)
        try:
            return cls(model=model, **obj)
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Sample:
    window: ContextWindow
    frames: list[SrlFrame]
    gold: str


@dataclass
class RunReport:
    train_loss: list[float]
    metrics: Metrics | None
    config: dict
    wall_time: float
    predictions: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "train_loss": self.train_loss,
            "config": self.config,
            "wall_time": self.wall_time,
        }
        if self.metrics is not None:
            out.update(self.metrics.to_dict())
        return out


def prepare_samples(conversations: list[Conversation], labels: LabelSet,
                    frames_map: dict[tuple[str, str], list[SrlFrame]],
                    context_n: int) -> list[Sample]:
    """Context windows plus SRL frames for every classifiable utterance.

    Vote-carrying corpora get consensus gold labels first; windows are cut
    over the full conversation so dropped utterances still provide context.
    Utterances without SRL coverage go through the empty-graph path.
    """
    samples: list[Sample] = []
    missing = 0
    for conv in conversations:
        if any(u.votes for u in conv.utterances):
            conv = assign_consensus_gold(conv, labels)
        for window in make_windows(conv, context_n):
            key = (conv.id, window.target.id)
            frames = frames_map.get(key)
            if frames is None:
                missing += 1
                frames = []
            samples.append(Sample(window, frames, window.target.gold))
    if missing:
        log.warning("%d utterances lack SRL annotations; using empty graphs", missing)
    return samples


def load_samples(corpus_path, cfg: ExperimentConfig) -> list[Sample]:
    conversations = load_corpus(corpus_path, cfg.schema())
    frames_map = parse_srl_file(cfg.srl_path) if cfg.srl_path else {}
    if frames_map:
        counts = {
            (conv.id, u.id): len(tokenize(u.text))
            for conv in conversations
            for u in conv.utterances
        }
        own = {k: v for k, v in frames_map.items() if k in counts}
        validate_frames(own, counts)
    return prepare_samples(conversations, cfg.labels(), frames_map, cfg.context_n)


def _window_loss(model: SrlGnnModel, sample: Sample) -> T.Tensor:
    """Sum of the E one-vs-all binary cross-entropies for one utterance."""
    branches = model.forward_window(sample.window, sample.frames)
    loss = None
    for emotion, (logit, _alpha) in branches.items():
        target = 1.0 if emotion == sample.gold else 0.0
        term = T.bce_with_logits(T.reshape(logit, ()), target)
        loss = term if loss is None else T.add(loss, term)
    return loss


def train_accuracy(model: SrlGnnModel, samples: list[Sample]) -> float:
    hits = sum(
        classify_utterance(model, s.window, s.frames).predicted == s.gold
        for s in samples
    )
    return hits / len(samples)


def fit_model(model: SrlGnnModel, samples: list[Sample], lr: float, epochs: int,
              batch_size: int, seed: int,
              stop_at_accuracy: float | None = None,
              accuracy_check_every: int = 10) -> list[float]:
    """Adam training over shuffled batches; returns per-epoch mean loss
    (sum of E binary losses per utterance, averaged over utterances).

    Deterministic given the seed. Optionally stops once training accuracy
    reaches stop_at_accuracy (checked every accuracy_check_every epochs).
    """
    if not samples:
        raise ConfigError("no trainable samples (no gold-labeled utterances)")
    state = T.AdamState(model.params, lr=lr)
    rng = np.random.default_rng(seed)
    order = np.arange(len(samples))
    losses: list[float] = []
    for epoch in range(epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), batch_size):
            batch = [samples[i] for i in order[start:start + batch_size]]
            with T.Tape() as tape:
                total = None
                for sample in batch:
                    piece = _window_loss(model, sample)
                    total = piece if total is None else T.add(total, piece)
                loss = T.scale(total, 1.0 / len(batch))
                if not np.isfinite(loss.item()):
                    raise FloatingPointError(
                        f"non-finite loss in epoch {epoch}, batch at index {start}"
                    )
                tape.backward(loss)
            grads = {name: tape.grad(p) for name, p in model.params.items()}
            T.adam_step(model.params, grads, state)
            epoch_loss += loss.item() * len(batch)
        losses.append(epoch_loss / len(samples))
        if stop_at_accuracy is not None and (
            (epoch + 1) % accuracy_check_every == 0 or epoch + 1 == epochs
        ):
            if train_accuracy(model, samples) >= stop_at_accuracy:
                break
    return losses


def predict_samples(model: SrlGnnModel, samples: list[Sample]) -> list[dict]:
    rows = []
    for s in samples:
        out = classify_utterance(model, s.window, s.frames)
        rows.append({
            "conv_id": s.window.conv_id,
            "utt_id": s.window.target.id,
            "gold": s.gold,
            "pred": out.predicted,
            "logits": out.per_emotion_logits,
        })
    return rows


def score_predictions(rows: list[dict], labels: LabelSet) -> Metrics:
    return compute_metrics([(r["gold"], r["pred"]) for r in rows], labels)


def train(cfg: ExperimentConfig, out_dir=None,
          stop_at_accuracy: float | None = None) -> tuple[SrlGnnModel, RunReport]:
    """Train a fresh model per the config; optionally persist checkpoint,
    report, and the training-set prediction dump under out_dir."""
    cfg.check_files()
    started = time.monotonic()
    labels = cfg.labels()
    samples = load_samples(cfg.train_path, cfg)
    texts = [s.window.target.text for s in samples] + [
        u.text for s in samples for u in s.window.context
    ]
    vocab = Vocab.build(texts, extra_tokens=[t for l in labels for t in tokenize(l)])
    model = SrlGnnModel.initialize(cfg.model, vocab, labels, cfg.precision)
    losses = fit_model(model, samples, cfg.lr, cfg.epochs, cfg.batch_size,
                       cfg.seed, stop_at_accuracy)
    rows = predict_samples(model, samples)
    metrics = score_predictions(rows, labels)
    report = RunReport(
        train_loss=losses,
        metrics=metrics,
        config=cfg.to_dict(),
        wall_time=time.monotonic() - started,
        predictions=rows,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt = os.path.join(out_dir, "checkpoint.bin")
        model.save(ckpt, cfg.precision)
        _write_report(os.path.join(out_dir, "report.json"), report)
        _write_predictions(os.path.join(out_dir, "predictions.jsonl"), rows)
    return model, report


def evaluate(model: SrlGnnModel, corpus_path, cfg: ExperimentConfig,
             out_dir=None) -> RunReport:
    """Score a trained model on a corpus; no parameter updates."""
    _check_config_match(model.cfg, cfg.model)
    started = time.monotonic()
    samples = load_samples(corpus_path, cfg)
    rows = predict_samples(model, samples)
    metrics = score_predictions(rows, model.labels)
    report = RunReport(
        train_loss=[],
        metrics=metrics,
        config=cfg.to_dict(),
        wall_time=time.monotonic() - started,
        predictions=rows,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_report(os.path.join(out_dir, "report.json"), report)
        _write_predictions(os.path.join(out_dir, "predictions.jsonl"), rows)
    return report


def _check_config_match(have: ModelConfig, want: ModelConfig) -> None:
    for f in dataclasses.fields(ModelConfig):
        if getattr(have, f.name) != getattr(want, f.name):
            raise ConfigError(
                f"checkpoint config mismatch on {f.name!r}: "
                f"checkpoint={getattr(have, f.name)!r} requested={getattr(want, f.name)!r}"
            )


def context_sweep(cfg: ExperimentConfig, values=(0, 1, 2, 4, 8),
                  out_dir=None) -> list[tuple[str, RunReport]]:
    """One train+evaluate per context size, seeds offset by position.

    Rows are named SRL-GNN-<n> after the context count.
    """
    if not values:
        raise ConfigError("context_sweep needs at least one context value")
    results = []
    for i, n in enumerate(values):
        run_cfg = ExperimentConfig.from_dict({
            **cfg.to_dict(),
            "context_n": n,
            "seed": cfg.seed + i,
        })
        run_cfg.model.seed = cfg.model.seed + i
        eval_path = run_cfg.test_path or run_cfg.train_path
        sub_dir = os.path.join(out_dir, f"context_{n}") if out_dir else None
        model, _train_report = train(run_cfg, out_dir=sub_dir)
        report = evaluate(model, eval_path, run_cfg, out_dir=sub_dir)
        results.append((f"SRL-GNN-{n}", report))
    if out_dir is not None:
        with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
            json.dump(sweep_table(results), fh, indent=2)
    return results


def sweep_table(results: list[tuple[str, RunReport]]) -> list[dict]:
    return [
        {
            "model": name,
            "wa": report.metrics.weighted_accuracy,
            "ua": report.metrics.unweighted_accuracy,
        }
        for name, report in results
    ]


def _write_report(path, report: RunReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def _write_predictions(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
