"""Conversational emotion corpora: JSONL loading, consensus filtering,
context windowing, and WA/UA metrics."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""


# Canonical label sets. The vote set for IEMOCAP-style data covers every
# category annotators could pick, of which only four are kept downstream.
LABEL_SETS: dict[str, list[str]] = {
    "iemocap4": ["anger", "happiness", "neutral", "sadness"],
    "iemocap10": [
        "neutral", "happiness", "sadness", "anger", "surprise",
        "fear", "disgust", "frustration", "excited", "other",
    ],
    "friends8": [
        "non-neutral", "neutral", "joy", "sadness",
        "anger", "disgust", "fear", "surprise",
    ],
    "friends4": ["neutral", "joy", "sadness", "anger"],
}


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise CorpusError(f"duplicate labels in {self.labels}")

    @classmethod
    def named(cls, name: str) -> "LabelSet":
        if name not in LABEL_SETS:
            raise CorpusError(f"unknown label set {name!r}; known: {sorted(LABEL_SETS)}")
        return cls(tuple(LABEL_SETS[name]))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise CorpusError(f"label {label!r} not in label set {self.labels}") from None

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker: str
    text: str
    votes: tuple[str, ...] = ()
    gold: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"utterance {self.id!r} has empty text")


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        ids = [u.id for u in self.utterances]
        if len(set(ids)) != len(ids):
            dupes = [i for i, c in Counter(ids).items() if c > 1]
            raise CorpusError(f"duplicate utterance ids {dupes} in conversation {self.id!r}")


@dataclass(frozen=True)
class ContextWindow:
    target: Utterance
    context: tuple[Utterance, ...]
    n_requested: int
    conv_id: str = ""


@dataclass(frozen=True)
class CorpusSchema:
    """Validation rules for a corpus file: gold labels, vote labels, policy."""

    labels: LabelSet
    vote_labels: LabelSet | None = None
    vote_policy: str = "majority"


def load_corpus(path, schema: CorpusSchema) -> list[Conversation]:
    """Read a JSONL corpus, validating every line against the schema.

    Lines of one conv_id must be contiguous and in temporal order.
    """
    conversations: list[Conversation] = []
    seen_convs: set[str] = set()
    current_id: str | None = None
    current: list[Utterance] = []

    def flush():
        if current_id is not None:
            conversations.append(Conversation(current_id, tuple(current)))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from None
            try:
                conv_id = obj["conv_id"]
                utt = Utterance(
                    id=obj["utt_id"],
                    speaker=obj["speaker"],
                    text=obj["text"],
                    votes=tuple(obj.get("votes", ())),
                    gold=obj.get("gold"),
                )
            except KeyError as exc:
                raise CorpusError(f"{path}:{lineno}: missing field {exc}") from None
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if utt.gold is not None and utt.gold not in schema.labels:
                raise CorpusError(
                    f"{path}:{lineno}: unknown gold label {utt.gold!r} "
                    f"(labels: {list(schema.labels)})"
                )
            if schema.vote_labels is not None:
                for v in utt.votes:
                    if v not in schema.vote_labels:
                        raise CorpusError(
                            f"{path}:{lineno}: unknown vote label {v!r}"
                        )
            if conv_id != current_id:
                flush()
                if conv_id in seen_convs:
                    raise CorpusError(
                        f"{path}:{lineno}: conversation {conv_id!r} is not contiguous"
                    )
                seen_convs.add(conv_id)
                current_id = conv_id
                current = []
            current.append(utt)
    flush()
    return conversations


def save_corpus(path, conversations: list[Conversation]) -> None:
    """Write conversations back out in the JSONL interchange format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for conv in conversations:
            for u in conv.utterances:
                obj = {
                    "conv_id": conv.id,
                    "utt_id": u.id,
                    "speaker": u.speaker,
                    "text": u.text,
                }
                if u.votes:
                    obj["votes"] = list(u.votes)
                if u.gold is not None:
                    obj["gold"] = u.gold
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def consensus_label(votes: tuple[str, ...]) -> str | None:
    """The label with a strict plurality of at least two votes, else None."""
    counts = Counter(votes).most_common()
    if not counts:
        return None
    top_label, top_n = counts[0]
    if top_n < 2:
        return None
    if len(counts) > 1 and counts[1][1] == top_n:
        return None
    return top_label


def consensus_filter(conv: Conversation, keep_labels: LabelSet) -> Conversation:
    """Keep only utterances whose annotator votes reach a >=2 strict plurality
    on a label inside keep_labels; the winning label becomes gold."""
    kept: list[Utterance] = []
    for u in conv.utterances:
        if not u.votes:
            raise CorpusError(f"utterance {u.id!r} has no votes to filter on")
        winner = consensus_label(u.votes)
        if winner is not None and winner in keep_labels:
            kept.append(Utterance(u.id, u.speaker, u.text, u.votes, winner))
    return Conversation(conv.id, tuple(kept))


def assign_consensus_gold(conv: Conversation, keep_labels: LabelSet) -> Conversation:
    """Full-length variant of consensus_filter: losers stay, with gold=None,
    so dropped utterances can still serve as context."""
    out: list[Utterance] = []
    for u in conv.utterances:
        if u.votes:
            winner = consensus_label(u.votes)
            gold = winner if winner is not None and winner in keep_labels else None
            out.append(Utterance(u.id, u.speaker, u.text, u.votes, gold))
        else:
            out.append(u)
    return Conversation(conv.id, tuple(out))


def make_windows(conv: Conversation, n: int) -> list[ContextWindow]:
    """One window per gold-labeled utterance, with up to n immediately
    preceding utterances of the same conversation as context."""
    if n < 0:
        raise ValueError(f"context size must be >= 0, got {n}")
    windows = []
    for i, u in enumerate(conv.utterances):
        if u.gold is None:
            continue
        ctx = conv.utterances[max(0, i - n):i]
        windows.append(ContextWindow(u, tuple(ctx), n, conv_id=conv.id))
    return windows


@dataclass
class Metrics:
    weighted_accuracy: float
    unweighted_accuracy: float
    per_label_accuracy: dict[str, float]
    confusion: np.ndarray  # [gold, pred] counts

    def to_dict(self) -> dict:
        return {
            "weighted_accuracy": self.weighted_accuracy,
            "unweighted_accuracy": self.unweighted_accuracy,
            "per_label_accuracy": self.per_label_accuracy,
            "confusion": self.confusion.tolist(),
        }


def compute_metrics(preds: list[tuple[str, str]], labels: LabelSet) -> Metrics:
    """Weighted (overall) and unweighted (macro over non-empty labels)
    accuracy plus per-label accuracy and the confusion matrix."""
    if not preds:
        raise ValueError("compute_metrics needs at least one prediction")
    e = len(labels)
    confusion = np.zeros((e, e), dtype=np.int64)
    for gold, pred in preds:
        confusion[labels.index(gold), labels.index(pred)] += 1
    total = confusion.sum()
    correct = np.trace(confusion)
    per_label: dict[str, float] = {}
    for i, label in enumerate(labels):
        support = confusion[i].sum()
        if support > 0:
            per_label[label] = float(confusion[i, i] / support)
    wa = float(correct / total)
    ua = float(np.mean(list(per_label.values())))
    return Metrics(wa, ua, per_label, confusion)
