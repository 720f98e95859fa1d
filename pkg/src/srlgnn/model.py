"""Graph network over the predicate-argument structure of an utterance.

Node embeddings are initialized from the encoder's token vectors, refined
by GCN layers, pooled by multiplicative attention against the [CLS]
vector, and concatenated with [CLS] for a per-emotion binary logit.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .corpus import ContextWindow, LabelSet
from .encoder import (
    EncodedSequence, InputSequence, Vocab, build_input, encode,
    init_encoder_params, tokenize,
)
from .srl_graph import PaGraph, SrlFrame, build_graph, drop_truncated_nodes

log = logging.getLogger(__name__)


class GraphSpanError(ValueError):
    """A node's span does not fit inside the encoded target span."""


@dataclass
class ModelConfig:
    d_lm: int = 64
    d_gcn: int = 32
    n_gcn_layers: int = 1
    n_enc_layers: int = 2
    n_heads: int = 2
    t_max: int = 128
    attention_mode: str = "softmax"  # softmax | literal
    neighbor_transform: str = "learned"  # learned | identity
    activation: str = "relu"  # relu | tanh
    seed: int = 0

    def __post_init__(self):
        if self.attention_mode not in ("softmax", "literal"):
            raise ValueError(f"unknown attention_mode {self.attention_mode!r}")
        if self.neighbor_transform not in ("learned", "identity"):
            raise ValueError(f"unknown neighbor_transform {self.neighbor_transform!r}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "ModelConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _activation(name: str):
    return T.relu if name == "relu" else T.tanh


def init_gnn_params(cfg: ModelConfig, rng: np.random.Generator,
                    dtype=np.float32) -> dict[str, T.Tensor]:
    """GNN and head parameters, names prefixed `gnn.` / `head.`."""
    p = {
        "gnn.w_init": T.init_matrix(rng, cfg.d_lm, (cfg.d_lm, cfg.d_gcn), dtype),
        "gnn.w_attn": T.init_matrix(rng, cfg.d_gcn, (cfg.d_gcn, cfg.d_lm), dtype),
    }
    for l in range(cfg.n_gcn_layers):
        p[f"gnn.v{l}"] = T.init_matrix(rng, cfg.d_gcn, (cfg.d_gcn, cfg.d_gcn), dtype)
        p[f"gnn.w{l}"] = T.init_matrix(rng, cfg.d_gcn, (cfg.d_gcn, cfg.d_gcn), dtype)
    p["head.w"] = T.init_matrix(rng, cfg.d_lm + cfg.d_gcn,
                                (cfg.d_lm + cfg.d_gcn,), dtype)
    p["head.b"] = T.Tensor(np.zeros((), dtype=dtype), requires_grad=True)
    return p


def init_nodes(graph: PaGraph, enc: EncodedSequence, target_span: tuple[int, int],
               w_init: T.Tensor, activation: str = "relu") -> T.Tensor:
    """Initial node matrix: activation(mean of each node's token vectors @ W).

    Node-local token indices are offset by target_span start to address the
    full input sequence.
    """
    start, end = target_span
    n = graph.node_count
    seq_len = enc.token_embeddings.shape[0]
    sel = np.zeros((n, seq_len), dtype=enc.token_embeddings.dtype)
    for node in graph.nodes:
        s, e = node.span
        if start + e > end:
            raise GraphSpanError(
                f"node span {node.span} escapes target span {target_span}"
            )
        sel[node.node_id, start + s:start + e] = 1.0 / (e - s)
    pooled = T.matmul(T.Tensor(sel), enc.token_embeddings)
    return _activation(activation)(T.matmul(pooled, w_init))


def _neighbor_matrix(graph: PaGraph, dtype) -> np.ndarray:
    """Row i holds 1/|N_i| at i's neighbors; zero row for isolated nodes."""
    n = graph.node_count
    a = np.zeros((n, n), dtype=dtype)
    for edge in graph.edges:
        i, j = tuple(edge)
        a[i, j] = 1.0
        a[j, i] = 1.0
    deg = a.sum(axis=1, keepdims=True)
    np.divide(a, deg, out=a, where=deg > 0)
    return a


def gcn_layer(h: T.Tensor, graph: PaGraph, v_l: T.Tensor | None, w_l: T.Tensor,
              activation: str = "relu") -> T.Tensor:
    """One propagation step: neighbor average (optionally transformed by V)
    added to the node's own transform, then the activation."""
    if h.shape[0] != graph.node_count:
        raise T.ShapeError(
            f"node matrix rows {h.shape[0]} != graph nodes {graph.node_count}"
        )
    agg = T.Tensor(_neighbor_matrix(graph, h.dtype))
    msgs = h if v_l is None else T.matmul(h, v_l)
    z = T.matmul(agg, msgs)
    return _activation(activation)(T.add(T.matmul(h, w_l), z))


class LiteralAttentionError(ZeroDivisionError):
    """Literal-mode normalizer (sum of raw scores) is numerically zero."""


def attention_readout(h_last: T.Tensor, cls_vec: T.Tensor, w_attn: T.Tensor,
                      mode: str = "softmax", activation: str = "relu"
                      ) -> tuple[T.Tensor, T.Tensor]:
    """Multiplicative attention of [CLS] over node embeddings.

    Returns (weights, graph embedding). Softmax mode normalizes scores via
    softmax; literal mode divides by the raw score sum and errors when that
    sum vanishes. An empty graph yields empty weights and a zero embedding.
    """
    d_gcn = w_attn.shape[0]
    if h_last.shape[0] == 0:
        return (T.Tensor(np.zeros(0, dtype=cls_vec.dtype)),
                T.Tensor(np.zeros(d_gcn, dtype=cls_vec.dtype)))
    keys = _activation(activation)(T.matmul(h_last, w_attn))
    scores = T.matmul(keys, cls_vec)
    if mode == "softmax":
        alpha = T.softmax(scores)
    elif mode == "literal":
        total = T.sum_all(scores)
        if abs(total.item()) < 1e-8:
            raise LiteralAttentionError(
                f"literal attention denominator {total.item():.3e} below 1e-8"
            )
        alpha = T.div(scores, total)
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    return alpha, T.matmul(alpha, h_last)


def binary_head(cls_vec: T.Tensor, graph_vec: T.Tensor, w: T.Tensor,
                b: T.Tensor) -> T.Tensor:
    """Dense layer on [cls ; graph] producing one logit."""
    joined = T.concat([cls_vec, graph_vec], axis=-1)
    return T.add(T.matmul(joined, w), b)


@dataclass
class ClassifierOutput:
    per_emotion_logits: dict[str, float]
    predicted: str
    alphas: dict[str, list[float]]


class SrlGnnModel:
    """Config + vocab + label set + the full parameter dict."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab, labels: LabelSet,
                 params: dict[str, T.Tensor]):
        self.cfg = cfg
        self.vocab = vocab
        self.labels = labels
        self.params = params

    @classmethod
    def initialize(cls, cfg: ModelConfig, vocab: Vocab, labels: LabelSet,
                   precision: str = "f32") -> "SrlGnnModel":
        dtype = T.DTYPES[precision]
        rng = np.random.default_rng(cfg.seed)
        params = init_encoder_params(len(vocab), cfg.d_lm, cfg.n_enc_layers,
                                     cfg.n_heads, rng, dtype)
        params.update(init_gnn_params(cfg, rng, dtype))
        return cls(cfg, vocab, labels, params)

    # -- persistence -----------------------------------------------------

    def save(self, checkpoint_path, precision: str = "f32") -> None:
        path = str(checkpoint_path)
        T.save_checkpoint(path, self.params, precision)
        with open(path + ".config.json", "w", encoding="utf-8") as fh:
            fh.write(self.cfg.to_json() + "\n")
        self.vocab.save(path + ".vocab.txt")
        with open(path + ".labels.txt", "w", encoding="utf-8", newline="\n") as fh:
            for label in self.labels:
                fh.write(label + "\n")

    @classmethod
    def load(cls, checkpoint_path) -> "SrlGnnModel":
        path = str(checkpoint_path)
        params, _precision = T.load_checkpoint(path)
        cfg = ModelConfig.load(path + ".config.json")
        vocab = Vocab.load(path + ".vocab.txt")
        with open(path + ".labels.txt", encoding="utf-8") as fh:
            labels = LabelSet(tuple(line.strip() for line in fh if line.strip()))
        return cls(cfg, vocab, labels, params)

    # -- forward ---------------------------------------------------------

    def logit_for_emotion(self, window: ContextWindow, graph: PaGraph,
                          emotion: str) -> tuple[T.Tensor, T.Tensor, InputSequence]:
        """One binary branch: (logit, attention weights, assembled input)."""
        cfg = self.cfg
        seq = build_input(window, emotion, self.vocab, cfg.t_max)
        g = graph
        if seq.n_target_dropped:
            log.warning(
                "truncation dropped %d target tokens of %s; trimming graph nodes",
                seq.n_target_dropped, window.target.id,
            )
            g = drop_truncated_nodes(graph, seq.n_target_dropped)
        enc = encode(seq, self.params, cfg.d_lm, cfg.n_enc_layers, cfg.n_heads,
                     cfg.t_max)
        v_key = "gnn.v{}" if cfg.neighbor_transform == "learned" else None
        if g.node_count:
            h = init_nodes(g, enc, seq.target_span, self.params["gnn.w_init"],
                           cfg.activation)
            for l in range(cfg.n_gcn_layers):
                v_l = self.params[v_key.format(l)] if v_key else None
                h = gcn_layer(h, g, v_l, self.params[f"gnn.w{l}"], cfg.activation)
        else:
            h = T.Tensor(np.zeros((0, cfg.d_gcn), dtype=enc.cls_embedding.dtype))
        alpha, h_graph = attention_readout(
            h, enc.cls_embedding, self.params["gnn.w_attn"],
            cfg.attention_mode, cfg.activation,
        )
        logit = binary_head(enc.cls_embedding, h_graph,
                            self.params["head.w"], self.params["head.b"])
        return logit, alpha, seq

    def graph_for(self, window: ContextWindow, frames: list[SrlFrame]) -> PaGraph:
        return build_graph(frames, len(tokenize(window.target.text)))

    def forward_window(self, window: ContextWindow, frames: list[SrlFrame]
                       ) -> dict[str, tuple[T.Tensor, T.Tensor]]:
        """Per-emotion (logit, alpha) tensors; shared parameters throughout."""
        graph = self.graph_for(window, frames)
        return {
            emotion: self.logit_for_emotion(window, graph, emotion)[:2]
            for emotion in self.labels
        }


def classify_utterance(model: SrlGnnModel, window: ContextWindow,
                       frames: list[SrlFrame]) -> ClassifierOutput:
    """One-vs-all decision: highest binary logit wins, ties to the lowest
    label ordinal."""
    branches = model.forward_window(window, frames)
    logits = {e: logit.item() for e, (logit, _alpha) in branches.items()}
    best = max(model.labels, key=lambda e: (logits[e], -model.labels.index(e)))
    return ClassifierOutput(
        per_emotion_logits=logits,
        predicted=best,
        alphas={e: alpha.data.tolist() for e, (_l, alpha) in branches.items()},
    )
