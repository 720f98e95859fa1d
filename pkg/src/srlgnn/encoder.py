"""Input assembly and a small trainable transformer encoder.

The encoder stands in for a pretrained language model: token + segment +
sinusoidal position embeddings feed a stack of pre-norm self-attention
blocks, yielding one contextual vector per token plus the [CLS] vector.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import ContextWindow

CLS, SEP, PAD, UNK = "[CLS]", "[SEP]", "[PAD]", "[UNK]"
SPECIALS = (CLS, SEP, PAD, UNK)

AUX_TEMPLATE = ("that", "statement", "expressed")

_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel leading/trailing punctuation
    into separate tokens. Word-internal punctuation (don't, non-neutral)
    stays attached."""
    out: list[str] = []
    for chunk in text.lower().split():
        lead: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(lead)
        if chunk:
            out.append(chunk)
        out.extend(reversed(trail))
    return out


class VocabError(ValueError):
    pass


class Vocab:
    """Dense token -> id map with the four specials pinned to ids 0..3."""

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:4]) != SPECIALS:
            raise VocabError(f"specials must open the vocab, got {tokens[:4]}")
        if len(set(tokens)) != len(tokens):
            raise VocabError("duplicate tokens in vocab")
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    @classmethod
    def build(cls, texts, extra_tokens=()) -> "Vocab":
        seen: set[str] = set()
        for text in texts:
            seen.update(tokenize(text))
        seen.update(AUX_TEMPLATE)
        seen.update(extra_tokens)
        seen.difference_update(SPECIALS)
        return cls(list(SPECIALS) + sorted(seen))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


@dataclass(frozen=True)
class InputSequence:
    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    target_span: tuple[int, int]  # positions of the target utterance's tokens
    tokens: tuple[str, ...]  # surface forms, for inspection and golden tests
    n_target_dropped: int = 0  # leading target tokens cut by truncation

    def __post_init__(self):
        if len(self.token_ids) != len(self.segment_ids):
            raise ValueError("token/segment length mismatch")


class InputTooLongError(ValueError):
    """Even a one-token target plus the auxiliary sentence exceeds T_max."""


def build_input(window: ContextWindow, emotion: str, vocab: Vocab,
                t_max: int = 128) -> InputSequence:
    """Assemble `[CLS] <ctx...> [SEP] <target> [SEP] that statement
    expressed <emotion> [SEP]` with segment 0 for text A, 1 for text B.

    Over T_max, the oldest context utterances are dropped first, then the
    target is left-truncated; the auxiliary sentence is never touched.
    """
    target_tokens = tokenize(window.target.text)
    ctx_tokens = [tokenize(u.text) for u in window.context]
    text_b = list(AUX_TEMPLATE) + tokenize(emotion)

    fixed = 1 + len(text_b) + 1  # [CLS] plus text B with its [SEP]
    budget = t_max - fixed

    def text_a_len(ctx, tgt_len):
        return sum(len(c) + 1 for c in ctx) + tgt_len + 1

    kept_ctx = list(ctx_tokens)
    while kept_ctx and text_a_len(kept_ctx, len(target_tokens)) > budget:
        kept_ctx.pop(0)
    n_dropped = 0
    if text_a_len(kept_ctx, len(target_tokens)) > budget:
        overflow = text_a_len([], len(target_tokens)) - budget
        n_dropped = overflow
        if len(target_tokens) - n_dropped < 1:
            raise InputTooLongError(
                f"target of {len(target_tokens)} tokens cannot fit in "
                f"t_max={t_max} beside the auxiliary sentence"
            )
        target_tokens = target_tokens[n_dropped:]

    tokens: list[str] = [CLS]
    for c in kept_ctx:
        tokens.extend(c)
        tokens.append(SEP)
    start = len(tokens)
    tokens.extend(target_tokens)
    end = len(tokens)
    tokens.append(SEP)
    seg0 = len(tokens)
    tokens.extend(text_b)
    tokens.append(SEP)

    segments = [0] * seg0 + [1] * (len(tokens) - seg0)
    return InputSequence(
        token_ids=tuple(vocab.id(t) for t in tokens),
        segment_ids=tuple(segments),
        target_span=(start, end),
        tokens=tuple(tokens),
        n_target_dropped=n_dropped,
    )


@dataclass
class EncodedSequence:
    token_embeddings: T.Tensor  # [seq_len, d_lm]
    cls_embedding: T.Tensor  # [d_lm], row 0 of token_embeddings


def sinusoidal_positions(length: int, dim: int, dtype=np.float64) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(np.float64)
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)


def init_encoder_params(vocab_size: int, d_lm: int, n_layers: int, n_heads: int,
                        rng: np.random.Generator, dtype=np.float32
                        ) -> dict[str, T.Tensor]:
    """Parameter dict for the toy encoder, names prefixed `enc.`."""
    if d_lm % n_heads != 0:
        raise ValueError(f"d_lm={d_lm} not divisible by n_heads={n_heads}")
    d_head = d_lm // n_heads
    d_ff = 4 * d_lm
    p: dict[str, T.Tensor] = {
        "enc.tok_emb": T.init_matrix(rng, d_lm, (vocab_size, d_lm), dtype),
        "enc.seg_emb": T.init_matrix(rng, d_lm, (2, d_lm), dtype),
    }
    ones = lambda n: T.Tensor(np.ones(n, dtype=dtype), requires_grad=True)
    zeros = lambda n: T.Tensor(np.zeros(n, dtype=dtype), requires_grad=True)
    for b in range(n_layers):
        pre = f"enc.block{b}"
        p[f"{pre}.ln1.g"] = ones(d_lm)
        p[f"{pre}.ln1.b"] = zeros(d_lm)
        for h in range(n_heads):
            for proj in ("wq", "wk", "wv"):
                p[f"{pre}.h{h}.{proj}"] = T.init_matrix(rng, d_lm, (d_lm, d_head), dtype)
        p[f"{pre}.wo"] = T.init_matrix(rng, d_lm, (d_lm, d_lm), dtype)
        p[f"{pre}.bo"] = zeros(d_lm)
        p[f"{pre}.ln2.g"] = ones(d_lm)
        p[f"{pre}.ln2.b"] = zeros(d_lm)
        p[f"{pre}.ff.w1"] = T.init_matrix(rng, d_lm, (d_lm, d_ff), dtype)
        p[f"{pre}.ff.b1"] = zeros(d_ff)
        p[f"{pre}.ff.w2"] = T.init_matrix(rng, d_ff, (d_ff, d_lm), dtype)
        p[f"{pre}.ff.b2"] = zeros(d_lm)
    p["enc.lnf.g"] = ones(d_lm)
    p["enc.lnf.b"] = zeros(d_lm)
    return p


def encode(seq: InputSequence, params: dict[str, T.Tensor], d_lm: int,
           n_layers: int, n_heads: int, t_max: int = 128) -> EncodedSequence:
    """Run the toy transformer; differentiable into every `enc.*` parameter."""
    length = len(seq.token_ids)
    if length > t_max:
        raise ValueError(f"sequence of {length} tokens exceeds t_max={t_max}")
    d_head = d_lm // n_heads
    dtype = params["enc.tok_emb"].dtype

    x = T.add(
        T.gather_rows(params["enc.tok_emb"], list(seq.token_ids)),
        T.gather_rows(params["enc.seg_emb"], list(seq.segment_ids)),
    )
    x = T.add(x, T.Tensor(sinusoidal_positions(length, d_lm, dtype)))

    inv_sqrt = 1.0 / math.sqrt(d_head)
    for b in range(n_layers):
        pre = f"enc.block{b}"
        h = T.layer_norm(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
        heads = []
        for k in range(n_heads):
            q = T.matmul(h, params[f"{pre}.h{k}.wq"])
            key = T.matmul(h, params[f"{pre}.h{k}.wk"])
            v = T.matmul(h, params[f"{pre}.h{k}.wv"])
            scores = T.scale(T.matmul(q, T.transpose(key)), inv_sqrt)
            heads.append(T.matmul(T.softmax(scores), v))
        attn = T.add(T.matmul(T.concat(heads, axis=-1), params[f"{pre}.wo"]),
                     params[f"{pre}.bo"])
        x = T.add(x, attn)
        h2 = T.layer_norm(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
        ff = T.relu(T.add(T.matmul(h2, params[f"{pre}.ff.w1"]),
                          params[f"{pre}.ff.b1"]))
        ff = T.add(T.matmul(ff, params[f"{pre}.ff.w2"]), params[f"{pre}.ff.b2"])
        x = T.add(x, ff)

    x = T.layer_norm(x, params["enc.lnf.g"], params["enc.lnf.b"])
    cls = T.reshape(T.gather_rows(x, [0]), (d_lm,))
    return EncodedSequence(token_embeddings=x, cls_embedding=cls)


def encode_static(seq: InputSequence, table: np.ndarray) -> EncodedSequence:
    """Deterministic lookup encoder: rows of `table` verbatim, no gradients."""
    ids = np.asarray(seq.token_ids)
    if ids.size and ids.max() >= table.shape[0]:
        raise VocabError(
            f"token id {int(ids.max())} outside static table of {table.shape[0]} rows"
        )
    rows = T.Tensor(table[ids])
    return EncodedSequence(
        token_embeddings=rows,
        cls_embedding=T.Tensor(table[ids[0]]),
    )
