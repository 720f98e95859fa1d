"""Finite-difference verification for tensor ops and the full model."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .corpus import ContextWindow, LabelSet, Utterance
from .encoder import Vocab
from .model import ModelConfig, SrlGnnModel
from .srl_graph import SrlFrame


def _reducer(rng, shape):
    """Fixed-random-weight reduction of an op output to a scalar."""
    w = T.Tensor(rng.standard_normal(shape))

    def reduce(out: T.Tensor) -> T.Tensor:
        return T.sum_all(T.mul(out, w))

    return reduce


def ops_gradcheck(seed: int = 0, eps: float = 1e-4) -> dict[str, float]:
    """Max relative error of each differentiable op against central
    differences, away from non-smooth points. 64-bit throughout."""
    rng = np.random.default_rng(seed)

    def rand(*shape):
        return T.Tensor(rng.standard_normal(shape), requires_grad=True)

    results: dict[str, float] = {}

    b2 = T.Tensor(rng.standard_normal((4, 3)))
    red = _reducer(rng, (5, 3))
    results["matmul"] = T.grad_check(lambda x: red(T.matmul(x, b2)), rand(5, 4), eps)

    bias = T.Tensor(rng.standard_normal(4))
    red = _reducer(rng, (3, 4))
    results["add"] = T.grad_check(lambda x: red(T.add(x, bias)), rand(3, 4), eps)

    other = T.Tensor(rng.standard_normal((3, 4)))
    red = _reducer(rng, (3, 4))
    results["mul"] = T.grad_check(lambda x: red(T.mul(x, other)), rand(3, 4), eps)

    denom = T.Tensor(np.array(1.7))
    red = _reducer(rng, (4,))
    results["div"] = T.grad_check(lambda x: red(T.div(x, denom)), rand(4,), eps)

    red = _reducer(rng, (3, 4))
    results["scale"] = T.grad_check(lambda x: red(T.scale(x, -2.5)), rand(3, 4), eps)

    tail = T.Tensor(rng.standard_normal((3, 2)))
    red = _reducer(rng, (3, 6))
    results["concat"] = T.grad_check(lambda x: red(T.concat([x, tail])), rand(3, 4), eps)

    red = _reducer(rng, (4, 3))
    results["transpose"] = T.grad_check(lambda x: red(T.transpose(x)), rand(3, 4), eps)

    red = _reducer(rng, (3, 3))
    results["gather_rows"] = T.grad_check(
        lambda x: red(T.gather_rows(x, [0, 2, 2])), rand(4, 3), eps)

    red = _reducer(rng, (3,))
    results["row_mean"] = T.grad_check(lambda x: red(T.row_mean(x)), rand(5, 3), eps)

    red = _reducer(rng, (3, 4))
    results["tanh"] = T.grad_check(lambda x: red(T.tanh(x)), rand(3, 4), eps)

    red = _reducer(rng, (3, 4))
    results["sigmoid"] = T.grad_check(lambda x: red(T.sigmoid(x)), rand(3, 4), eps)

    red = _reducer(rng, (3, 5))
    results["softmax"] = T.grad_check(lambda x: red(T.softmax(x)), rand(3, 5), eps)

    # keep relu inputs away from the kink at 0
    relu_in = rng.standard_normal((3, 4))
    relu_in = np.where(np.abs(relu_in) < 0.2, relu_in + 0.5 * np.sign(relu_in), relu_in)
    red = _reducer(rng, (3, 4))
    results["relu"] = T.grad_check(
        lambda x: red(T.relu(x)), T.Tensor(relu_in, requires_grad=True), eps)

    targets = rng.integers(0, 2, size=6).astype(np.float64)
    results["bce_with_logits"] = T.grad_check(
        lambda x: T.sum_all(T.bce_with_logits(x, targets)), rand(6,), eps)

    gain = T.Tensor(rng.standard_normal(4))
    shift = T.Tensor(rng.standard_normal(4))
    red = _reducer(rng, (3, 4))
    results["layer_norm"] = T.grad_check(
        lambda x: red(T.layer_norm(x, gain, shift)), rand(3, 4), eps)
    return results


def _tiny_fixture(seed: int, d_lm: int = 8, d_gcn: int = 4):
    """Three-node model fixture on a micro vocabulary, 64-bit."""
    cfg = ModelConfig(d_lm=d_lm, d_gcn=d_gcn, n_gcn_layers=1, n_enc_layers=1,
                      n_heads=2, t_max=32, seed=seed)
    labels = LabelSet(("joy", "sadness"))
    vocab = Vocab.build(["i love you", "really"],
                        extra_tokens=["joy", "sadness", "that", "statement",
                                      "expressed"])
    model = SrlGnnModel.initialize(cfg, vocab, labels, precision="f64")
    window = ContextWindow(
        target=Utterance("u2", "A", "i love you"),
        context=(Utterance("u1", "B", "really"),),
        n_requested=1,
    )
    frames = [SrlFrame(predicate=(1, 2), arguments=((0, 1), (2, 3)))]
    return model, window, frames


PARAM_GROUPS = {
    "node_init": ("gnn.w_init",),
    "neighbor_transform": ("gnn.v",),
    "gcn_combine": ("gnn.w0", "gnn.w1", "gnn.w2"),
    "attention": ("gnn.w_attn",),
    "head": ("head.",),
    "encoder_embeddings": ("enc.tok_emb", "enc.seg_emb"),
    "encoder_blocks": ("enc.block", "enc.lnf"),
}


def _group_of(name: str) -> str:
    for group, prefixes in PARAM_GROUPS.items():
        if any(name == p or name.startswith(p) for p in prefixes):
            return group
    raise KeyError(f"parameter {name!r} not covered by any gradcheck group")


def model_gradcheck(seed: int = 0, eps: float = 1e-4) -> dict[str, float]:
    """End-to-end check: binary loss of the 3-node fixture differentiated
    against every parameter, reported as max error per parameter group."""
    model, window, frames = _tiny_fixture(seed)

    def loss_fn(_ignored=None):
        branches = model.forward_window(window, frames)
        total = None
        for emotion, (logit, _alpha) in branches.items():
            target = 1.0 if emotion == "joy" else 0.0
            term = T.bce_with_logits(T.reshape(logit, ()), target)
            total = term if total is None else T.add(total, term)
        return total

    worst: dict[str, float] = {}
    for name, param in model.params.items():
        err = T.grad_check(loss_fn, param, eps)
        group = _group_of(name)
        worst[group] = max(worst.get(group, 0.0), err)
    return worst
