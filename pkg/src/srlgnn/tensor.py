"""Minimal dense-tensor numerics with reverse-mode autodiff and Adam.

Tensors wrap contiguous numpy arrays (float32 by default, float64 for
gradient checking). Ops record onto the currently active Tape; backward
replays the tape in strict reverse execution order, accumulating gradient
contributions with += into per-tensor slots held by the tape.
"""
from __future__ import annotations

import json
import math
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class Tensor:
    __slots__ = ("data", "requires_grad", "_tracked")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim > 0:  # ascontiguousarray would promote 0-d to 1-d
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor holds non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self._tracked = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Records ops during forward; replays them in reverse for gradients."""

    def __init__(self):
        self._records: list[tuple[Tensor, Callable]] = []
        self._grads: dict[int, np.ndarray] = {}
        self._keepalive: list[Tensor] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def _accumulate(self, t: Tensor, g: np.ndarray):
        slot = self._grads.get(id(t))
        if slot is None:
            self._grads[id(t)] = np.array(g, dtype=t.dtype, copy=True)
            self._keepalive.append(t)
        else:
            slot += g

    def backward(self, loss: Tensor):
        """Populate gradient slots for everything `loss` depends on."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._grads[id(loss)] = np.ones_like(loss.data)
        self._keepalive.append(loss)
        for out, back_fn in reversed(self._records):
            g = self._grads.get(id(out))
            if g is not None:
                back_fn(g)

    def grad(self, t: Tensor) -> np.ndarray | None:
        return self._grads.get(id(t))


def _result(data: np.ndarray, parents: Sequence[Tensor], grad_fn) -> Tensor:
    """Wrap an op result; register the backward closure if a tape is live.

    grad_fn(g) returns one gradient array (or None) per parent.
    """
    out = Tensor(data)
    tape = _ACTIVE_TAPE
    if tape is not None and any(p._tracked for p in parents):
        out._tracked = True

        def back(g, _tape=tape, _parents=tuple(parents), _fn=grad_fn):
            for p, pg in zip(_parents, _fn(g)):
                if pg is not None and p._tracked:
                    _tape._accumulate(p, pg)

        tape._records.append((out, back))
    return out


def _as_const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D only, got {a.shape} @ {b.shape}")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim >= 1 else None):
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

    def grad_fn(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad  # 1-D @ 1-D -> scalar

    return _result(ad @ bd, (a, b), grad_fn)


def _broadcast_ok(x: np.ndarray, y: np.ndarray) -> bool:
    # only exact match or a (d,) vector against (n, d) rows
    if x.shape == y.shape:
        return True
    if x.ndim == 2 and y.ndim == 1 and x.shape[1] == y.shape[0]:
        return True
    if y.ndim == 2 and x.ndim == 1 and y.shape[1] == x.shape[0]:
        return True
    return False


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=0)


def add(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcast_ok(a.data, b.data):
        raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")

    def grad_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(a.data + b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcast_ok(a.data, b.data):
        raise ShapeError(f"mul shapes incompatible: {a.shape} * {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _result(ad * bd, (a, b), grad_fn)


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a / b; b may be same-shape or a scalar tensor."""
    ad, bd = a.data, b.data
    if not (ad.shape == bd.shape or bd.size == 1):
        raise ShapeError(f"div shapes incompatible: {a.shape} / {b.shape}")

    def grad_fn(g):
        ga = g / bd
        gb = -(g * ad) / (bd * bd)
        if bd.size == 1 and bd.shape != ad.shape:
            gb = np.asarray(gb.sum()).reshape(bd.shape)
        return ga, gb

    return _result(ad / bd, (a, b), grad_fn)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    nd = parts[0].ndim
    if any(p.ndim != nd for p in parts):
        raise ShapeError(f"concat rank mismatch: {[p.shape for p in parts]}")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return _result(np.concatenate([p.data for p in parts], axis=axis), parts, grad_fn)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a 2-D tensor; backward scatter-adds."""
    if a.ndim != 2:
        raise ShapeError(f"gather_rows needs a matrix, got {a.shape}")
    idx = np.asarray(idx, dtype=np.intp)

    def grad_fn(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _result(a.data[idx], (a,), grad_fn)


def row_mean(a: Tensor) -> Tensor:
    """Mean over rows of a matrix -> vector."""
    if a.ndim != 2:
        raise ShapeError(f"row_mean needs a matrix, got {a.shape}")
    n = a.data.shape[0]

    def grad_fn(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _result(a.data.mean(axis=0), (a,), grad_fn)


def sum_all(a: Tensor) -> Tensor:
    def grad_fn(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _result(np.asarray(a.data.sum(), dtype=a.dtype), (a,), grad_fn)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def grad_fn(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _result(np.asarray(a.data.mean(), dtype=a.dtype), (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # gradient at exactly 0 is defined as 0
    return _result(np.maximum(a.data, 0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_np(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _result(out, (a,), grad_fn)


def bce_with_logits(logit: Tensor, target) -> Tensor:
    """Elementwise binary cross-entropy on logits; target in {0, 1}."""
    t = np.asarray(target, dtype=logit.dtype)
    if t.shape not in (logit.shape, ()):
        raise ShapeError(f"bce target shape {t.shape} vs logit {logit.shape}")
    x = logit.data
    loss = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))

    def grad_fn(g):
        return (g * (_sigmoid_np(x) - t),)

    return _result(loss, (logit,), grad_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale/shift by gain/bias vectors."""
    if x.ndim != 2 or gain.ndim != 1 or bias.ndim != 1:
        raise ShapeError(
            f"layer_norm expects (n,d), (d,), (d,): {x.shape}, {gain.shape}, {bias.shape}"
        )
    if x.shape[1] != gain.shape[0] or gain.shape != bias.shape:
        raise ShapeError(f"layer_norm dims differ: {x.shape} vs {gain.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def grad_fn(g):
        d = x.shape[1]
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _result(xhat * gain.data + bias.data, (x, gain, bias), grad_fn)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4
) -> float:
    """Max relative error between tape gradient and central differences.

    Requires f scalar-valued and x at 64-bit precision.
    """
    if x.dtype != np.float64:
        raise ValueError("grad_check requires float64 input")
    with Tape() as tape:
        y = f(x)
        tape.backward(y)
    g = tape.grad(x)
    if g is None:
        g = np.zeros_like(x.data)

    num = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = num.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x).item()
        flat[i] = orig - eps
        lo = f(x).item()
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * eps)

    denom = np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-8)
    return float(np.max(np.abs(g - num) / denom))


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    """Per-parameter moment accumulators plus the shared step counter."""

    def __init__(self, params: dict[str, Tensor], lr: float = 5e-6,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None],
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place. Missing grads count as zero."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} vs param {p.data.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


# ---------------------------------------------------------------------------
# parameter init and checkpoint I/O


def init_matrix(rng: np.random.Generator, fan_in: int, shape, dtype=np.float32,
                requires_grad: bool = True) -> Tensor:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=requires_grad)


def save_checkpoint(path, params: dict[str, Tensor], precision: str = "f32") -> None:
    """JSON header line followed by raw little-endian values in header order."""
    if precision not in DTYPES:
        raise ValueError(f"unknown precision {precision!r}")
    wire = "<f4" if precision == "f32" else "<f8"
    names = list(params)
    header = {
        "version": 1,
        "precision": precision,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(params[n].data, dtype=wire).tobytes())


def load_checkpoint(path) -> tuple[dict[str, Tensor], str]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        precision = header["precision"]
        wire = np.dtype("<f4" if precision == "f32" else "<f8")
        params: dict[str, Tensor] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * wire.itemsize)
            if len(raw) != count * wire.itemsize:
                raise ValueError(f"checkpoint truncated at param {entry['name']!r}")
            data = np.frombuffer(raw, dtype=wire).reshape(shape)
            params[entry["name"]] = Tensor(
                data.astype(DTYPES[precision]), requires_grad=True
            )
    return params, precision
