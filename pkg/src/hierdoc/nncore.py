"""From-scratch sequence-model numerics on numpy arrays.

LSTM forward and exact backward (BPTT), dense layers, numerically stable
softmax, clipped categorical cross-entropy, SGD/Adam, deterministic Glorot
initialization, and a central-difference gradient checker.

Training runs at float32 by default; gradient checking requires float64.
Batched operations take arrays with a leading batch axis; the single-vector
entry points mirror them for tests and small tools.

Parameter checkpoints use the PRM1 container (little-endian):

    header:  magic b"PRM1" | u32 version=1 | u64 tensor_count
    tensor:  u32 name_len | name UTF-8 | u32 rank | rank * u32 dims
             | float32 payload, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .rng import SplitMix64, bulk_symmetric

GATE_ORDER = ("input", "forget", "modulation", "output")

PRM1_MAGIC = b"PRM1"
PRM1_VERSION = 1


class CheckpointError(ValueError):
    """Invalid PRM1 container."""


# ---------------------------------------------------------------------------
# activations and loss
# ---------------------------------------------------------------------------


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids exp overflow at large |x| in float32.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis; rejects non-finite input."""
    z = np.asarray(z)
    if z.shape[-1] < 1:
        raise ValueError("softmax needs at least one logit")
    if not np.isfinite(z).all():
        raise ValueError("softmax input contains non-finite values")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _clip_bounds(dtype: np.dtype, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must be in (0, 0.5), got {eps}")
    lo = np.asarray(eps, dtype=dtype)
    hi = np.asarray(1.0, dtype=dtype) - np.asarray(eps, dtype=dtype)
    return lo, hi


def cross_entropy_clipped(
    probs: np.ndarray,
    target: Union[int, np.ndarray],
    eps: float = 1e-7,
) -> np.ndarray:
    """-ln of the target-class probability clamped into [eps, 1-eps].

    The clip bound is evaluated in the dtype of `probs`, so float32 inputs
    reproduce the single-precision loss floor -ln(1 - 2**-23).  Accepts a
    single distribution with an int target or a (B, k) batch with a (B,)
    target array; returns a scalar or per-sample losses accordingly.
    """
    probs = np.asarray(probs)
    lo, hi = _clip_bounds(probs.dtype, eps)
    if probs.ndim == 1:
        p = probs[int(target)]
    else:
        p = probs[np.arange(probs.shape[0]), np.asarray(target)]
    return -np.log(np.clip(p, lo, hi))


def cross_entropy_grad_logits(
    probs: np.ndarray, targets: np.ndarray, eps: float = 1e-7
) -> np.ndarray:
    """Gradient of summed clipped cross-entropy w.r.t. the logits that
    produced `probs` via softmax: (probs - onehot), with rows zeroed where
    the target probability sits in the clamped region."""
    probs = np.asarray(probs)
    targets = np.asarray(targets)
    lo, hi = _clip_bounds(probs.dtype, eps)
    batch = np.arange(probs.shape[0])
    p = probs[batch, targets]
    grad = probs.copy()
    grad[batch, targets] -= np.asarray(1.0, dtype=probs.dtype)
    flows = ((p > lo) & (p < hi)).astype(probs.dtype)
    return grad * flows[:, None]


# ---------------------------------------------------------------------------
# parameters and initialization
# ---------------------------------------------------------------------------


def glorot_uniform(
    shape: Tuple[int, ...],
    fan_in: int,
    fan_out: int,
    seed: int,
    dtype: np.dtype = np.float32,
) -> np.ndarray:
    """Uniform on +-sqrt(6 / (fan_in + fan_out)), drawn from splitmix64(seed)
    in row-major order; bit-identical for a fixed seed."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    size = int(np.prod(shape)) if shape else 1
    values = bulk_symmetric(seed, size) * limit
    return values.reshape(shape).astype(dtype)


@dataclass
class LstmParams:
    """Four-gate LSTM weights, stored gate-stacked for efficiency.

    ``w`` is (input_dim, 4*hidden), ``u`` is (hidden, 4*hidden), ``b`` is
    (4*hidden,), with gate blocks ordered input, forget, modulation, output.
    Per-gate views are available via :meth:`gate`.
    """

    w: np.ndarray
    u: np.ndarray
    b: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.u.shape[0]

    def gate(self, name: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_g, U_g, b_g) views for one of GATE_ORDER; W_g is (hidden, input)."""
        k = GATE_ORDER.index(name)
        h = self.hidden_dim
        sl = slice(k * h, (k + 1) * h)
        return self.w[:, sl].T, self.u[:, sl].T, self.b[sl]

    @classmethod
    def from_gates(
        cls,
        gates: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]],
        dtype: np.dtype = np.float64,
    ) -> "LstmParams":
        """Assemble from per-gate (W_g (hidden, input), U_g, b_g) arrays."""
        ws, us, bs = [], [], []
        for name in GATE_ORDER:
            w_g, u_g, b_g = gates[name]
            ws.append(np.asarray(w_g, dtype=dtype).T)
            us.append(np.asarray(u_g, dtype=dtype).T)
            bs.append(np.asarray(b_g, dtype=dtype))
        return cls(w=np.hstack(ws), u=np.hstack(us), b=np.concatenate(bs))


def init_lstm_params(
    input_dim: int,
    hidden_dim: int,
    seeds: Iterator[int],
    dtype: np.dtype = np.float32,
    forget_bias: float = 1.0,
) -> LstmParams:
    """Glorot-uniform gate weights; biases zero except the forget gate,
    initialized to `forget_bias` for trainability on long sequences."""
    w = glorot_uniform((input_dim, 4 * hidden_dim), input_dim, hidden_dim, next(seeds), dtype)
    u = glorot_uniform((hidden_dim, 4 * hidden_dim), hidden_dim, hidden_dim, next(seeds), dtype)
    b = np.zeros(4 * hidden_dim, dtype=dtype)
    b[hidden_dim : 2 * hidden_dim] = forget_bias
    return LstmParams(w=w, u=u, b=b)


@dataclass
class DenseParams:
    """Affine layer y = W x + b with an activation tag."""

    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "linear"  # linear | relu | softmax

    def __post_init__(self) -> None:
        if self.activation not in ("linear", "relu", "softmax"):
            raise ValueError(f"unknown activation {self.activation!r}")


def init_dense_params(
    in_dim: int,
    out_dim: int,
    seeds: Iterator[int],
    activation: str = "linear",
    dtype: np.dtype = np.float32,
) -> DenseParams:
    w = glorot_uniform((out_dim, in_dim), in_dim, out_dim, next(seeds), dtype)
    return DenseParams(w=w, b=np.zeros(out_dim, dtype=dtype), activation=activation)


def init_lookup_table(
    vocab_size: int, dim: int, seeds: Iterator[int], dtype: np.dtype = np.float32
) -> np.ndarray:
    return glorot_uniform((vocab_size, dim), vocab_size, dim, next(seeds), dtype)


# ---------------------------------------------------------------------------
# dense forward/backward
# ---------------------------------------------------------------------------


def dense_forward(x: np.ndarray, params: DenseParams) -> np.ndarray:
    """W x + b followed by the layer's activation; accepts (in,) or (B, in)."""
    x = np.asarray(x)
    if x.shape[-1] != params.w.shape[1]:
        raise ValueError(
            f"dense input dim {x.shape[-1]} != weight columns {params.w.shape[1]}"
        )
    y = x @ params.w.T + params.b
    if params.activation == "relu":
        return np.maximum(y, 0)
    if params.activation == "softmax":
        return softmax(y)
    return y


def dense_forward_batch(
    x: np.ndarray, params: DenseParams
) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Batched affine + linear/relu activation; returns (y, cache).

    The softmax head is handled jointly with the loss, not here.
    """
    if params.activation == "softmax":
        raise ValueError("softmax layers are differentiated jointly with the loss")
    pre = x @ params.w.T + params.b
    y = np.maximum(pre, 0) if params.activation == "relu" else pre
    return y, (x, pre)


def dense_backward_batch(
    dy: np.ndarray, cache: Tuple[np.ndarray, np.ndarray], params: DenseParams
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) for dense_forward_batch."""
    x, pre = cache
    if params.activation == "relu":
        dy = dy * (pre > 0)
    dw = dy.T @ x
    db = dy.sum(axis=0)
    dx = dy @ params.w
    return dx, dw, db


# ---------------------------------------------------------------------------
# LSTM forward/backward
# ---------------------------------------------------------------------------


@dataclass
class LstmStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


@dataclass
class LstmGrads:
    w: np.ndarray
    u: np.ndarray
    b: np.ndarray


def _lstm_step(
    x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmParams
) -> Tuple[np.ndarray, np.ndarray, LstmStepCache]:
    h_dim = params.hidden_dim
    a = x @ params.w + h_prev @ params.u + params.b
    i = sigmoid(a[:, :h_dim])
    f = sigmoid(a[:, h_dim : 2 * h_dim])
    g = np.tanh(a[:, 2 * h_dim : 3 * h_dim])
    o = sigmoid(a[:, 3 * h_dim :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, LstmStepCache(x, h_prev, c_prev, i, f, g, o, tanh_c)


def lstm_cell_forward(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    params: LstmParams,
) -> Tuple[np.ndarray, np.ndarray, LstmStepCache]:
    """One LSTM step on single vectors; returns (h_t, c_t, cache)."""
    x_t = np.asarray(x_t)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    if x_t.shape != (params.input_dim,):
        raise ValueError(f"x_t shape {x_t.shape} != ({params.input_dim},)")
    if h_prev.shape != (params.hidden_dim,) or c_prev.shape != (params.hidden_dim,):
        raise ValueError("state shapes do not match hidden_dim")
    for name, arr in (("x_t", x_t), ("h_prev", h_prev), ("c_prev", c_prev)):
        if not np.isfinite(arr).all():
            raise ValueError(f"{name} contains non-finite values")
    h, c, cache = _lstm_step(x_t[None, :], h_prev[None, :], c_prev[None, :], params)
    return h[0], c[0], cache


def lstm_forward(
    xs: np.ndarray, params: LstmParams
) -> Tuple[np.ndarray, List[LstmStepCache]]:
    """Run a full sequence batch; xs is (B, T, input), returns all hidden
    states (B, T, hidden) and the tape for backward.  h_0 = c_0 = 0."""
    xs = np.asarray(xs, dtype=params.w.dtype)
    if xs.ndim != 3:
        raise ValueError(f"expected (B, T, input) input, got shape {xs.shape}")
    batch, steps, _ = xs.shape
    if steps < 1:
        raise ValueError("empty sequence")
    h = np.zeros((batch, params.hidden_dim), dtype=params.w.dtype)
    c = np.zeros_like(h)
    hs = np.empty((batch, steps, params.hidden_dim), dtype=params.w.dtype)
    tape: List[LstmStepCache] = []
    for t in range(steps):
        h, c, cache = _lstm_step(xs[:, t, :], h, c, params)
        hs[:, t, :] = h
        tape.append(cache)
    return hs, tape


def lstm_backward(
    d_hs: np.ndarray, tape: Sequence[LstmStepCache], params: LstmParams
) -> Tuple[np.ndarray, LstmGrads]:
    """Exact BPTT.  d_hs is (B, T, hidden): the loss gradient w.r.t. every
    emitted hidden state (zeros except the last step for many-to-one use).
    Returns (d_xs, parameter gradients)."""
    steps = len(tape)
    h_dim = params.hidden_dim
    dtype = params.w.dtype
    batch = d_hs.shape[0]

    dw = np.zeros_like(params.w)
    du = np.zeros_like(params.u)
    db = np.zeros_like(params.b)
    d_xs = np.empty((batch, steps, params.input_dim), dtype=dtype)

    dh_next = np.zeros((batch, h_dim), dtype=dtype)
    dc_next = np.zeros((batch, h_dim), dtype=dtype)
    one = np.asarray(1.0, dtype=dtype)
    for t in range(steps - 1, -1, -1):
        cache = tape[t]
        dh = d_hs[:, t, :] + dh_next
        do = dh * cache.tanh_c
        dc = dc_next + dh * cache.o * (one - cache.tanh_c * cache.tanh_c)
        di = dc * cache.g
        df = dc * cache.c_prev
        dg = dc * cache.i
        dc_next = dc * cache.f

        da = np.empty((batch, 4 * h_dim), dtype=dtype)
        da[:, :h_dim] = di * cache.i * (one - cache.i)
        da[:, h_dim : 2 * h_dim] = df * cache.f * (one - cache.f)
        da[:, 2 * h_dim : 3 * h_dim] = dg * (one - cache.g * cache.g)
        da[:, 3 * h_dim :] = do * cache.o * (one - cache.o)

        dw += cache.x.T @ da
        du += cache.h_prev.T @ da
        db += da.sum(axis=0)
        d_xs[:, t, :] = da @ params.w.T
        dh_next = da @ params.u.T
    return d_xs, LstmGrads(w=dw, u=du, b=db)


def lstm_sequence_forward(
    xs: np.ndarray, params: LstmParams, mode: str = "many_to_many"
) -> np.ndarray:
    """Run one sequence (T, input) from zero state.

    many_to_many returns all hidden states (T, hidden); many_to_one returns
    only the final hidden state (hidden,).
    """
    if mode not in ("many_to_many", "many_to_one"):
        raise ValueError(f"unknown mode {mode!r}")
    xs = np.asarray(xs)
    if xs.ndim != 2:
        raise ValueError(f"expected (T, input) input, got shape {xs.shape}")
    if xs.shape[0] < 1:
        raise ValueError("empty sequence")
    hs, _ = lstm_forward(xs[None, :, :], params)
    return hs[0, -1, :] if mode == "many_to_one" else hs[0]


def bilstm_sequence_forward(
    xs: np.ndarray, fwd_params: LstmParams, bwd_params: LstmParams
) -> np.ndarray:
    """Concat of the forward pass final hidden state and the final hidden
    state of a backward pass over the reversed sequence; (2*hidden,)."""
    fwd = lstm_sequence_forward(xs, fwd_params, "many_to_one")
    bwd = lstm_sequence_forward(np.asarray(xs)[::-1], bwd_params, "many_to_one")
    return np.concatenate([fwd, bwd])


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

Tensors = Dict[str, np.ndarray]


@dataclass
class SgdOptimizer:
    """Plain SGD: p <- p - lr * g, in place."""

    learning_rate: float = 0.01

    def step(self, params: Tensors, grads: Tensors) -> None:
        _check_grads(params, grads)
        for name, p in params.items():
            p -= self.learning_rate * grads[name]


@dataclass
class AdamOptimizer:
    """Adam with bias correction; moments live in the parameter dtype."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Tensors = field(default_factory=dict)
    v: Tensors = field(default_factory=dict)

    def step(self, params: Tensors, grads: Tensors) -> None:
        _check_grads(params, grads)
        if not self.m:
            for name, p in params.items():
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _check_grads(params: Tensors, grads: Tensors) -> None:
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ValueError(f"missing gradient for {name!r}")
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}"
            )
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for {name!r}")


def clip_global_norm(grads: Tensors, max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = np.asarray(max_norm / norm)
        for g in grads.values():
            g *= scale.astype(g.dtype)
    return norm


def make_optimizer(kind: str, learning_rate: float, **kwargs):
    if kind == "sgd":
        return SgdOptimizer(learning_rate=learning_rate)
    if kind == "adam":
        return AdamOptimizer(learning_rate=learning_rate, **kwargs)
    raise ValueError(f"unknown optimizer kind {kind!r}")


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Central-difference comparison per parameter tensor."""

    per_tensor: Dict[str, float]
    max_error: float
    worst: Tuple[str, int, float, float]  # tensor, flat index, analytic, numeric
    coords_checked: int

    def ok(self, threshold: float = 1e-4) -> bool:
        return self.max_error < threshold


def grad_check(
    loss_fn: Callable[[], float],
    tensors: Tensors,
    analytic: Tensors,
    n_coords: int = 200,
    seed: int = 0,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences on a
    seeded subsample of at least `n_coords` coordinates (all coordinates if
    the model is smaller).

    `loss_fn` must recompute the scalar loss from the current tensor values;
    tensors are perturbed in place and restored.  Relative error per
    coordinate is |a - n| / max(|a|, |n|, 1e-8).  Requires float64 tensors.
    """
    names = list(tensors)
    for name in names:
        if tensors[name].dtype != np.float64:
            raise ValueError(f"grad_check requires float64 tensors; {name!r} is "
                             f"{tensors[name].dtype}")
    sizes = [tensors[name].size for name in names]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])

    if total <= n_coords:
        chosen = list(range(total))
    else:
        rng = SplitMix64(seed)
        picked: set = set()
        while len(picked) < n_coords:
            picked.add(rng.next_below(total))
        chosen = sorted(picked)

    per_tensor = {name: 0.0 for name in names}
    max_error = 0.0
    worst = (names[0] if names else "", 0, 0.0, 0.0)
    for flat in chosen:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[k]
        idx = flat - int(offsets[k])
        tensor = tensors[name]
        orig = tensor.flat[idx]
        tensor.flat[idx] = orig + step
        loss_plus = loss_fn()
        tensor.flat[idx] = orig - step
        loss_minus = loss_fn()
        tensor.flat[idx] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        a = float(analytic[name].flat[idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        if err > per_tensor[name]:
            per_tensor[name] = err
        if err > max_error:
            max_error = err
            worst = (name, idx, a, numeric)
    return GradCheckReport(
        per_tensor=per_tensor,
        max_error=max_error,
        worst=worst,
        coords_checked=len(chosen),
    )


# ---------------------------------------------------------------------------
# PRM1 checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: Union[str, Path], tensors: Tensors) -> None:
    """Write named tensors as a PRM1 file (float32 payloads)."""
    with open(path, "wb") as fh:
        fh.write(PRM1_MAGIC)
        fh.write(struct.pack("<IQ", PRM1_VERSION, len(tensors)))
        for name, tensor in tensors.items():
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", tensor.ndim))
            for d in tensor.shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path: Union[str, Path]) -> Tensors:
    """Read a PRM1 file back into {name: float32 array}, preserving order."""
    with open(path, "rb") as fh:
        data = fh.read()

    def take(n: int, offset: int) -> Tuple[bytes, int]:
        if offset + n > len(data):
            raise CheckpointError("truncated PRM1 file")
        return data[offset : offset + n], offset + n

    magic, off = take(4, 0)
    if magic != PRM1_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {PRM1_MAGIC!r}")
    raw, off = take(12, off)
    version, count = struct.unpack("<IQ", raw)
    if version != PRM1_VERSION:
        raise CheckpointError(f"unsupported PRM1 version {version}")

    tensors: Tensors = {}
    for _ in range(count):
        raw, off = take(4, off)
        (name_len,) = struct.unpack("<I", raw)
        raw, off = take(name_len, off)
        name = raw.decode("utf-8")
        raw, off = take(4, off)
        (rank,) = struct.unpack("<I", raw)
        raw, off = take(4 * rank, off)
        shape = struct.unpack(f"<{rank}I", raw) if rank else ()
        size = int(np.prod(shape)) if shape else 1
        raw, off = take(4 * size, off)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes after last tensor")
    return tensors
