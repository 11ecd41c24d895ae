"""The rescoring network: sequence encoder, self-attention, regressor.

The encoder is a bidirectional stacked GRU (or, as an ablation, a per-row
affine map with ReLU) producing one hidden vector per detection. Parameter-
free self-attention then summarizes the whole sequence per row: alignment is
the dot product of hidden vectors scaled by the square root of the unpadded
sequence length, softmax-normalized over valid positions only. The regressor
maps the concatenated hidden and context vectors through one ReLU layer to a
sigmoid output in (0, 1).

Everything runs in float64 with explicit reverse-mode gradients; the forward
pass records the intermediate values the backward pass consumes. Training
minimizes the summed squared error between predicted and target scores over
the valid prefix of each sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import MAX_SEQ_LEN, FeatureSequence, feature_dim

__all__ = [
    "ENCODERS",
    "REGRESSOR_HIDDEN",
    "ModelConfig",
    "ForwardTrace",
    "param_shapes",
    "init_params",
    "zero_grads",
    "count_params",
    "encode_sequence",
    "attention",
    "regressor_forward",
    "forward",
    "sequence_loss",
    "backward",
    "loss_and_grads",
]

ENCODERS = ("gru", "linear")

# Width of the regressor's hidden layer, fixed by the architecture.
REGRESSOR_HIDDEN = 80

_GATES = ("update", "reset", "cand")
_DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; ``seed`` drives parameter initialization."""

    hidden_size: int = 256
    num_layers: int = 3
    encoder: str = "gru"
    num_classes: int = 80
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")

    @property
    def input_dim(self) -> int:
        return feature_dim(self.num_classes)

    @property
    def state_dim(self) -> int:
        return 2 * self.hidden_size


def param_shapes(config: ModelConfig) -> dict:
    """Named tensor shapes, in the fixed construction order used everywhere."""
    shapes: dict[str, tuple] = {}
    n_h = config.hidden_size
    if config.encoder == "gru":
        for layer in range(config.num_layers):
            in_dim = config.input_dim if layer == 0 else config.state_dim
            for direction in _DIRECTIONS:
                prefix = f"gru.l{layer}.{direction}."
                for gate in _GATES:
                    shapes[prefix + f"w_{gate}"] = (n_h, in_dim)
                    shapes[prefix + f"u_{gate}"] = (n_h, n_h)
                    shapes[prefix + f"b_{gate}"] = (n_h,)
    else:
        shapes["enc.weight"] = (config.state_dim, config.input_dim)
        shapes["enc.bias"] = (config.state_dim,)
    shapes["reg.w1"] = (REGRESSOR_HIDDEN, 2 * config.state_dim)
    shapes["reg.b1"] = (REGRESSOR_HIDDEN,)
    shapes["reg.w2"] = (1, REGRESSOR_HIDDEN)
    shapes["reg.b2"] = (1,)
    return shapes


def _is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


def init_params(config: ModelConfig) -> dict:
    """Seeded init: weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if _is_bias(name):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_out, fan_in = shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_grads(config: ModelConfig) -> dict:
    return {name: np.zeros(shape, dtype=np.float64) for name, shape in param_shapes(config).items()}


def count_params(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class _GruDirTrace:
    """One direction of one layer, in iteration order (already reversed for bwd)."""

    x: np.ndarray  # (L, in_dim)
    z: np.ndarray  # (L, n_h) update gate
    r: np.ndarray  # (L, n_h) reset gate
    n: np.ndarray  # (L, n_h) candidate
    h: np.ndarray  # (L, n_h) hidden output


@dataclass
class ForwardTrace:
    """Every intermediate the backward pass needs, plus padded outputs."""

    valid_len: int
    x_valid: np.ndarray | None = None  # (L, input_dim) encoder input
    layer_inputs: list = field(default_factory=list)  # per GRU layer, (L, in_dim)
    gru_layers: list = field(default_factory=list)  # per layer, (fwd, bwd) _GruDirTrace
    enc_pre: np.ndarray | None = None  # linear encoder pre-activation, (L, 2*n_h)
    hidden: np.ndarray | None = None  # (MAX_SEQ_LEN, 2*n_h)
    alpha: np.ndarray | None = None  # (MAX_SEQ_LEN, MAX_SEQ_LEN)
    context: np.ndarray | None = None  # (MAX_SEQ_LEN, 2*n_h)
    reg_in: np.ndarray | None = None  # (L, 4*n_h)
    reg_a1: np.ndarray | None = None  # (L, REGRESSOR_HIDDEN)
    reg_u1: np.ndarray | None = None  # (L, REGRESSOR_HIDDEN)
    y_hat: np.ndarray | None = None  # (MAX_SEQ_LEN,)


def _gru_direction_forward(x_seq, params, prefix) -> _GruDirTrace:
    wz, uz, bz = params[prefix + "w_update"], params[prefix + "u_update"], params[prefix + "b_update"]
    wr, ur, br = params[prefix + "w_reset"], params[prefix + "u_reset"], params[prefix + "b_reset"]
    wn, un, bn = params[prefix + "w_cand"], params[prefix + "u_cand"], params[prefix + "b_cand"]
    L = x_seq.shape[0]
    n_h = bz.shape[0]
    z_a = np.zeros((L, n_h))
    r_a = np.zeros((L, n_h))
    n_a = np.zeros((L, n_h))
    h_a = np.zeros((L, n_h))
    h = np.zeros(n_h)
    for t in range(L):
        xt = x_seq[t]
        z = _sigmoid(wz @ xt + uz @ h + bz)
        r = _sigmoid(wr @ xt + ur @ h + br)
        n = np.tanh(wn @ xt + un @ (r * h) + bn)
        h = z * h + (1.0 - z) * n
        z_a[t], r_a[t], n_a[t], h_a[t] = z, r, n, h
    return _GruDirTrace(x=x_seq, z=z_a, r=r_a, n=n_a, h=h_a)


def _gru_direction_backward(trace: _GruDirTrace, params, prefix, d_h_out, grads) -> np.ndarray:
    """Backprop through one direction; returns gradient w.r.t. its inputs."""
    wz, uz = params[prefix + "w_update"], params[prefix + "u_update"]
    wr, ur = params[prefix + "w_reset"], params[prefix + "u_reset"]
    wn, un = params[prefix + "w_cand"], params[prefix + "u_cand"]
    L, n_h = trace.h.shape
    dx = np.zeros_like(trace.x)
    carry = np.zeros(n_h)
    for t in range(L - 1, -1, -1):
        h_prev = trace.h[t - 1] if t > 0 else np.zeros(n_h)
        z, r, n = trace.z[t], trace.r[t], trace.n[t]
        delta = d_h_out[t] + carry
        dz = delta * (h_prev - n)
        daz = dz * z * (1.0 - z)
        dn = delta * (1.0 - z)
        dan = dn * (1.0 - n * n)
        dq = un.T @ dan  # q = r * h_prev
        dr = dq * h_prev
        dar = dr * r * (1.0 - r)
        carry = delta * z + uz.T @ daz + ur.T @ dar + dq * r
        xt = trace.x[t]
        grads[prefix + "w_update"] += np.outer(daz, xt)
        grads[prefix + "u_update"] += np.outer(daz, h_prev)
        grads[prefix + "b_update"] += daz
        grads[prefix + "w_reset"] += np.outer(dar, xt)
        grads[prefix + "u_reset"] += np.outer(dar, h_prev)
        grads[prefix + "b_reset"] += dar
        grads[prefix + "w_cand"] += np.outer(dan, xt)
        grads[prefix + "u_cand"] += np.outer(dan, r * h_prev)
        grads[prefix + "b_cand"] += dan
        dx[t] = wz.T @ daz + wr.T @ dar + wn.T @ dan
    return dx


def _encode_valid(x_valid, params, config, trace: ForwardTrace) -> np.ndarray:
    """Hidden states for the valid prefix, recording encoder internals."""
    trace.x_valid = x_valid
    if config.encoder == "linear":
        pre = x_valid @ params["enc.weight"].T + params["enc.bias"]
        trace.enc_pre = pre
        return np.maximum(pre, 0.0)
    layer_in = x_valid
    h_out = None
    for layer in range(config.num_layers):
        trace.layer_inputs.append(layer_in)
        fwd = _gru_direction_forward(layer_in, params, f"gru.l{layer}.fwd.")
        bwd = _gru_direction_forward(layer_in[::-1], params, f"gru.l{layer}.bwd.")
        trace.gru_layers.append((fwd, bwd))
        h_out = np.concatenate([fwd.h, bwd.h[::-1]], axis=1)
        layer_in = h_out
    return h_out


def _attend_valid(h_valid) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product self-attention over the valid prefix.

    The scale divisor is the square root of the unpadded sequence length.
    Rows of the weight matrix sum to 1.
    """
    L = h_valid.shape[0]
    scores = (h_valid @ h_valid.T) / math.sqrt(L)
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    alpha = e / e.sum(axis=1, keepdims=True)
    return alpha @ h_valid, alpha


def encode_sequence(seq: FeatureSequence, params, config: ModelConfig) -> np.ndarray:
    """Padded hidden-state matrix ``(MAX_SEQ_LEN, 2*hidden_size)``; zero rows past ``valid_len``."""
    out = np.zeros((MAX_SEQ_LEN, config.state_dim))
    if seq.valid_len > 0:
        trace = ForwardTrace(valid_len=seq.valid_len)
        out[: seq.valid_len] = _encode_valid(seq.features[: seq.valid_len], params, config, trace)
    return out


def attention(hidden, valid_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Padded context vectors and attention weights for precomputed hidden states.

    Padding rows and columns carry exactly zero weight; with ``valid_len`` 0
    no softmax is evaluated and everything is zero.
    """
    context = np.zeros_like(hidden)
    alpha = np.zeros((hidden.shape[0], hidden.shape[0]))
    if valid_len > 0:
        c_valid, a_valid = _attend_valid(hidden[:valid_len])
        context[:valid_len] = c_valid
        alpha[:valid_len, :valid_len] = a_valid
    return context, alpha


def _regress_valid(h_valid, c_valid, params, trace: ForwardTrace) -> np.ndarray:
    z = np.concatenate([h_valid, c_valid], axis=1)
    a1 = z @ params["reg.w1"].T + params["reg.b1"]
    u1 = np.maximum(a1, 0.0)
    a2 = u1 @ params["reg.w2"].T + params["reg.b2"]
    y = _sigmoid(a2[:, 0])
    # Keep outputs in the open interval even at saturation.
    y = np.clip(y, 5e-324, 1.0 - 2.3e-16)
    trace.reg_in, trace.reg_a1, trace.reg_u1 = z, a1, u1
    return y


def regressor_forward(hidden, context, valid_len: int, params) -> np.ndarray:
    """Padded per-row scores in (0, 1); padding rows output 0."""
    out = np.zeros(hidden.shape[0])
    if valid_len > 0:
        out[:valid_len] = _regress_valid(
            hidden[:valid_len], context[:valid_len], params, ForwardTrace(valid_len=valid_len)
        )
    return out


def forward(seq: FeatureSequence, params, config: ModelConfig) -> ForwardTrace:
    """Full forward pass, recording the trace the backward pass consumes."""
    L = seq.valid_len
    trace = ForwardTrace(valid_len=L)
    trace.hidden = np.zeros((MAX_SEQ_LEN, config.state_dim))
    trace.context = np.zeros((MAX_SEQ_LEN, config.state_dim))
    trace.alpha = np.zeros((MAX_SEQ_LEN, MAX_SEQ_LEN))
    trace.y_hat = np.zeros(MAX_SEQ_LEN)
    if L == 0:
        return trace
    h_valid = _encode_valid(seq.features[:L], params, config, trace)
    c_valid, a_valid = _attend_valid(h_valid)
    trace.hidden[:L] = h_valid
    trace.context[:L] = c_valid
    trace.alpha[:L, :L] = a_valid
    trace.y_hat[:L] = _regress_valid(h_valid, c_valid, params, trace)
    return trace


def sequence_loss(y_hat, targets, valid_len: int) -> float:
    """Summed squared error over the valid prefix; padding contributes nothing."""
    d = np.asarray(y_hat)[:valid_len] - np.asarray(targets)[:valid_len]
    return float(d @ d)


def backward(trace: ForwardTrace, params, config: ModelConfig, targets) -> dict:
    """Exact gradients of the sequence loss w.r.t. every parameter."""
    grads = zero_grads(config)
    L = trace.valid_len
    if L == 0:
        return grads
    y = trace.y_hat[:L]
    d_y = 2.0 * (y - np.asarray(targets)[:L])

    # Regressor.
    d_a2 = (d_y * y * (1.0 - y))[:, None]
    grads["reg.w2"] += d_a2.T @ trace.reg_u1
    grads["reg.b2"] += d_a2.sum(axis=0)
    d_u1 = d_a2 @ params["reg.w2"]
    d_a1 = d_u1 * (trace.reg_a1 > 0.0)
    grads["reg.w1"] += d_a1.T @ trace.reg_in
    grads["reg.b1"] += d_a1.sum(axis=0)
    d_z = d_a1 @ params["reg.w1"]
    d_h = d_z[:, : config.state_dim].copy()
    d_c = d_z[:, config.state_dim :]

    # Attention: context = alpha @ hidden, alpha = softmax(hidden hidden^T / sqrt(L)).
    h_valid = trace.hidden[:L]
    alpha = trace.alpha[:L, :L]
    d_alpha = d_c @ h_valid.T
    d_h += alpha.T @ d_c
    d_scores = (d_alpha - (d_alpha * alpha).sum(axis=1, keepdims=True)) * alpha
    d_h += (d_scores @ h_valid + d_scores.T @ h_valid) / math.sqrt(L)

    # Encoder.
    if config.encoder == "linear":
        d_pre = d_h * (trace.enc_pre > 0.0)
        grads["enc.weight"] += d_pre.T @ trace.x_valid
        grads["enc.bias"] += d_pre.sum(axis=0)
        return grads
    n_h = config.hidden_size
    d_layer = d_h
    for layer in range(config.num_layers - 1, -1, -1):
        fwd, bwd = trace.gru_layers[layer]
        dx_f = _gru_direction_backward(fwd, params, f"gru.l{layer}.fwd.", d_layer[:, :n_h], grads)
        dx_b = _gru_direction_backward(
            bwd, params, f"gru.l{layer}.bwd.", d_layer[::-1, n_h:], grads
        )
        d_layer = dx_f + dx_b[::-1]
    return grads


def loss_and_grads(seq: FeatureSequence, targets, params, config: ModelConfig):
    """Convenience wrapper: forward, loss, backward in one call."""
    trace = forward(seq, params, config)
    loss = sequence_loss(trace.y_hat, targets, seq.valid_len)
    grads = backward(trace, params, config, targets)
    return loss, grads, trace
