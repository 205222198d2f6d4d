"""Layer primitives: linear, batchnorm, dropout, LSTM cells and sequences.

The LSTM comes in two forms.  lstm_cell composes taped primitives and is
the reference single-step implementation; lstm_sequence runs a whole
direction as one fused tape node with backpropagation-through-time inside
the node, which keeps tapes short and training fast.  The two are tied
together by an equivalence test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .tensor import (
    Tensor,
    add,
    concat_cols,
    matmul,
    mul,
    record,
    relu,
    reshape,
    reverse_rows,
    sigmoid,
    slice_cols,
    tanh,
)

__all__ = [
    "linear_forward",
    "elementwise_activation",
    "RunningStats",
    "batchnorm_forward",
    "dropout",
    "LSTMParams",
    "lstm_cell",
    "lstm_sequence",
    "bilstm_forward",
    "init_linear",
    "BN_EPS",
]

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def init_linear(d_in: int, d_out: int, rng) -> tuple[Tensor, Tensor]:
    """Weight uniform(-1/sqrt(d_in), 1/sqrt(d_in)), zero bias."""
    bound = 1.0 / np.sqrt(d_in)
    w = Tensor(rng.uniform(-bound, bound, size=(d_in, d_out)))
    b = Tensor(np.zeros(d_out))
    return w, b


def linear_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = xW + b for a batch of row vectors."""
    return add(matmul(x, w), b)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise_activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(
            f"unknown activation {kind!r}, expected one of {sorted(_ACTIVATIONS)}"
        ) from None
    return fn(x)


@dataclass
class RunningStats:
    """Exponential moving averages of per-column batch statistics."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def create(cls, d: int) -> "RunningStats":
        return cls(mean=np.zeros(d), var=np.ones(d))

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy())


def batchnorm_forward(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mode: str,
    stats: RunningStats,
) -> Tensor:
    """Column-wise batch normalization over the row axis.

    Train mode normalizes by the batch mean and biased variance (with the
    epsilon floor handling constant columns and n == 1) and folds the batch
    statistics into the running stats.  Eval mode normalizes by the running
    stats and touches nothing.
    """
    if x.data.ndim != 2:
        raise DimensionError(f"batchnorm: need a matrix, got shape {x.data.shape}")
    n, d = x.data.shape
    if n == 0:
        raise ContractError("batchnorm: empty batch")
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise DimensionError(
            f"batchnorm: gamma/beta shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match {d} columns"
        )
    if mode == "train":
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        stats.mean = BN_MOMENTUM * stats.mean + (1.0 - BN_MOMENTUM) * mu
        stats.var = BN_MOMENTUM * stats.var + (1.0 - BN_MOMENTUM) * var
    elif mode == "eval":
        mu = stats.mean
        var = stats.var
    else:
        raise ConfigError(f"batchnorm: unknown mode {mode!r}")

    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x.data - mu) * inv
    out = Tensor(gamma.data * xhat + beta.data)

    if mode == "train":

        def bwd(g):
            dgamma = (g * xhat).sum(axis=0)
            dbeta = g.sum(axis=0)
            dxhat = g * gamma.data
            dx = (inv / n) * (
                n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
            )
            return [dx, dgamma, dbeta]

    else:

        def bwd(g):
            dgamma = (g * xhat).sum(axis=0)
            dbeta = g.sum(axis=0)
            return [g * (gamma.data * inv), dgamma, dbeta]

    record(out, (x, gamma, beta), bwd)
    return out


def dropout(x: Tensor, p: float, train: bool, rng=None) -> Tensor:
    """Inverted dropout: zero units with probability p, scale by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout: train mode needs an rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask)
    record(out, (x,), lambda g: [g * mask])
    return out


@dataclass
class LSTMParams:
    """Fused gate weights, gate order [input, forget, cell, output]."""

    w_x: Tensor
    w_h: Tensor
    b: Tensor

    @classmethod
    def create(cls, d_in: int, d_h: int, rng) -> "LSTMParams":
        bx = 1.0 / np.sqrt(d_in)
        bh = 1.0 / np.sqrt(d_h)
        b = np.zeros(4 * d_h)
        b[d_h : 2 * d_h] = 1.0  # forget-gate bias
        return cls(
            w_x=Tensor(rng.uniform(-bx, bx, size=(d_in, 4 * d_h))),
            w_h=Tensor(rng.uniform(-bh, bh, size=(d_h, 4 * d_h))),
            b=Tensor(b),
        )

    @property
    def d_h(self) -> int:
        return self.w_h.data.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_x.data.shape[0]


def lstm_cell(
    x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LSTMParams
) -> tuple[Tensor, Tensor]:
    """One LSTM step on 1-d state vectors, composed from taped primitives."""
    d_h = params.d_h
    if x_t.data.shape != (params.d_in,):
        raise DimensionError(
            f"lstm_cell: input shape {x_t.data.shape} does not match d_in {params.d_in}"
        )
    if h_prev.data.shape != (d_h,) or c_prev.data.shape != (d_h,):
        raise DimensionError(
            f"lstm_cell: state shapes {h_prev.data.shape}/{c_prev.data.shape} "
            f"do not match d_h {d_h}"
        )
    xr = reshape(x_t, (1, params.d_in))
    hr = reshape(h_prev, (1, d_h))
    cr = reshape(c_prev, (1, d_h))
    z = add(add(matmul(xr, params.w_x), matmul(hr, params.w_h)), params.b)
    i = sigmoid(slice_cols(z, 0, d_h))
    f = sigmoid(slice_cols(z, d_h, 2 * d_h))
    g = tanh(slice_cols(z, 2 * d_h, 3 * d_h))
    o = sigmoid(slice_cols(z, 3 * d_h, 4 * d_h))
    c_t = add(mul(f, cr), mul(i, g))
    h_t = mul(o, tanh(c_t))
    return reshape(h_t, (d_h,)), reshape(c_t, (d_h,))


def lstm_sequence(seq: Tensor, params: LSTMParams) -> Tensor:
    """Run one LSTM direction over a (T, d_in) sequence as a fused tape node.

    Initial hidden and cell states are zero.  Returns the (T, d_h) stack of
    hidden states.  The backward closure runs BPTT over cached gate values
    and batches the weight gradients into single matmuls.
    """
    if seq.data.ndim != 2:
        raise DimensionError(f"lstm_sequence: need (T, d_in), got {seq.data.shape}")
    T, d_in = seq.data.shape
    if T == 0:
        raise ContractError("lstm_sequence: empty sequence")
    if d_in != params.d_in:
        raise DimensionError(
            f"lstm_sequence: input width {d_in} does not match d_in {params.d_in}"
        )
    H = params.d_h
    w_x, w_h, b = params.w_x, params.w_h, params.b

    x = seq.data
    pre = x @ w_x.data + b.data  # (T, 4H)
    hs = np.empty((T, H))
    gi = np.empty((T, H))
    gf = np.empty((T, H))
    gg = np.empty((T, H))
    go = np.empty((T, H))
    cs = np.empty((T, H))
    tc = np.empty((T, H))

    h = np.zeros(H)
    c = np.zeros(H)
    whd = w_h.data
    for t in range(T):
        z = pre[t] + h @ whd
        zi, zf, zg, zo = z[:H], z[H : 2 * H], z[2 * H : 3 * H], z[3 * H :]
        ei = np.exp(-np.abs(zi))
        ef = np.exp(-np.abs(zf))
        eo = np.exp(-np.abs(zo))
        i_t = np.where(zi >= 0, 1.0 / (1.0 + ei), ei / (1.0 + ei))
        f_t = np.where(zf >= 0, 1.0 / (1.0 + ef), ef / (1.0 + ef))
        g_t = np.tanh(zg)
        o_t = np.where(zo >= 0, 1.0 / (1.0 + eo), eo / (1.0 + eo))
        c = f_t * c + i_t * g_t
        t_c = np.tanh(c)
        h = o_t * t_c
        gi[t], gf[t], gg[t], go[t] = i_t, f_t, g_t, o_t
        cs[t] = c
        tc[t] = t_c
        hs[t] = h

    out = Tensor(hs)

    def bwd(g_out):
        dz = np.empty((T, 4 * H))
        dh = np.zeros(H)
        dc = np.zeros(H)
        for t in range(T - 1, -1, -1):
            dh = dh + g_out[t]
            c_prev = cs[t - 1] if t > 0 else np.zeros(H)
            do_ = dh * tc[t]
            dc = dc + dh * go[t] * (1.0 - tc[t] * tc[t])
            di = dc * gg[t]
            df = dc * c_prev
            dg = dc * gi[t]
            dz[t, :H] = di * gi[t] * (1.0 - gi[t])
            dz[t, H : 2 * H] = df * gf[t] * (1.0 - gf[t])
            dz[t, 2 * H : 3 * H] = dg * (1.0 - gg[t] * gg[t])
            dz[t, 3 * H :] = do_ * go[t] * (1.0 - go[t])
            dh = dz[t] @ whd.T
            dc = dc * gf[t]
        h_prev = np.vstack([np.zeros((1, H)), hs[:-1]])
        return [dz @ w_x.data.T, x.T @ dz, h_prev.T @ dz, dz.sum(axis=0)]

    record(out, (seq, w_x, w_h, b), bwd)
    return out


def bilstm_forward(seq: Tensor, params_fwd: LSTMParams, params_bwd: LSTMParams) -> Tensor:
    """Bidirectional LSTM: row t is concat(forward h_t, backward h_t)."""
    if seq.data.ndim != 2 or seq.data.shape[0] == 0:
        raise ContractError(f"bilstm_forward: need a nonempty (T, d_in) sequence, got {seq.data.shape}")
    fwd = lstm_sequence(seq, params_fwd)
    bwd = reverse_rows(lstm_sequence(reverse_rows(seq), params_bwd))
    return concat_cols(fwd, bwd)
