"""Recurrent sequence policy: stacked LSTM layers with a linear head,
trained by full backpropagation through time on step-aligned sequences.

Everything is plain numpy in float64.  The layout of one layer is a pair of
input/recurrent matrices mapping onto the four gates (input, forget, cell
candidate, output, in that order) plus a bias vector; forget-gate biases
start at 1 so long sequences keep gradient flow early in training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import Standardization, TrainingFailure, TrainingSequence, seed_stream


@dataclass(frozen=True)
class PolicyArch:
    input_dim: int
    hidden_dim: int
    num_layers: int
    output_dim: int

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.num_layers, self.output_dim) <= 0:
            raise ValueError("all architecture dimensions must be positive")


def parameter_count(arch: PolicyArch) -> int:
    """Closed-form parameter count of the stacked-LSTM-plus-head model."""
    total = 0
    in_dim = arch.input_dim
    for _ in range(arch.num_layers):
        total += 4 * arch.hidden_dim * (in_dim + arch.hidden_dim + 1)
        in_dim = arch.hidden_dim
    total += arch.hidden_dim * arch.output_dim + arch.output_dim
    return total


@dataclass
class PolicyParams:
    """Weights plus the input/target standardization the model was fit with."""

    arch: PolicyArch
    layers: list[dict[str, np.ndarray]]
    head_w: np.ndarray
    head_b: np.ndarray
    stats: Standardization

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for key in ("w_x", "w_h", "b"):
                out.append((f"layer{i}.{key}", layer[key]))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out


def identity_stats(input_dim: int, output_dim: int) -> Standardization:
    return Standardization(
        np.zeros(input_dim), np.ones(input_dim),
        np.zeros(output_dim), np.ones(output_dim),
    )


def policy_init(arch: PolicyArch, seed: int,
                stats: Standardization | None = None) -> PolicyParams:
    """Scaled-uniform initialization (+-1/sqrt(fan_in)), forget bias 1."""
    rng = seed_stream(seed, "policy-init")
    layers = []
    in_dim = arch.input_dim
    h = arch.hidden_dim
    for _ in range(arch.num_layers):
        bound_x = 1.0 / math.sqrt(in_dim)
        bound_h = 1.0 / math.sqrt(h)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        layers.append({
            "w_x": rng.uniform(-bound_x, bound_x, size=(in_dim, 4 * h)),
            "w_h": rng.uniform(-bound_h, bound_h, size=(h, 4 * h)),
            "b": b,
        })
        in_dim = h
    bound = 1.0 / math.sqrt(h)
    head_w = rng.uniform(-bound, bound, size=(h, arch.output_dim))
    head_b = np.zeros(arch.output_dim)
    if stats is None:
        stats = identity_stats(arch.input_dim, arch.output_dim)
    return PolicyParams(arch, layers, head_w, head_b, stats)


def init_hidden(params: PolicyParams) -> list[tuple[np.ndarray, np.ndarray]]:
    h = params.arch.hidden_dim
    return [(np.zeros(h), np.zeros(h)) for _ in range(params.arch.num_layers)]


def _gate_split(z: np.ndarray, h: int):
    return z[..., :h], z[..., h:2 * h], z[..., 2 * h:3 * h], z[..., 3 * h:]


def policy_forward(params: PolicyParams, hidden, x: np.ndarray
                   ) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """One recurrent step on a standardized input vector.

    Pure function of (params, hidden, x); returns the standardized output
    and the new hidden state.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.arch.input_dim,):
        raise ValueError(f"expected input shape ({params.arch.input_dim},), got {x.shape}")
    if len(hidden) != params.arch.num_layers:
        raise ValueError("hidden state does not match the layer count")
    hdim = params.arch.hidden_dim
    new_hidden = []
    inp = x
    for layer, (h_prev, c_prev) in zip(params.layers, hidden):
        if h_prev.shape != (hdim,) or c_prev.shape != (hdim,):
            raise ValueError("hidden state does not match the hidden width")
        z = inp @ layer["w_x"] + h_prev @ layer["w_h"] + layer["b"]
        zi, zf, zg, zo = _gate_split(z, hdim)
        i, f, o = expit(zi), expit(zf), expit(zo)
        g = np.tanh(zg)
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        new_hidden.append((h, c))
        inp = h
    y = inp @ params.head_w + params.head_b
    return y, new_hidden


def policy_apply(params: PolicyParams, hidden, physical_input: np.ndarray
                 ) -> tuple[np.ndarray, list]:
    """Standardize, step the network, and map back to physical units."""
    s = params.stats
    x = (np.asarray(physical_input, dtype=float) - s.input_mean) / s.input_std
    y, hidden = policy_forward(params, hidden, x)
    return y * s.target_std + s.target_mean, hidden


def forward_sequence(params: PolicyParams, x: np.ndarray, want_cache: bool = False):
    """Batched sequence forward pass; x has shape (T, B, input_dim).

    Returns (y, cache); cache is None unless requested.  The per-layer input
    projection runs as one matrix product over all steps, only the recurrent
    product stays inside the time loop.
    """
    t_len, batch, _ = x.shape
    hdim = params.arch.hidden_dim
    caches = []
    inp = x
    for layer in params.layers:
        z_in = inp.reshape(t_len * batch, -1) @ layer["w_x"]
        z_in = z_in.reshape(t_len, batch, 4 * hdim) + layer["b"]
        gates = np.empty((t_len, batch, 4 * hdim))
        cs = np.empty((t_len, batch, hdim))
        tanh_c = np.empty((t_len, batch, hdim))
        hs = np.empty((t_len, batch, hdim))
        h = np.zeros((batch, hdim))
        c = np.zeros((batch, hdim))
        w_h = layer["w_h"]
        for t in range(t_len):
            z = z_in[t] + h @ w_h
            i, f, o = expit(z[:, :hdim]), expit(z[:, hdim:2 * hdim]), expit(z[:, 3 * hdim:])
            g = np.tanh(z[:, 2 * hdim:3 * hdim])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            gates[t, :, :hdim] = i
            gates[t, :, hdim:2 * hdim] = f
            gates[t, :, 2 * hdim:3 * hdim] = g
            gates[t, :, 3 * hdim:] = o
            cs[t] = c
            tanh_c[t] = tc
            hs[t] = h
        if want_cache:
            caches.append({"x": inp, "gates": gates, "c": cs,
                           "tanh_c": tanh_c, "h": hs})
        inp = hs
    y = inp.reshape(t_len * batch, hdim) @ params.head_w + params.head_b
    y = y.reshape(t_len, batch, -1)
    if want_cache:
        return y, {"layers": caches, "top": inp}
    return y, None


def backward_sequence(params: PolicyParams, cache, d_y: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for forward_sequence.

    d_y is the loss gradient w.r.t. the head output, shape (T, B, out).
    Returns gradients keyed like named_parameters.
    """
    t_len, batch, _ = d_y.shape
    hdim = params.arch.hidden_dim
    grads: dict[str, np.ndarray] = {}
    top = cache["top"]
    flat_top = top.reshape(t_len * batch, hdim)
    flat_dy = d_y.reshape(t_len * batch, -1)
    grads["head.w"] = flat_top.T @ flat_dy
    grads["head.b"] = flat_dy.sum(axis=0)
    d_h_out = (flat_dy @ params.head_w.T).reshape(t_len, batch, hdim)

    for li in range(params.arch.num_layers - 1, -1, -1):
        layer = params.layers[li]
        lc = cache["layers"][li]
        gates, cs, tanh_c = lc["gates"], lc["c"], lc["tanh_c"]
        w_h = layer["w_h"]
        d_z = np.empty((t_len, batch, 4 * hdim))
        dh_rec = np.zeros((batch, hdim))
        dc_acc = np.zeros((batch, hdim))
        for t in range(t_len - 1, -1, -1):
            i = gates[t, :, :hdim]
            f = gates[t, :, hdim:2 * hdim]
            g = gates[t, :, 2 * hdim:3 * hdim]
            o = gates[t, :, 3 * hdim:]
            tc = tanh_c[t]
            dh = d_h_out[t] + dh_rec
            dc = dh * o * (1.0 - tc * tc) + dc_acc
            c_prev = cs[t - 1] if t > 0 else np.zeros((batch, hdim))
            dzt = d_z[t]
            dzt[:, :hdim] = dc * g * i * (1.0 - i)
            dzt[:, hdim:2 * hdim] = dc * c_prev * f * (1.0 - f)
            dzt[:, 2 * hdim:3 * hdim] = dc * i * (1.0 - g * g)
            dzt[:, 3 * hdim:] = dh * tc * o * (1.0 - o)
            dc_acc = dc * f
            dh_rec = dzt @ w_h.T
        flat_dz = d_z.reshape(t_len * batch, 4 * hdim)
        x = lc["x"]
        flat_x = x.reshape(t_len * batch, -1)
        h_prev = np.concatenate([np.zeros((1, batch, hdim)), lc["h"][:-1]], axis=0)
        grads[f"layer{li}.w_x"] = flat_x.T @ flat_dz
        grads[f"layer{li}.w_h"] = h_prev.reshape(t_len * batch, hdim).T @ flat_dz
        grads[f"layer{li}.b"] = flat_dz.sum(axis=0)
        if li > 0:
            d_h_out = (flat_dz @ layer["w_x"].T).reshape(t_len, batch, hdim)
    return grads


def standardize_sequence(seq: TrainingSequence, stats: Standardization
                         ) -> tuple[np.ndarray, np.ndarray]:
    x = (seq.inputs - stats.input_mean) / stats.input_std
    y = (seq.targets - stats.target_mean) / stats.target_std
    return x, y


def compute_loss(params: PolicyParams, batch: list[TrainingSequence]) -> float:
    """Mean squared error over all steps and output channels of the batch."""
    if not batch:
        raise ValueError("batch must be non-empty")
    total = 0.0
    count = 0
    for seq in batch:
        x, y = standardize_sequence(seq, params.stats)
        pred, _ = forward_sequence(params, x[:, None, :])
        err = pred[:, 0, :] - y
        total += float((err * err).sum())
        count += err.size
    return total / count


def policy_backward(params: PolicyParams, seq: TrainingSequence) -> dict[str, np.ndarray]:
    """Exact BPTT gradients of the mean-squared loss over one sequence."""
    x, y = standardize_sequence(seq, params.stats)
    return _loss_and_grads(params, x[:, None, :], y[:, None, :])[1]


def _loss_and_grads(params: PolicyParams, x: np.ndarray, y: np.ndarray
                    ) -> tuple[float, dict[str, np.ndarray]]:
    pred, cache = forward_sequence(params, x, want_cache=True)
    err = pred - y
    loss = float((err * err).mean())
    d_y = err * (2.0 / err.size)
    return loss, backward_sequence(params, cache, d_y)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients to a global norm cap; returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    learning_rate: float = 2e-3
    epochs: int = 20
    batch_size: int = 32
    grad_clip: float = 1.0
    seed: int = 0
    val_holdout: int = 20      # every Nth sequence goes to validation
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


class AdamState:
    def __init__(self, params: PolicyParams):
        self.m = {name: np.zeros_like(p) for name, p in params.named_parameters()}
        self.v = {name: np.zeros_like(p) for name, p in params.named_parameters()}
        self.t = 0

    def update(self, params: PolicyParams, grads: dict[str, np.ndarray],
               cfg: TrainConfig) -> None:
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in params.named_parameters():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)


def _mean_loss(params: PolicyParams, arrays: list[tuple[np.ndarray, np.ndarray]]) -> float:
    total = 0.0
    count = 0
    for x, y in arrays:
        pred, _ = forward_sequence(params, x[:, None, :])
        err = pred[:, 0, :] - y
        total += float((err * err).sum())
        count += err.size
    return total / count


def train(params: PolicyParams, sequences: list[TrainingSequence],
          cfg: TrainConfig) -> tuple[PolicyParams, dict]:
    """Adam-optimized BPTT over the training set; deterministic per seed.

    Sequences are bucketed by length so each minibatch stacks cleanly.
    Returns the trained params (updated in place) and a history dict with
    per-update training loss and per-epoch validation loss.
    """
    if not sequences:
        raise ValueError("training set must be non-empty")
    stats = params.stats
    arrays = [standardize_sequence(s, stats) for s in sequences]
    if cfg.val_holdout > 1 and len(arrays) > cfg.val_holdout:
        val = arrays[::cfg.val_holdout]
        train_arrays = [a for i, a in enumerate(arrays) if i % cfg.val_holdout != 0]
    else:
        val = arrays
        train_arrays = arrays

    buckets: dict[int, list[int]] = {}
    for idx, (x, _) in enumerate(train_arrays):
        buckets.setdefault(len(x), []).append(idx)

    rng = seed_stream(cfg.seed, "train-shuffle")
    adam = AdamState(params)
    history = {"train_loss": [], "grad_norm": [], "val_loss": [],
               "val_epoch": [], "initial_val_loss": None}
    history["initial_val_loss"] = _mean_loss(params, val)
    update = 0
    for epoch in range(cfg.epochs):
        batches = []
        for length in sorted(buckets):
            order = np.array(buckets[length])
            rng.shuffle(order)
            for start in range(0, len(order), cfg.batch_size):
                batches.append(order[start:start + cfg.batch_size])
        rng.shuffle(batches)
        for batch_idx in batches:
            x = np.stack([train_arrays[i][0] for i in batch_idx], axis=1)
            y = np.stack([train_arrays[i][1] for i in batch_idx], axis=1)
            loss, grads = _loss_and_grads(params, x, y)
            if not math.isfinite(loss):
                raise TrainingFailure(update, f"loss={loss!r}")
            norm = clip_gradients(grads, cfg.grad_clip)
            adam.update(params, grads, cfg)
            history["train_loss"].append(loss)
            history["grad_norm"].append(norm)
            update += 1
        history["val_loss"].append(_mean_loss(params, val))
        history["val_epoch"].append(epoch)
    return params, history


def autoregressive_errors(params: PolicyParams, seq: TrainingSequence,
                          dof: int = 2) -> np.ndarray:
    """Offline diagnostic: feed the predicted follower block back as the next
    input and report the per-step output error against the recorded targets."""
    hidden = init_hidden(params)
    x = seq.inputs[0].copy()
    errs = np.empty(len(seq.inputs))
    for t in range(len(seq.inputs)):
        x[-1] = seq.label
        out, hidden = policy_apply(params, hidden, x)
        errs[t] = float(np.sqrt(np.mean((out - seq.targets[t]) ** 2)))
        x[:3 * dof] = out[:3 * dof]
    return errs
