"""From-scratch fully connected Q-network with layer normalization.

Architecture: input -> dense -> layernorm -> ReLU -> dense -> layernorm ->
ReLU -> dense (linear).  Parameters live in one flat float64 vector with
per-layer views, which keeps cloning, checkpoint diffing and the Adam
update cheap.  Backpropagation is explicit; a central finite-difference
checker is provided to verify it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

LAYER_NORM_EPS = 1e-5


def _layer_param_counts(layer_sizes: Sequence[int]):
    """Per-layer (weights, bias, ln_gain, ln_shift) sizes; no LN on output."""
    counts = []
    n_dense = len(layer_sizes) - 1
    for l in range(n_dense):
        fan_in, fan_out = layer_sizes[l], layer_sizes[l + 1]
        has_ln = l < n_dense - 1
        counts.append((fan_in * fan_out, fan_out, fan_out if has_ln else 0))
    return counts


class QNetwork:
    """Fully connected value network mapping observations to action values."""

    def __init__(
        self,
        layer_sizes: Sequence[int] = (10, 64, 64, 11),
        seed: Optional[int] = None,
        params: Optional[np.ndarray] = None,
    ):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.n_params = sum(w + b + 2 * ln for w, b, ln in _layer_param_counts(self.layer_sizes))
        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
            self.theta = params.copy()
        else:
            self.theta = np.zeros(self.n_params)
        (self.weights, self.biases, self.ln_gains, self.ln_shifts) = _views(
            self.theta, self.layer_sizes
        )
        if params is None:
            self._init_params(seed)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def _init_params(self, seed: Optional[int]) -> None:
        """Kaiming-style uniform fan-in init for weights; biases zero,
        layer-norm gains one, shifts zero."""
        rng = np.random.default_rng(seed)
        for W in self.weights:
            bound = math.sqrt(6.0 / W.shape[0])
            W[:, :] = rng.uniform(-bound, bound, size=W.shape)
        for g in self.ln_gains:
            g[:] = 1.0
        # biases and shifts stay zero

    # -- forward ---------------------------------------------------------

    def forward(self, observation: Sequence[float]) -> np.ndarray:
        """Action values for a single observation vector."""
        obs = np.asarray(observation, dtype=np.float64)
        if obs.shape != (self.input_dim,):
            raise ValueError(f"expected observation of size {self.input_dim}, got {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise ValueError("non-finite observation")
        return self.forward_batch(obs[None, :])[0]

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Action values for a batch of observations, shape (B, input_dim)."""
        q, _ = self._forward_cached(np.asarray(x, dtype=np.float64))
        return q

    def _forward_cached(self, x: np.ndarray):
        cache = []
        h = x
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if l < last:
                d = z.shape[1]
                mu = (np.add.reduce(z, axis=1) / d)[:, None]
                xc = z - mu
                var = (np.einsum("bd,bd->b", xc, xc) / d)[:, None]
                inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
                xhat = xc * inv
                u = self.ln_gains[l] * xhat + self.ln_shifts[l]
                h_next = np.maximum(u, 0.0)
                cache.append((h, xhat, inv, u))
                h = h_next
            else:
                cache.append((h, None, None, None))
                h = z
        return h, cache

    # -- backward --------------------------------------------------------

    def backward_batch(
        self,
        x: np.ndarray,
        actions: np.ndarray,
        td_targets: np.ndarray,
    ) -> np.ndarray:
        """Gradient of the mean of 0.5 * (Q(s, a) - y)^2 over the batch.

        Returns a flat vector laid out like ``theta``.  Q-heads for actions
        other than the taken one receive no gradient.
        """
        x = np.asarray(x, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.intp)
        td_targets = np.asarray(td_targets, dtype=np.float64)
        if not np.all(np.isfinite(td_targets)):
            raise ValueError("non-finite TD target")
        q, cache = self._forward_cached(x)
        batch = x.shape[0]
        dq = np.zeros_like(q)
        rows = np.arange(batch)
        dq[rows, actions] = (q[rows, actions] - td_targets) / batch

        grad = np.zeros(self.n_params)
        g_weights, g_biases, g_gains, g_shifts = _views(grad, self.layer_sizes)
        last = len(self.weights) - 1
        delta = dq
        for l in range(last, -1, -1):
            h_in, xhat, inv, u = cache[l]
            g_weights[l][:, :] = h_in.T @ delta
            g_biases[l][:] = np.add.reduce(delta, axis=0)
            if l > 0:
                dh = delta @ self.weights[l].T
                h_prev, xhat_p, inv_p, u_p = cache[l - 1]
                du = dh * (u_p > 0.0)
                g_gains[l - 1][:] = np.einsum("bd,bd->d", du, xhat_p)
                g_shifts[l - 1][:] = np.add.reduce(du, axis=0)
                dxhat = du * self.ln_gains[l - 1]
                d = dxhat.shape[1]
                dx_mean = (np.add.reduce(dxhat, axis=1) / d)[:, None]
                proj = (np.einsum("bd,bd->b", dxhat, xhat_p) / d)[:, None]
                delta = inv_p * (dxhat - dx_mean - xhat_p * proj)
        return grad

    def backward(self, observation, action: int, td_target: float) -> np.ndarray:
        """Gradient of 0.5 * (Q(s, a) - y)^2 for a single transition."""
        obs = np.asarray(observation, dtype=np.float64)
        return self.backward_batch(obs[None, :], np.array([action]), np.array([td_target]))

    # -- copies and checkpoints -------------------------------------------

    def clone(self) -> "QNetwork":
        """Value-identical network with independently mutable parameters."""
        return QNetwork(self.layer_sizes, params=self.theta)

    def copy_params_from(self, other: "QNetwork") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("architecture mismatch")
        self.theta[:] = other.theta

    def assert_finite(self) -> None:
        if not np.all(np.isfinite(self.theta)):
            raise FloatingPointError("network parameters contain non-finite values")

    def to_json_dict(self) -> dict:
        layers = []
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            layers.append(
                {
                    "kind": "dense",
                    "rows": W.shape[0],
                    "cols": W.shape[1],
                    "weight": W.ravel().tolist(),
                    "bias": b.tolist(),
                }
            )
            if l < last:
                layers.append(
                    {
                        "kind": "layer_norm",
                        "size": int(self.ln_gains[l].shape[0]),
                        "gain": self.ln_gains[l].tolist(),
                        "shift": self.ln_shifts[l].tolist(),
                    }
                )
        return {"format": "qnet-v1", "layer_sizes": list(self.layer_sizes), "layers": layers}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "QNetwork":
        if doc.get("format") != "qnet-v1":
            raise ValueError(f"unknown checkpoint format {doc.get('format')!r}")
        net = cls(doc["layer_sizes"])
        layers = doc["layers"]
        idx = 0
        last = len(net.weights) - 1
        for l in range(len(net.weights)):
            dense = layers[idx]
            idx += 1
            if dense["kind"] != "dense":
                raise ValueError("malformed checkpoint: expected dense layer")
            W = np.asarray(dense["weight"], dtype=np.float64).reshape(dense["rows"], dense["cols"])
            if W.shape != net.weights[l].shape:
                raise ValueError("checkpoint layer shape mismatch")
            net.weights[l][:, :] = W
            net.biases[l][:] = np.asarray(dense["bias"], dtype=np.float64)
            if l < last:
                ln = layers[idx]
                idx += 1
                if ln["kind"] != "layer_norm":
                    raise ValueError("malformed checkpoint: expected layer_norm")
                net.ln_gains[l][:] = np.asarray(ln["gain"], dtype=np.float64)
                net.ln_shifts[l][:] = np.asarray(ln["shift"], dtype=np.float64)
        return net

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def _views(flat: np.ndarray, layer_sizes: Sequence[int]):
    """Per-layer parameter views into a flat vector.

    Layout per dense layer: weights (row-major), bias, then layer-norm gain
    and shift for hidden layers.
    """
    weights: List[np.ndarray] = []
    biases: List[np.ndarray] = []
    gains: List[np.ndarray] = []
    shifts: List[np.ndarray] = []
    off = 0
    n_dense = len(layer_sizes) - 1
    for l in range(n_dense):
        fan_in, fan_out = layer_sizes[l], layer_sizes[l + 1]
        weights.append(flat[off : off + fan_in * fan_out].reshape(fan_in, fan_out))
        off += fan_in * fan_out
        biases.append(flat[off : off + fan_out])
        off += fan_out
        if l < n_dense - 1:
            gains.append(flat[off : off + fan_out])
            off += fan_out
            shifts.append(flat[off : off + fan_out])
            off += fan_out
    return weights, biases, gains, shifts


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second-moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def td_loss(net: QNetwork, observation, action: int, td_target: float) -> float:
    """The scalar loss whose gradient ``backward`` computes."""
    return 0.5 * float((net.forward(observation)[action] - td_target) ** 2)


def finite_difference_gradient(
    net: QNetwork, observation, action: int, td_target: float, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of ``td_loss`` w.r.t. every parameter."""
    grad = np.zeros(net.n_params)
    for k in range(net.n_params):
        orig = net.theta[k]
        net.theta[k] = orig + h
        hi = td_loss(net, observation, action, td_target)
        net.theta[k] = orig - h
        lo = td_loss(net, observation, action, td_target)
        net.theta[k] = orig
        grad[k] = (hi - lo) / (2.0 * h)
    return grad
