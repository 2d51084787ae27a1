"""Hand-rolled dueling MLP and Adam optimizer (no autodiff framework).

Architecture, for state dimension 7 and 5 actions:

    x (7) -> affine -> relu -> h1 -> affine -> relu -> h2
    h2 -> affine -> V (scalar)          value head
    h2 -> affine -> A (5)               advantage head
    Q(x) = V + A - mean(A)

Gradients are derived analytically; the aggregation layer backprops as
dV = sum(dQ), dA = dQ - mean(dQ).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import NUM_ACTIONS, STATE_DIM

CHECKPOINT_FORMAT = "qnav-checkpoint"
CHECKPOINT_VERSION = 1

DEFAULT_WIDTHS = (48, 40)

PARAM_KEYS = ("w1", "b1", "w2", "b2", "wv", "bv", "wa", "ba")


class CheckpointError(Exception):
    """Raised for unreadable, mismatched, or wrong-version checkpoints."""


def parameter_count(widths: tuple[int, int]) -> int:
    """Total scalar parameters for the given hidden widths (biases included)."""
    h1, h2 = widths
    return (STATE_DIM * h1 + h1) + (h1 * h2 + h2) + (h2 + 1) + (NUM_ACTIONS * h2 + NUM_ACTIONS)


@dataclass
class _Cache:
    """Forward activations kept for the backward pass."""

    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray


class DuelingNet:
    """Two hidden layers plus value/advantage heads over 5 actions."""

    def __init__(self, params: dict[str, np.ndarray]):
        missing = [k for k in PARAM_KEYS if k not in params]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_KEYS}
        h1 = self.params["b1"].shape[0]
        h2 = self.params["b2"].shape[0]
        expected = {
            "w1": (h1, STATE_DIM),
            "b1": (h1,),
            "w2": (h2, h1),
            "b2": (h2,),
            "wv": (h2,),
            "bv": (1,),
            "wa": (NUM_ACTIONS, h2),
            "ba": (NUM_ACTIONS,),
        }
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ValueError(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")
        self.widths = (h1, h2)

    @classmethod
    def initialize(cls, seed: int, widths: tuple[int, int] = DEFAULT_WIDTHS) -> "DuelingNet":
        """Seeded init: weights uniform in +-sqrt(1/fan_in), biases zero."""
        h1, h2 = widths
        if h1 < 1 or h2 < 1:
            raise ValueError(f"hidden widths must be positive: {widths}")
        rng = np.random.default_rng(seed)

        def uniform(fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
            bound = np.sqrt(1.0 / fan_in)
            return rng.uniform(-bound, bound, size=shape)

        params = {
            "w1": uniform(STATE_DIM, (h1, STATE_DIM)),
            "b1": np.zeros(h1),
            "w2": uniform(h1, (h2, h1)),
            "b2": np.zeros(h2),
            "wv": uniform(h2, (h2,)),
            "bv": np.zeros(1),
            "wa": uniform(h2, (NUM_ACTIONS, h2)),
            "ba": np.zeros(NUM_ACTIONS),
        }
        return cls(params)

    @property
    def num_parameters(self) -> int:
        return parameter_count(self.widths)

    def clone(self) -> "DuelingNet":
        return DuelingNet({k: v.copy() for k, v in self.params.items()})

    def load_state(self, other: "DuelingNet") -> None:
        """Copy parameters in place (target-network sync)."""
        if other.widths != self.widths:
            raise ValueError(f"width mismatch: {other.widths} vs {self.widths}")
        for k in PARAM_KEYS:
            np.copyto(self.params[k], other.params[k])

    # -- forward ------------------------------------------------------------

    def _check_input(self, x: np.ndarray, batched: bool) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        want = (x.shape[-1] if x.ndim else -1)
        if (batched and (x.ndim != 2 or want != STATE_DIM)) or (
            not batched and x.shape != (STATE_DIM,)
        ):
            raise ValueError(f"bad input shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input")
        return x

    def _forward_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, _Cache]:
        p = self.params
        z1 = x @ p["w1"].T + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["w2"].T + p["b2"]
        h2 = np.maximum(z2, 0.0)
        value = h2 @ p["wv"] + p["bv"][0]
        advantage = h2 @ p["wa"].T + p["ba"]
        return value, advantage, _Cache(x, z1, h1, z2, h2)

    def value_and_advantage(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        x = self._check_input(x, batched=False)
        value, advantage, _ = self._forward_batch(x[None, :])
        return float(value[0]), advantage[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one state, shape (5,)."""
        value, advantage = self.value_and_advantage(x)
        return value + advantage - advantage.mean()

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a batch of states, shape (B, 5)."""
        x = self._check_input(x, batched=True)
        value, advantage, _ = self._forward_batch(x)
        return value[:, None] + advantage - advantage.mean(axis=1, keepdims=True)

    # -- backward -----------------------------------------------------------

    def backward_batch(self, x: np.ndarray, dq: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of sum_b dq[b] . Q(x[b]) w.r.t. every parameter.

        dq is the upstream gradient per row; gradients are summed over the
        batch, so mean-loss scaling belongs in dq itself.
        """
        x = self._check_input(x, batched=True)
        dq = np.asarray(dq, dtype=np.float64)
        if dq.shape != (x.shape[0], NUM_ACTIONS):
            raise ValueError(f"bad upstream gradient shape {dq.shape}")
        p = self.params
        _, _, cache = self._forward_batch(x)

        dvalue = dq.sum(axis=1)
        dadv = dq - dq.mean(axis=1, keepdims=True)

        grads = {
            "wv": cache.h2.T @ dvalue,
            "bv": np.array([dvalue.sum()]),
            "wa": dadv.T @ cache.h2,
            "ba": dadv.sum(axis=0),
        }
        dh2 = dvalue[:, None] * p["wv"][None, :] + dadv @ p["wa"]
        dz2 = dh2 * (cache.z2 > 0.0)
        grads["w2"] = dz2.T @ cache.h1
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["w2"]
        dz1 = dh1 * (cache.z1 > 0.0)
        grads["w1"] = dz1.T @ cache.x
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def backward(self, x: np.ndarray, dq: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of dq . Q(x) for a single state."""
        x = self._check_input(x, batched=False)
        return self.backward_batch(x[None, :], np.asarray(dq, dtype=np.float64)[None, :])


class Adam:
    """Adam with bias correction.

        m <- beta1*m + (1-beta1)*g        mhat = m / (1 - beta1^t)
        v <- beta2*v + (1-beta2)*g^2      vhat = v / (1 - beta2^t)
        theta <- theta - lr * mhat / (sqrt(vhat) + eps)

    The learning rate is passed per step so an external schedule can drive it.
    """

    def __init__(self, net: DuelingNet, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in net.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in net.params.items()}

    def step(self, net: DuelingNet, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k in PARAM_KEYS:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            net.params[k] -= lr * mhat / (np.sqrt(vhat) + self.eps)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(net: DuelingNet, *, seed: int, episodes: int, extra: dict | None = None) -> bytes:
    """Serialize a net plus training metadata to a stable JSON document."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "widths": list(net.widths),
        "seed": seed,
        "episodes": episodes,
        "params": {k: net.params[k].tolist() for k in PARAM_KEYS},
    }
    if extra:
        doc["extra"] = extra
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def load_checkpoint(data: bytes) -> tuple[DuelingNet, dict]:
    """Rebuild (net, meta) from save_checkpoint output.

    Raises CheckpointError for anything that is not a compatible checkpoint.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a navigator checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version: {doc.get('version')!r}")
    try:
        params = {k: np.asarray(doc["params"][k], dtype=np.float64) for k in PARAM_KEYS}
        net = DuelingNet(params)
        meta = {
            "widths": tuple(doc["widths"]),
            "seed": doc["seed"],
            "episodes": doc["episodes"],
        }
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if meta["widths"] != net.widths:
        raise CheckpointError(f"widths field {meta['widths']} does not match parameters {net.widths}")
    if "extra" in doc:
        meta["extra"] = doc["extra"]
    return net, meta
