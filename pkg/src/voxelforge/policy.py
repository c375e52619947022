"""Actor-critic MLP with hand-written forward/backward passes, plus an exact
accountant for the floating-point cost of one deployed (actor) forward pass.

The actor and critic are separate two-hidden-layer tanh networks. The actor
head is squashed by tanh so mean actions live in [-1, 1]; exploration spread
is a learned state-independent log standard deviation per action dimension.

FLOPs convention (fixed): a linear layer in -> out costs 2*in*out (multiply
and add) plus out (bias add); tanh costs 4 per unit and is applied after
every layer of the deployed path, output squash included. Only the actor path
is counted, since deployment-time control never evaluates the critic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError
from .ioutil import atomic_write_text

TANH_FLOPS_PER_UNIT = 4
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FlopsReport:
    per_layer: tuple[tuple[str, int], ...]
    activation_flops: int
    total: int

    def as_dict(self) -> dict:
        return {
            "per_layer": [[label, flops] for label, flops in self.per_layer],
            "activation_flops": self.activation_flops,
            "total": self.total,
        }


def count_flops(layer_sizes: list[int] | tuple[int, ...]) -> FlopsReport:
    """Exact FLOPs of one actor forward pass through the given layer chain."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output sizes, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be >= 1, got {sizes}")
    per_layer = []
    activation = 0
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        per_layer.append((f"linear_{i} ({n_in}->{n_out})", 2 * n_in * n_out + n_out))
        activation += TANH_FLOPS_PER_UNIT * n_out
    total = sum(f for _, f in per_layer) + activation
    return FlopsReport(per_layer=tuple(per_layer), activation_flops=activation, total=total)


def _init_layers(sizes: list[int], rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)
        layers.append((w, np.zeros(n_out)))
    return layers


class Policy:
    """Parameters plus forward/backward rules; no optimizer state lives here."""

    def __init__(self, layer_sizes: list[int],
                 actor: list[tuple[np.ndarray, np.ndarray]],
                 critic: list[tuple[np.ndarray, np.ndarray]],
                 log_std: np.ndarray):
        if len(layer_sizes) != 4:
            raise ValueError(f"expected [obs, h1, h2, act] sizes, got {layer_sizes}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.actor = actor
        self.critic = critic
        self.log_std = np.asarray(log_std, dtype=np.float64)
        self.flops = count_flops(self.layer_sizes)

    @classmethod
    def init_random(cls, layer_sizes: list[int], rng: np.random.Generator | int) -> "Policy":
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        sizes = [int(s) for s in layer_sizes]
        critic_sizes = sizes[:-1] + [1]
        return cls(
            layer_sizes=sizes,
            actor=_init_layers(sizes, rng),
            critic=_init_layers(critic_sizes, rng),
            log_std=np.zeros(sizes[-1]),
        )

    @property
    def obs_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def act_dim(self) -> int:
        return self.layer_sizes[-1]

    # ---- forward ----

    def actor_forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Batched mean actions in [-1, 1]; cache feeds actor_backward."""
        (w1, b1), (w2, b2), (w3, b3) = self.actor
        h1 = np.tanh(x @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        mean = np.tanh(h2 @ w3 + b3)
        return mean, {"x": x, "h1": h1, "h2": h2, "mean": mean}

    def critic_forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Batched state values (B,); cache feeds critic_backward."""
        (w1, b1), (w2, b2), (w3, b3) = self.critic
        h1 = np.tanh(x @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        v = h2 @ w3 + b3
        return v[:, 0], {"x": x, "h1": h1, "h2": h2}

    def forward(self, observation: np.ndarray) -> tuple[np.ndarray, float]:
        """Single-observation action mean and state value."""
        obs = np.asarray(observation, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise DimensionMismatch(
                f"observation shape {obs.shape}, policy expects ({self.obs_dim},)"
            )
        if not np.isfinite(obs).all():
            raise ValueError("observation contains non-finite values")
        mean, _ = self.actor_forward(obs[None, :])
        value, _ = self.critic_forward(obs[None, :])
        return mean[0], float(value[0])

    def act(self, observation: np.ndarray) -> np.ndarray:
        """Deterministic (mean) action for deployment and evaluation."""
        mean, _ = self.forward(observation)
        return mean

    # ---- backward ----

    def actor_backward(self, cache: dict, d_mean: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss wrt actor parameters given dL/dmean."""
        (w1, _), (w2, _), (w3, _) = self.actor
        x, h1, h2, mean = cache["x"], cache["h1"], cache["h2"], cache["mean"]
        dz3 = d_mean * (1.0 - mean ** 2)
        grads = {
            "actor_w2_out": h2.T @ dz3,
            "actor_b2_out": dz3.sum(axis=0),
        }
        dh2 = dz3 @ w3.T
        dz2 = dh2 * (1.0 - h2 ** 2)
        grads["actor_w1_h"] = h1.T @ dz2
        grads["actor_b1_h"] = dz2.sum(axis=0)
        dh1 = dz2 @ w2.T
        dz1 = dh1 * (1.0 - h1 ** 2)
        grads["actor_w0_in"] = x.T @ dz1
        grads["actor_b0_in"] = dz1.sum(axis=0)
        return grads

    def critic_backward(self, cache: dict, d_value: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss wrt critic parameters given dL/dvalue (B,)."""
        (w1, _), (w2, _), (w3, _) = self.critic
        x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
        dz3 = d_value[:, None]
        grads = {
            "critic_w2_out": h2.T @ dz3,
            "critic_b2_out": dz3.sum(axis=0),
        }
        dh2 = dz3 @ w3.T
        dz2 = dh2 * (1.0 - h2 ** 2)
        grads["critic_w1_h"] = h1.T @ dz2
        grads["critic_b1_h"] = dz2.sum(axis=0)
        dh1 = dz2 @ w2.T
        dz1 = dh1 * (1.0 - h1 ** 2)
        grads["critic_w0_in"] = x.T @ dz1
        grads["critic_b0_in"] = dz1.sum(axis=0)
        return grads

    # ---- parameter access ----

    _PARAM_KEYS = (
        "actor_w0_in", "actor_b0_in", "actor_w1_h", "actor_b1_h",
        "actor_w2_out", "actor_b2_out",
        "critic_w0_in", "critic_b0_in", "critic_w1_h", "critic_b1_h",
        "critic_w2_out", "critic_b2_out",
        "log_std",
    )

    @property
    def param_keys(self) -> tuple[str, ...]:
        return self._PARAM_KEYS

    def params(self) -> dict[str, np.ndarray]:
        """Live views of all trainable arrays, keyed like gradient dicts."""
        out = {}
        for i, (w, b) in enumerate(self.actor):
            suffix = ("in", "h", "out")[i]
            out[f"actor_w{i}_{suffix}"] = w
            out[f"actor_b{i}_{suffix}"] = b
        for i, (w, b) in enumerate(self.critic):
            suffix = ("in", "h", "out")[i]
            out[f"critic_w{i}_{suffix}"] = w
            out[f"critic_b{i}_{suffix}"] = b
        out["log_std"] = self.log_std
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params()[k].ravel() for k in self._PARAM_KEYS])

    def set_flat(self, flat: np.ndarray) -> None:
        params = self.params()
        offset = 0
        for key in self._PARAM_KEYS:
            arr = params[key]
            n = arr.size
            arr[...] = flat[offset:offset + n].reshape(arr.shape)
            offset += n
        if offset != flat.size:
            raise DimensionMismatch(f"flat vector has {flat.size} entries, expected {offset}")

    # ---- persistence ----

    def save(self, path: str | Path) -> None:
        """Versioned JSON checkpoint; floats round-trip exactly."""
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "layer_sizes": self.layer_sizes,
            "actor": [[w.tolist(), b.tolist()] for w, b in self.actor],
            "critic": [[w.tolist(), b.tolist()] for w, b in self.critic],
            "log_std": self.log_std.tolist(),
            "flops": self.flops.as_dict(),
        }
        atomic_write_text(Path(path), json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "Policy":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"unreadable checkpoint {path}: {exc}") from None
        if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ParseError(
                f"checkpoint format {payload.get('format_version')!r} unsupported",
                field="format_version",
            )
        try:
            return cls(
                layer_sizes=payload["layer_sizes"],
                actor=[(np.array(w), np.array(b)) for w, b in payload["actor"]],
                critic=[(np.array(w), np.array(b)) for w, b in payload["critic"]],
                log_std=np.array(payload["log_std"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed checkpoint {path}: {exc}") from None
