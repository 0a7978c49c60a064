"""f = h(g(x)): ReLU MLP feature extractor g and a linear classifier head h.

g first rescales every input to a fixed total intensity (``ink``), so a
recolored glyph differs from the original only through how the first layer
weighs each color channel.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .numerics import Parameter, Tensor


class Network:
    def __init__(self, in_dim: int, hidden: tuple[int, ...], feature_dim: int,
                 num_classes: int, seed: int = 0, dtype=np.float64, ink: float = 100.0):
        rng = nx.rng_stream(seed)
        self.in_dim = in_dim
        self.hidden = tuple(hidden)
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.dtype = dtype
        self.ink = float(ink)  # 0 disables the intensity normalization
        sizes = (in_dim, *self.hidden, feature_dim)
        self.g_layers = [
            (Parameter(nx.glorot_uniform(a, b, rng, dtype), f"g.{i}.W"),
             Parameter(np.zeros(b, dtype), f"g.{i}.b"))
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.h_layer = (Parameter(nx.glorot_uniform(feature_dim, num_classes, rng, dtype), "h.W"),
                        Parameter(np.zeros(num_classes, dtype), "h.b"))

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.g_layers for p in layer] + list(self.h_layer)

    def state(self) -> dict[str, np.ndarray]:
        out = {p.name: p.data for p in self.parameters()}
        out["g.ink"] = np.array([self.ink])
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            value = np.asarray(state[p.name])
            if value.shape != p.shape:
                raise nx.ShapeError(f"{p.name}: checkpoint shape {value.shape} != {p.shape}")
            p.data = value.astype(self.dtype, copy=True)

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "Network":
        depth = sum(1 for k in state if k.startswith("g.") and k.endswith(".W"))
        dims = [state[f"g.{i}.W"].shape for i in range(depth)]
        ink = float(state["g.ink"][0]) if "g.ink" in state else 0.0
        net = cls(dims[0][0], tuple(d[1] for d in dims[:-1]), dims[-1][1],
                  state["h.W"].shape[1], dtype=state["h.W"].dtype, ink=ink)
        net.load_state(state)
        return net

    def normalize(self, x) -> np.ndarray:
        """[n, ...] images -> [n, in_dim] rows rescaled to total intensity ``ink``."""
        x = np.asarray(x, dtype=self.dtype)
        x = x.reshape(len(x), -1)
        if self.ink > 0:
            total = x.sum(axis=1, keepdims=True)
            x = x * (self.ink / np.maximum(total, 1e-6))
        return x

    def _flat(self, x) -> Tensor:
        if isinstance(x, Tensor):
            if x.requires_grad:
                raise nx.ContractError("network inputs must be constants")
            x = x.data
        return Tensor(self.normalize(x))

    def features(self, x) -> Tensor:
        """g: images [n, ...] -> nonnegative features [n, r]."""
        out = self._flat(x)
        for W, b in self.g_layers:
            out = nx.relu(nx.affine_forward(out, W, b))
        return out

    def head(self, feats: Tensor) -> Tensor:
        """h: features [n, r] -> logits [n, K]."""
        return nx.affine_forward(feats, *self.h_layer)

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        feats = self.features(x)
        return feats, self.head(feats)

    def predict(self, x, batch_size: int = 1024) -> tuple[np.ndarray, np.ndarray]:
        """Graph-free features and logits as numpy arrays."""
        x = np.asarray(x)
        feats, logits = [], []
        for start in range(0, len(x), batch_size):
            out = self.normalize(x[start:start + batch_size])
            for W, b in self.g_layers:
                out = np.maximum(out @ W.data + b.data, 0.0)
            feats.append(out)
            logits.append(out @ self.h_layer[0].data + self.h_layer[1].data)
        if not feats:
            return (np.zeros((0, self.feature_dim)), np.zeros((0, self.num_classes)))
        return np.concatenate(feats), np.concatenate(logits)
