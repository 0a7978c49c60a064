"""Disentangling generator: images <-> (semantic code, variation code).

Two implementations share one interface. :class:`OracleGenerator` inverts the
ColoredMNIST colorization exactly (semantic code = grayscale glyph, variation
code = max-normalized palette). :class:`LearnedGenerator` is a small fully
connected autoencoder trained with reconstruction and swap-consistency terms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .datasets import SIDE, ColoredSample, colorize
from .numerics import ContractError, Parameter, Tensor, TrainingError

log = logging.getLogger(__name__)

IMAGE_SHAPE = (3, SIDE, SIDE)
IMAGE_DIM = 3 * SIDE * SIDE


class DegenerateInputError(ValueError):
    pass


# ------------------------------------------------------------------- blending

@dataclass(frozen=True)
class BlendSpec:
    alpha: float
    beta: float
    alpha_range: tuple[float, float] = (-100.0, 100.0)
    beta_range: tuple[float, float] = (-100.0, 100.0)

    def __post_init__(self):
        lo, hi = self.alpha_range
        if not lo <= self.alpha <= hi:
            raise ValueError(f"alpha={self.alpha} outside {self.alpha_range}")
        lo, hi = self.beta_range
        if not lo <= self.beta <= hi:
            raise ValueError(f"beta={self.beta} outside {self.beta_range}")


@dataclass(frozen=True)
class BlendLaw:
    """How (alpha, beta) are drawn.

    ``signed_log_uniform``: magnitude log-uniform in ``magnitude``, random sign,
    then clipped to the ranges. ``uniform``: uniform over the ranges.
    """

    kind: str = "signed_log_uniform"
    magnitude: tuple[float, float] = (0.25, 4.0)
    alpha_range: tuple[float, float] = (-100.0, 100.0)
    beta_range: tuple[float, float] = (-100.0, 100.0)

    def __post_init__(self):
        if self.kind not in ("signed_log_uniform", "uniform"):
            raise ValueError(f"unknown blend law {self.kind!r}")
        if not 0 < self.magnitude[0] <= self.magnitude[1]:
            raise ValueError(f"bad magnitude interval {self.magnitude}")

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "uniform":
            a = rng.uniform(*self.alpha_range, size=size)
            b = rng.uniform(*self.beta_range, size=size)
            return a, b
        lo, hi = np.log(self.magnitude[0]), np.log(self.magnitude[1])
        mags = np.exp(rng.uniform(lo, hi, size=(2, size)))
        signs = np.where(rng.random((2, size)) < 0.5, -1.0, 1.0)
        a, b = mags * signs
        return np.clip(a, *self.alpha_range), np.clip(b, *self.beta_range)

    def sample(self, rng: np.random.Generator) -> BlendSpec:
        a, b = self.draw(rng, 1)
        return BlendSpec(float(a[0]), float(b[0]), self.alpha_range, self.beta_range)


def blend_semantics(s1, s2, spec: BlendSpec) -> np.ndarray:
    """alpha * s1 + beta * s2."""
    s1, s2 = np.asarray(s1), np.asarray(s2)
    if s1.shape != s2.shape:
        raise nx.ShapeError(f"semantic codes differ in shape: {s1.shape} vs {s2.shape}")
    if spec.beta == 0.0:
        return spec.alpha * s1 if spec.alpha != 1.0 else s1.copy()
    return spec.alpha * s1 + spec.beta * s2


def palette_from_normal(v: np.ndarray) -> np.ndarray:
    """Map N(0, I) draws [..., 3] to legal palettes: |v| / max|v|."""
    v = np.abs(np.asarray(v, dtype=float))
    peak = v.max(axis=-1, keepdims=True)
    return np.where(peak > 0, v / np.where(peak > 0, peak, 1.0), 1.0)


# -------------------------------------------------------------- common shape

class GenerativeModel:
    """Shared operations. Subclasses provide the encoders, decoder and v' law."""

    mode: str
    semantic_dim: int
    variation_dim: int

    def encode_semantic(self, x) -> np.ndarray:
        raise NotImplementedError

    def encode_variation(self, x) -> np.ndarray:
        raise NotImplementedError

    def decode(self, s, v) -> np.ndarray:
        raise NotImplementedError

    def sample_variation(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def domain_transfer(self, x, rng: np.random.Generator) -> np.ndarray:
        """Re-render ``x`` (one image or a batch) under freshly drawn variation codes."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 3
        batch = x[None] if single else x
        v = self.sample_variation(rng, len(batch))
        out = self.decode(self.encode_semantic(batch), v)
        return out[0] if single else out

    def synth_ood_batch(self, images, labels, rng: np.random.Generator,
                        law: BlendLaw = BlendLaw()) -> np.ndarray:
        """One synthetic OOD image per input, each blending it with a partner of a
        different label drawn from the same batch."""
        images = np.asarray(images, dtype=float)
        labels = np.asarray(labels)
        n = len(labels)
        if n == 0:
            return images[:0].copy()
        if np.all(labels == labels[0]):
            raise ContractError("synthetic OOD needs at least two distinct labels in the batch")
        partners = np.empty(n, dtype=np.int64)
        for i in range(n):
            choices = np.flatnonzero(labels != labels[i])
            partners[i] = choices[rng.integers(len(choices))]
        s = self.encode_semantic(images)
        alpha, beta = law.draw(rng, n)
        shape = (n,) + (1,) * (s.ndim - 1)
        blended = alpha.reshape(shape) * s + beta.reshape(shape) * s[partners]
        return self.decode(blended, self.sample_variation(rng, n))

    def synth_ood(self, x1: ColoredSample, x2: ColoredSample, rng: np.random.Generator,
                  law: BlendLaw = BlendLaw()) -> np.ndarray:
        if x1.label == x2.label:
            raise ContractError(f"both samples carry label {x1.label}; blending needs two classes")
        if x1.label < 0 or x2.label < 0:
            raise ContractError("synthetic OOD is built from ID samples only")
        spec = law.sample(rng)
        s = blend_semantics(self.encode_semantic(x1.image), self.encode_semantic(x2.image), spec)
        return self.decode(s, self.sample_variation(rng, 1)[0])


# --------------------------------------------------------------------- oracle

class OracleGenerator(GenerativeModel):
    """Exact inverse of :func:`osdg.datasets.colorize`."""

    mode = "oracle"
    semantic_dim = SIDE * SIDE
    variation_dim = 3

    def encode_semantic(self, x, palette=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = x.max(axis=-3)
        if palette is not None:
            s = s / np.max(palette)
        return s

    def encode_variation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        fg = x.max(axis=-3) > 0
        count = fg.sum(axis=(-2, -1))
        if np.any(count == 0):
            raise DegenerateInputError("all-black image has no foreground to read a palette from")
        mean_rgb = (x * fg[..., None, :, :]).sum(axis=(-2, -1)) / count[..., None]
        return mean_rgb / mean_rgb.max(axis=-1, keepdims=True)

    def decode(self, s, v) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] == SIDE * SIDE:
            s = s.reshape(s.shape[:-1] + (SIDE, SIDE))
        return np.clip(colorize(s, np.asarray(v, dtype=float)), 0.0, 1.0)

    def sample_variation(self, rng, n) -> np.ndarray:
        return palette_from_normal(rng.standard_normal((n, 3)))


class IdentityGenerator(OracleGenerator):
    """Stub whose domain transfer returns its input; handy for testing FSI terms."""

    def domain_transfer(self, x, rng) -> np.ndarray:
        return np.array(x, dtype=float, copy=True)


# -------------------------------------------------------------------- learned

class LearnedGenerator(GenerativeModel):
    """784x3 -> hidden -> (s, v) encoder; (s, v) -> hidden -> 784x3 decoder."""

    mode = "learned"

    def __init__(self, semantic_dim: int = 32, variation_dim: int = 8, hidden: int = 256,
                 seed: int = 0):
        rng = nx.rng_stream(seed)
        self.semantic_dim = semantic_dim
        self.variation_dim = variation_dim
        self.hidden = hidden

        def dense(name, fan_in, fan_out):
            return (Parameter(nx.glorot_uniform(fan_in, fan_out, rng), f"G.{name}.W"),
                    Parameter(np.zeros(fan_out), f"G.{name}.b"))

        self.enc = dense("enc", IMAGE_DIM, hidden)
        self.enc_s = dense("enc_s", hidden, semantic_dim)
        self.enc_v = dense("enc_v", hidden, variation_dim)
        self.dec_s = dense("dec_s", semantic_dim, hidden)
        self.dec_v = Parameter(nx.glorot_uniform(variation_dim, hidden, rng), "G.dec_v.W")
        self.dec_out = dense("dec_out", hidden, IMAGE_DIM)
        self.frozen = False

    def parameters(self) -> list[Parameter]:
        return [*self.enc, *self.enc_s, *self.enc_v, *self.dec_s, self.dec_v, *self.dec_out]

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray], frozen: bool = True) -> "LearnedGenerator":
        hidden = state["G.enc.W"].shape[1]
        G = cls(state["G.enc_s.W"].shape[1], state["G.enc_v.W"].shape[1], hidden)
        for p in G.parameters():
            if state[p.name].shape != p.shape:
                raise nx.ShapeError(f"{p.name}: shape {state[p.name].shape} != {p.shape}")
            p.data = np.array(state[p.name], dtype=float)
        return G.freeze() if frozen else G

    def freeze(self) -> "LearnedGenerator":
        for p in self.parameters():
            p.requires_grad = False
            p.zero_grad()
        self.frozen = True
        return self

    # graph-building forward passes
    def _hidden(self, x: Tensor) -> Tensor:
        return nx.relu(nx.affine_forward(x, *self.enc))

    def _encode(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = self._hidden(x)
        return nx.affine_forward(h, *self.enc_s), nx.affine_forward(h, *self.enc_v)

    def _decode(self, s: Tensor, v: Tensor) -> Tensor:
        # linear output; decode() clamps to [0, 1]
        h = nx.relu(nx.affine_forward(s, *self.dec_s) + v @ self.dec_v)
        return nx.affine_forward(h, *self.dec_out)

    def init_from_pca(self, images: np.ndarray) -> "LearnedGenerator":
        """Set the weights so the network starts as an exact linear PCA autoencoder.

        The leading ``semantic_dim`` components feed s and the next
        ``variation_dim`` feed v. Each component passes the ReLU layers as a
        (+, -) unit pair; leftover hidden units keep their random input weights
        and start with zero outgoing weights.
        """
        k = self.semantic_dim + self.variation_dim
        if self.hidden < 2 * k:
            raise ValueError(f"PCA start needs hidden >= {2 * k}, got {self.hidden}")
        flat = np.asarray(images, dtype=float).reshape(-1, IMAGE_DIM)
        mu = flat.mean(axis=0)
        _, _, vt = np.linalg.svd(flat - mu, full_matrices=False)
        P = np.zeros((k, IMAGE_DIM))
        P[:min(k, len(vt))] = vt[:k]
        pair = np.concatenate([np.eye(k), -np.eye(k)], axis=1)  # [k, 2k]

        W, b = self.enc
        W.data[:, :2 * k] = P.T @ pair
        b.data[:2 * k] = -(mu @ P.T) @ pair
        for (Wc, bc), lo, hi in ((self.enc_s, 0, self.semantic_dim),
                                 (self.enc_v, self.semantic_dim, k)):
            Wc.data[:] = 0.0
            Wc.data[:2 * k] = pair.T[:, lo:hi]
            bc.data[:] = 0.0
        W, b = self.dec_s
        W.data[:] = 0.0
        W.data[:, :2 * k] = pair[:self.semantic_dim]
        b.data[:] = 0.0
        self.dec_v.data[:] = 0.0
        self.dec_v.data[:, :2 * k] = pair[self.semantic_dim:]
        W, b = self.dec_out
        W.data[:] = 0.0
        W.data[:2 * k] = pair.T @ P
        b.data[:] = mu
        return self

    @staticmethod
    def _flat(x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 3
        return (x[None] if single else x).reshape(-1, IMAGE_DIM), single

    def encode_semantic(self, x) -> np.ndarray:
        flat, single = self._flat(x)
        s = nx.affine_forward(self._hidden(Tensor(flat)), *self.enc_s).data
        return s[0] if single else s

    def encode_variation(self, x) -> np.ndarray:
        flat, single = self._flat(x)
        v = nx.affine_forward(self._hidden(Tensor(flat)), *self.enc_v).data
        return v[0] if single else v

    def decode(self, s, v) -> np.ndarray:
        s, v = np.asarray(s, dtype=float), np.asarray(v, dtype=float)
        single = s.ndim == 1
        out = self._decode(Tensor(np.atleast_2d(s)), Tensor(np.atleast_2d(v))).data
        out = np.clip(out, 0.0, 1.0).reshape((-1,) + IMAGE_SHAPE)
        return out[0] if single else out

    def sample_variation(self, rng, n) -> np.ndarray:
        return rng.standard_normal((n, self.variation_dim))


@dataclass(frozen=True)
class GeneratorTrainConfig:
    semantic_dim: int = 32
    variation_dim: int = 8
    hidden: int = 256
    epochs: int = 5
    batch_size: int = 64
    lr: float = 1e-4
    swap_weight: float = 1.0
    seed: int = 0
    pca_init: bool = True  # plain SGD from random weights stalls at the all-black image


def generator_loss(G: LearnedGenerator, x: np.ndarray, perm: np.ndarray,
                   swap_weight: float) -> tuple[Tensor, float, float]:
    """Per-sample l1 reconstruction plus swap consistency: decode with another
    sample's variation code, re-encode, and match the semantic code."""
    flat = Tensor(x.reshape(len(x), IMAGE_DIM))
    s, v = G._encode(flat)
    recon = G._decode(s, v)
    rec = nx.tabs(recon - flat).sum(axis=1).mean()
    swapped = G._decode(s, v[perm])
    s_again, _ = G._encode(swapped)
    swap = nx.tabs(s_again - s).sum(axis=1).mean()
    total = rec + swap_weight * swap
    return total, rec.item(), swap.item()


def train_generator(images: np.ndarray, config: GeneratorTrainConfig = GeneratorTrainConfig()
                    ) -> LearnedGenerator:
    """Fit a LearnedGenerator with plain SGD and return it frozen."""
    G = LearnedGenerator(config.semantic_dim, config.variation_dim, config.hidden, config.seed)
    if config.pca_init:
        G.init_from_pca(images)
    rng = nx.rng_stream(nx.derive_seed(config.seed, 1))
    params = G.parameters()
    n = len(images)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        recs = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            perm = rng.permutation(len(idx))
            loss, rec, _ = generator_loss(G, images[idx], perm, config.swap_weight)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"generator loss diverged at epoch {epoch}")
            loss.backward()
            nx.sgd_step(params, config.lr)
            nx.zero_grad(params)
            recs.append(rec)
        log.info("generator epoch %d: l1 recon per image %.3f", epoch, float(np.mean(recs)))
    return G.freeze()


def reconstruction_error(G: GenerativeModel, images: np.ndarray) -> float:
    """Mean absolute error per pixel of decode(encode(x))."""
    recon = G.decode(G.encode_semantic(images), G.encode_variation(images))
    return float(np.mean(np.abs(recon - images)))


def make_generator(mode: str, **kwargs) -> GenerativeModel:
    if mode == "oracle":
        return OracleGenerator()
    if mode == "learned":
        return LearnedGenerator(**kwargs)
    raise ValueError(f"unknown generator mode {mode!r}")


__all__ = [
    "BlendLaw", "BlendSpec", "DegenerateInputError", "GenerativeModel", "GeneratorTrainConfig",
    "IdentityGenerator", "LearnedGenerator", "OracleGenerator", "blend_semantics",
    "generator_loss", "make_generator", "palette_from_normal", "reconstruction_error",
    "train_generator",
]
