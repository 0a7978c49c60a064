"""Post-hoc OOD scorers over a trained network. Every score is oriented so that
higher means more OOD."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, solve_triangular
from scipy.special import logsumexp

from .numerics import ContractError, softmax
from .objective import energy


class NumericError(ArithmeticError):
    pass


def energy_score(logits, temperature: float = 1.0) -> np.ndarray:
    return energy(np.asarray(logits, dtype=float), temperature).data


def msp_score(logits) -> np.ndarray:
    """1 - max softmax probability."""
    return 1.0 - softmax(np.asarray(logits, dtype=float), axis=-1).max(axis=-1)


@dataclass(frozen=True)
class GaussianClassDensity:
    means: np.ndarray  # [K, r]
    cov: np.ndarray  # [r, r], pooled within-class scatter + ridge
    priors: np.ndarray  # [K]
    chol: np.ndarray  # lower-triangular factor of cov
    classes: np.ndarray  # label of each row of means
    ridge: float

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.log(np.diag(self.chol)).sum())


def fit_gaussian_density(features, labels, ridge: float = 1e-3) -> GaussianClassDensity:
    """Class means, pooled covariance + ridge * I, class-frequency priors."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    n, r = features.shape
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        raise ValueError(f"each class needs >= 2 samples; counts {dict(zip(classes, counts))}")
    means = np.stack([features[labels == c].mean(axis=0) for c in classes])
    centred = features - means[np.searchsorted(classes, labels)]
    cov = centred.T @ centred / n + ridge * np.eye(r)
    cov = 0.5 * (cov + cov.T)
    try:
        chol, _ = cho_factor(cov, lower=True)
    except LinAlgError as exc:
        raise NumericError(
            f"covariance is not positive definite with ridge={ridge}; try a larger ridge") from exc
    chol = np.tril(chol)
    priors = counts / counts.sum()
    return GaussianClassDensity(means, cov, priors, chol, classes, ridge)


def class_log_densities(model: GaussianClassDensity, features) -> np.ndarray:
    """log N(feature; mu_k, Sigma) for every class, shape [n, K]."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    r = x.shape[1]
    diff = x[:, None, :] - model.means[None, :, :]  # [n, K, r]
    z = solve_triangular(model.chol, diff.reshape(-1, r).T, lower=True)
    maha = (z ** 2).sum(axis=0).reshape(len(x), -1)
    return -0.5 * (maha + model.log_det + r * math.log(2 * math.pi))


def gaussian_density_score(model: GaussianClassDensity, features) -> np.ndarray:
    """-log sum_k pi_k N(feature; mu_k, Sigma)."""
    features = np.asarray(features, dtype=float)
    lp = class_log_densities(model, features) + np.log(model.priors)
    out = -logsumexp(lp, axis=1)
    return out[0] if features.ndim == 1 else out


# --------------------------------------------------------------- interface

class Detector:
    kind = "base"
    requires_fit = False

    def fit(self, features, labels) -> "Detector":
        raise ContractError(f"{self.kind} detector has no fitted state")

    @property
    def state(self):
        raise ContractError(f"{self.kind} detector has no fitted state")

    def score(self, features, logits) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class EnergyDetector(Detector):
    kind = "energy"

    def __init__(self, temperature: float = 1.0):
        self.temperature = temperature

    def score(self, features, logits):
        return energy_score(logits, self.temperature)


class MSPDetector(Detector):
    kind = "msp"

    def score(self, features, logits):
        return msp_score(logits)


class GaussianDensityDetector(Detector):
    """DDU-style density over g's features."""

    kind = "ddu"
    requires_fit = True

    def __init__(self, ridge: float = 1e-3):
        self.ridge = ridge
        self._model: GaussianClassDensity | None = None

    def fit(self, features, labels):
        self._model = fit_gaussian_density(features, labels, self.ridge)
        return self

    @property
    def state(self) -> GaussianClassDensity:
        if self._model is None:
            raise ContractError("ddu detector used before fit()")
        return self._model

    def score(self, features, logits):
        return gaussian_density_score(self.state, features)


class OCSVMDetector(Detector):
    """Slot for a one-class SVM over features; no solver ships with this package."""

    kind = "ocsvm"
    requires_fit = True

    def fit(self, features, labels):
        raise NotImplementedError("one-class SVM detector is not implemented")

    def score(self, features, logits):
        raise NotImplementedError("one-class SVM detector is not implemented")


_KINDS = {
    "energy": EnergyDetector,
    "msp": MSPDetector,
    "ddu": GaussianDensityDetector,
    "gaussian_density": GaussianDensityDetector,
    "ocsvm": OCSVMDetector,
}


def make_detector(kind: str, **kwargs) -> Detector:
    try:
        return _KINDS[kind](**kwargs)
    except KeyError:
        raise ValueError(f"unknown detector {kind!r}; choose from {sorted(_KINDS)}") from None


# -------------------------------------------------------- feature/logit dump

def write_feature_dump(path, labels, features, logits) -> None:
    """[n u32][r u32][K u32] then per sample [label i32][r f64][K f64], little-endian."""
    labels = np.asarray(labels, dtype="<i4")
    features = np.asarray(features, dtype="<f8")
    logits = np.asarray(logits, dtype="<f8")
    n, r = features.shape
    k = logits.shape[1]
    rec = np.dtype([("label", "<i4"), ("feature", "<f8", (r,)), ("logits", "<f8", (k,))])
    arr = np.empty(n, dtype=rec)
    arr["label"], arr["feature"], arr["logits"] = labels, features, logits
    with open(path, "wb") as f:
        f.write(struct.pack("<3I", n, r, k))
        f.write(arr.tobytes())


def read_feature_dump(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise ValueError(f"{path}: truncated header")
    n, r, k = struct.unpack("<3I", raw[:12])
    rec = np.dtype([("label", "<i4"), ("feature", "<f8", (r,)), ("logits", "<f8", (k,))])
    if len(raw) - 12 != n * rec.itemsize:
        raise ValueError(f"{path}: {len(raw) - 12} payload bytes, expected {n * rec.itemsize}")
    arr = np.frombuffer(raw, dtype=rec, offset=12, count=n)
    return (arr["label"].astype(np.int64), arr["feature"].reshape(n, r).copy(),
            arr["logits"].reshape(n, k).copy())
