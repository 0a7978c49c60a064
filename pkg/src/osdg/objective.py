"""Training objective: cross-entropy + zeta1 * R_F + zeta2 * R_E.

R_F is the mean l1 distance between features of a sample and of its domain
transferred copy. R_E is a squared hinge pushing ID energies below the
margin gamma and synthetic-OOD energies above it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .datasets import OOD
from .generator import GenerativeModel
from .network import Network
from .numerics import ContractError, ShapeError, Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    zeta1: float = 0.1
    zeta2: float = 0.1
    gamma: float = -5.0
    temperature: float = 1.0

    def __post_init__(self):
        if self.zeta1 < 0 or self.zeta2 < 0:
            raise ValueError(f"loss weights must be nonnegative, got {self.zeta1}, {self.zeta2}")
        if not self.gamma < 0:
            raise ValueError(f"energy margin gamma must be negative, got {self.gamma}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class LossBreakdown:
    ce: float
    r_f: float
    r_e: float
    total: float
    objective: Tensor = field(repr=False, compare=False, default=None)

    def as_dict(self) -> dict[str, float]:
        return {"ce": self.ce, "r_f": self.r_f, "r_e": self.r_e, "total": self.total}


def l1_distance(a, b) -> Tensor:
    """Sum of |a - b| over the last axis (scalar for vectors, [n] for batches)."""
    a, b = nx.as_tensor(a), nx.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"l1_distance: shapes {a.shape} and {b.shape} differ")
    return nx.tabs(a - b).sum(axis=-1)


def r_feature(images, network: Network, G: GenerativeModel, rng: np.random.Generator,
              features: Tensor | None = None) -> Tensor:
    """Mean over the batch of ||g(x) - g(G(x, v'))||_1, one v' per sample.

    Gradient flows through both branches. ``features`` lets a caller reuse
    g(x) from its own forward pass.
    """
    images = np.asarray(images)
    if len(images) == 0:
        raise ContractError("r_feature needs a nonempty batch")
    transferred = G.domain_transfer(images, rng)
    if features is None:
        features = network.features(images)
    return l1_distance(features, network.features(transferred)).mean()


def energy(logits, temperature: float = 1.0) -> Tensor:
    """-T * logsumexp(logits / T) over the last axis; lower means more ID-like."""
    logits = nx.as_tensor(logits)
    return nx.logsumexp(logits * (1.0 / temperature), axis=-1) * (-temperature)


def r_energy(id_logits, ood_logits, weights: LossWeights) -> Tensor:
    """mean relu(E_id - gamma)^2 + mean relu(gamma - E_ood)^2.

    With no OOD logits the OOD term is dropped.
    """
    id_e = energy(id_logits, weights.temperature)
    term = nx.square(nx.relu(id_e - weights.gamma)).mean()
    if ood_logits is None or len(ood_logits) == 0:
        return term
    ood_e = energy(ood_logits, weights.temperature)
    return term + nx.square(nx.relu(weights.gamma - ood_e)).mean()


def total_loss(images, labels, ood_images, network: Network, G: GenerativeModel | None,
               weights: LossWeights, rng: np.random.Generator | None) -> LossBreakdown:
    """Evaluate the full objective on one ID batch and its synthetic-OOD batch.

    Synthetic OOD images enter only R_E. Passing ``G=None`` skips R_F (reported
    as 0); passing no OOD images reduces R_E to its ID half. A term whose weight
    is zero is reported but kept out of the differentiated objective.
    """
    labels = np.asarray(labels)
    if np.any(labels == OOD):
        raise ContractError("ID batch contains OOD-labeled samples")
    images = np.asarray(images)
    feats, logits = network(images)
    ce = nx.softmax_cross_entropy(logits, labels)
    objective = ce

    if G is not None:
        rf = r_feature(images, network, G, rng, features=feats)
        if weights.zeta1 > 0:
            objective = objective + weights.zeta1 * rf
        r_f = rf.item()
    else:
        r_f = 0.0

    ood_logits = None
    if ood_images is not None and len(ood_images):
        ood_logits = network(ood_images)[1]
    elif weights.zeta2 > 0:
        log.warning("empty synthetic-OOD batch: R_E uses the ID term only")
    re = r_energy(logits, ood_logits, weights)
    if weights.zeta2 > 0:
        objective = objective + weights.zeta2 * re
    r_e = re.item()

    total = ce.item() + weights.zeta1 * r_f + weights.zeta2 * r_e
    return LossBreakdown(ce.item(), r_f, r_e, total, objective)
