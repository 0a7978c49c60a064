"""Open-set domain generalization with feature-space semantic invariance.

Train a feature extractor whose outputs do not move when an image is
re-rendered in another domain, bound its energies against synthetic OOD
blends, and score unknown classes with post-hoc detectors.
"""

from .datasets import ColoredSample, ColoredSet, DomainSpec, SplitSpec, colorize, load_idx, \
    make_split
from .generator import BlendLaw, BlendSpec, LearnedGenerator, OracleGenerator, blend_semantics
from .network import Network
from .objective import LossBreakdown, LossWeights, energy, r_energy, r_feature, total_loss

__version__ = "0.1.0"

__all__ = [
    "BlendLaw", "BlendSpec", "ColoredSample", "ColoredSet", "DomainSpec", "LearnedGenerator",
    "LossBreakdown", "LossWeights", "Network", "OracleGenerator", "SplitSpec",
    "blend_semantics", "colorize", "energy", "load_idx", "make_split", "r_energy", "r_feature",
    "total_loss",
]
