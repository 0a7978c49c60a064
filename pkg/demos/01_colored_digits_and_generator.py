"""Colored digits, the oracle generator, and synthetic OOD blends.

Run: python demos/01_colored_digits_and_generator.py
"""

import numpy as np

from osdg import OracleGenerator, SplitSpec, make_split
from osdg.generator import BlendSpec, blend_semantics
from osdg.glyphs import synth_digits
from osdg.numerics import rng_stream


def show(img, label=""):
    # crude terminal rendering of a 3x28x28 image: brightness from the channel max
    gray = img.max(axis=0)[::2, ::1]
    ramp = " .:-=+*#%@"
    print(label)
    for row in gray:
        print("".join(ramp[int(v * (len(ramp) - 1))] for v in row))


# procedural digits stand in for MNIST when no IDX files are around
raw = synth_digits(600, seed=0)
print("raw digits:", raw.images.shape, raw.images.dtype, "labels", np.bincount(raw.labels))

# three training hues, a held-out test hue, digits 7-9 as unknowns at test time
splits = make_split(raw, SplitSpec(n_train=200, n_test=100, seed=0))
train, test = splits["train"], splits["test"]
print("train domains:", np.bincount(train.domains), " test OOD share:",
      np.mean(test.labels == -1).round(3))

x = train.images[:4]
show(x[0], f"training sample, label {train.labels[0]}, domain {train.domains[0]}")

# the oracle generator splits an image into shape (semantic) and palette (variation)
G = OracleGenerator()
s, v = G.encode_semantic(x), G.encode_variation(x)
print("semantic code", s.shape, " palettes", v.round(3).tolist())
print("round trip error", np.abs(G.decode(s, v) - x).max())

# domain transfer keeps the shape and draws a new palette
moved = G.domain_transfer(x, rng_stream(1))
print("new palettes", G.encode_variation(moved).round(3).tolist())
print("shape unchanged:", np.abs(G.encode_semantic(moved) - s).max() == 0)

# blending two different digits gives material from neither class
a, b = 0, next(i for i in range(1, 4) if train.labels[i] != train.labels[0])
mix = blend_semantics(s[a], s[b], BlendSpec(0.8, -0.6))
show(G.decode(mix[None], v[a:a + 1])[0],
     f"blend 0.8*[{train.labels[a]}] - 0.6*[{train.labels[b]}]")

# the training loop draws blends like this one per batch
ood = G.synth_ood_batch(train.images[:32], train.labels[:32], rng_stream(2))
print("synthetic OOD batch", ood.shape, "pixel range", ood.min(), ood.max())
