"""The numpy autograd engine and the three loss terms.

Run: python demos/02_autograd_and_objective.py
"""

import numpy as np

from osdg import LossWeights, Network, OracleGenerator, SplitSpec, make_split, total_loss
from osdg import numerics as nx
from osdg.glyphs import synth_digits
from osdg.objective import energy

# a scalar function and its gradient
w = nx.Parameter(np.array([0.5, -1.0, 2.0]), name="w")
loss = (w * w).sum() + nx.relu(w).sum()
loss.backward()
print("loss", loss.item(), " grad", w.grad, " (2w + 1[w>0])")

# energy is -T log sum exp(z / T); confident rows get very negative energies
print("energy of [0, 0]:", energy([0.0, 0.0]).item(), " of [9, 0]:", energy([9.0, 0.0]).item())

raw = synth_digits(400, seed=3)
tr = make_split(raw, SplitSpec(n_train=64, n_test=10, seed=0))["train"]
x, y = tr.images[:16], tr.labels[:16]

G = OracleGenerator()
rng = nx.rng_stream(0)
ood = G.synth_ood_batch(x, y, rng)
net = Network(3 * 28 * 28, (32,), 16, 7, seed=0)

# cross-entropy + zeta1 * feature invariance + zeta2 * energy margins
b = total_loss(x, y, ood, net, G, LossWeights(zeta1=0.1, zeta2=0.1), rng)
print(f"ce {b.ce:.4f}  r_f {b.r_f:.4f}  r_e {b.r_e:.4f}  total {b.total:.4f}")

# gradients against central differences; biases off zero so no unit sits on a ReLU kink
for p in net.parameters():
    if p.name.endswith(".b"):
        p.data[:] = 0.1
w8 = LossWeights(0.5, 0.5, gamma=-1.0)
err = nx.grad_check(lambda: total_loss(x[:8], y[:8], ood[:8], net, G, w8, nx.rng_stream(4)).objective,
                    net.parameters(), max_coords=20)
print(f"max relative gradient error {err:.2e}")

# a few SGD steps on the full objective
for step in range(5):
    b = total_loss(x, y, ood, net, G, LossWeights(0.1, 0.1), nx.rng_stream(step))
    b.objective.backward()
    nx.sgd_step(net.parameters(), 0.05)
    nx.zero_grad(net.parameters())
    print("step", step, "total", round(b.total, 4))
