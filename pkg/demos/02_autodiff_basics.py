"""The reverse-mode tensor engine in five minutes.

Builds a tiny computation, checks its gradient against central
differences, and fits a two-layer network to a toy regression target
with the bundled Adam optimizer.
"""

import numpy as np

from csg import autodiff as ad
from csg import nn
from csg.autodiff import Tensor

# ------------------------------------------------------------- gradients
x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
y = ad.tsum(ad.tanh(x) * x + ad.exp(0.1 * x))
ad.backward(y)
print("dy/dx =", x.grad)

err = ad.gradient_check(lambda ts: ad.tsum(ad.tanh(ts[0]) * ts[0]), [x])
print(f"max relative error vs central differences: {err:.2e}")

# ------------------------------------------------------ a tiny regression
rng = np.random.default_rng(0)
ps = nn.ParamSet()
nn.add_linear(ps, rng, "fc1", 1, 16)
nn.add_linear(ps, rng, "fc2", 16, 1)
opt = nn.Optimizer(ps, algo="adam", lr=1e-2)

xs = np.linspace(-1, 1, 64)[:, None]
target = np.sin(3 * xs)

for step in range(400):
    ps.zero_grad()
    h = ad.tanh(nn.linear(ps, "fc1", Tensor(xs)))
    pred = nn.linear(ps, "fc2", h)
    diff = pred - Tensor(target)
    loss = ad.tmean(diff * diff)
    ad.backward(loss)
    opt.step()
    if step % 100 == 0 or step == 399:
        print(f"step {step:3d}  mse {float(loss.data):.5f}")
