"""
Reverse-mode autodiff on numpy arrays
=====================================

Build a small graph, backpropagate, and compare against central finite
differences.
"""

import numpy as np

from tabdl import tensor as T
from tabdl.gradcheck import check_gradients, gradient_suite
from tabdl.tensor import Tensor

rng = np.random.default_rng(0)

# a one-hidden-layer block with a ReGLU activation
x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
b = Tensor(np.zeros(8), requires_grad=True)
loss = T.reglu(T.linear(x, w, b)).sum()
loss.backward()
print("loss:", loss.item())
print("d loss / d b:", np.round(b.grad, 4))

# the analytic gradient agrees with finite differences
err = check_gradients(lambda: T.reglu(T.linear(x, w, b)), [x, w, b])
print(f"max relative error vs finite differences: {err:.2e}")

# the full suite covers every primitive and the three model families
worst = gradient_suite(seeds=range(1))
for name in sorted(worst, key=worst.get, reverse=True)[:5]:
    print(f"  {name:>18}: {worst[name]:.2e}")
