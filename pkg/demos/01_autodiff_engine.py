"""Tour of the autodiff core: ops, gradients, and Adam.

Everything differentiable in this package runs on the little define-by-run
tape in spn.tensor: float64 numpy values, a closure per op for the backward
rule, and a dictionary of gradients out of `backward`. This script builds a
tiny MLP loss by hand, checks one gradient against finite differences, and
minimizes a quadratic with the Adam implementation.
"""

import numpy as np

from spn import tensor as T

rng = np.random.default_rng(0)

# a two-layer network on fixed inputs, cross-entropy against fixed targets
x = T.constant(rng.uniform(-1, 1, size=(6, 3)))
w1 = T.parameter(T.glorot_uniform(rng, 3, 8), name="w1")
b1 = T.parameter(np.zeros(8), name="b1")
w2 = T.parameter(T.glorot_uniform(rng, 8, 4), name="w2")
targets = T.constant(np.eye(4)[rng.integers(0, 4, size=6)])


def loss_fn():
    hidden = T.relu(T.matmul(x, w1) + b1)
    log_probs = T.log_softmax_rows(T.matmul(hidden, w2))
    return T.scalar_scale(T.reduce_sum(T.mul(log_probs, targets)), -1.0)


loss = loss_fn()
grads = T.backward(loss)
print(f"initial loss: {float(loss.values):.4f}")

# spot-check dL/dw2[0,0] against a central finite difference
h = 1e-6
w2.values[0, 0] += h
up = float(loss_fn().values)
w2.values[0, 0] -= 2 * h
down = float(loss_fn().values)
w2.values[0, 0] += h
numeric = (up - down) / (2 * h)
print(f"dL/dw2[0,0]: autodiff {grads[w2][0, 0]:.8f}, finite diff {numeric:.8f}")

# Adam drives the loss down
opt = T.Adam([w1, b1, w2], lr=0.05)
for step in range(200):
    loss = loss_fn()
    opt.step(T.backward(loss))
    if step % 50 == 0:
        print(f"step {step:3d}  loss {float(loss.values):.4f}")
print(f"final  loss {float(loss_fn().values):.4f}")
