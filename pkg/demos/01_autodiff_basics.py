"""
Gradients by tape
=================

A short walk through the reverse-mode engine: record a few ops, call
backward, and compare against central differences.
"""

import numpy as np

from pseudofake import autodiff as ad
from pseudofake.autodiff import Tape, Tensor
from pseudofake.gradcheck import check, run_suite

# a 1-channel signal and a 3-tap kernel
x = Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
k = Tensor([[[-1.0, 0.0, 1.0]]], requires_grad=True)

with Tape() as tape:
    y = ad.conv1d(ad.reshape(x, (1, 4)), k, 1)
    loss = ad.sum_all(ad.relu(y))

print("conv output     ", y.values)          # [[2, 2]]
tape.backward(loss)
print("d loss / d x    ", x.grad)            # [-1, -1, 1, 1]
print("d loss / d k    ", k.grad)

# soft targets: cross-entropy against (0.5, 0.5) has zero logit gradient at z = (c, c)
z = Tensor([0.3, 0.3], requires_grad=True)
with Tape() as tape:
    ce = ad.cross_entropy(ad.softmax(z), (0.5, 0.5))
tape.backward(ce)
print("CE at the boundary", ce.item(), "=", np.log(2), " grad", z.grad)

# finite differences on a composite
rng = np.random.default_rng(0)
res = check("dense+softmax",
            lambda a, w, b: ad.cross_entropy(ad.softmax(ad.dense(a, w, b)), (0.2, 0.8)),
            [Tensor(rng.standard_normal(5)), Tensor(rng.standard_normal((2, 5))), Tensor(rng.standard_normal(2))])
print(f"{res.name}: max rel err {res.max_rel_error:.1e}")

# the full suite the CLI runs with `pseudofake gradcheck`
results, seconds = run_suite(n_models=3)
print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {seconds:.1f}s")

# Adam with decoupled decay: the first step moves by lr * sign(g)
p = Tensor([0.7])
ad.adam_step([p], [np.array([-3.0])], ad.AdamState(), lr=1e-2, weight_decay=0.0)
print("after one Adam step", p.values)       # 0.71
