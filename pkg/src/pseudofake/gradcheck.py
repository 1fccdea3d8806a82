"""Central finite-difference checks for every primitive and for the full detector."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

H = 1e-6
TOLERANCE = 1e-6


@dataclass
class GradCheck:
    name: str
    max_rel_error: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = H,
                 indices=None) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(a))))


def check(name: str, build: Callable[..., Tensor], inputs: list[Tensor],
          indices: dict[int, np.ndarray] | None = None) -> GradCheck:
    """Compare tape gradients of ``build(*inputs)`` (a scalar) with finite differences."""
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with ad.Tape() as tape:
        out = build(*inputs)
    tape.backward(out)

    def f():
        return build(*[t.detach() for t in inputs]).item()

    worst, n = 0.0, 0
    for k, t in enumerate(inputs):
        idx = None if indices is None else indices.get(k)
        num = numeric_grad(f, t.values, indices=idx)
        ana = t.grad
        if idx is not None:
            num, ana = num.reshape(-1)[idx], ana.reshape(-1)[idx]
        worst = max(worst, rel_error(ana, num))
        n += num.size
    return GradCheck(name, worst, n)


def _weighted(rng, shape):
    """A fixed random projection turning a tensor into a scalar loss."""
    w = Tensor(rng.standard_normal(shape))

    def project(y: Tensor) -> Tensor:
        return ad.sum_all(_mul_const(y, w.values))

    return project


def _mul_const(y: Tensor, c: np.ndarray) -> Tensor:
    return ad._emit(y.values * c, (y,), lambda g: (g * c,))


def primitive_checks(seed: int = 0) -> list[GradCheck]:
    rng = np.random.default_rng(seed)
    T = lambda *shape: Tensor(rng.standard_normal(shape))
    out = []

    proj = _weighted(rng, (4, 12))
    out.append(check("conv1d", lambda x, k: proj(ad.conv1d(x, k, 3)), [T(3, 42), T(4, 3, 7)]))
    proj = _weighted(rng, (5,))
    out.append(check("dense", lambda x, w, b: proj(ad.dense(x, w, b)), [T(6), T(5, 6), T(5)]))
    proj = _weighted(rng, (3, 8))
    # keep values away from the kink so differences stay on one side
    xr = T(3, 8)
    xr.values[np.abs(xr.values) < 1e-3] += 1e-2
    out.append(check("relu", lambda x: proj(ad.relu(x)), [xr]))
    proj = _weighted(rng, (3,))
    out.append(check("mean_pool", lambda x: proj(ad.mean_pool(x)), [T(3, 10)]))
    out.append(check("max_pool_global", lambda x: proj(ad.max_pool_global(x)), [T(3, 10)]))
    proj = _weighted(rng, (7,))
    out.append(check("concat", lambda a, b: proj(ad.concat(a, b)), [T(3), T(4)]))
    proj = _weighted(rng, (2,))
    out.append(check("softmax", lambda z: proj(ad.softmax(z)), [T(2)]))
    proj = _weighted(rng, (5,))
    out.append(check("softmax5", lambda z: proj(ad.softmax(z)), [T(5)]))
    for target in ((0.5, 0.5), (0.0, 1.0), (0.3, 0.7)):
        out.append(check(f"cross_entropy{target}",
                         lambda z, y=target: ad.cross_entropy(ad.softmax(z), y), [T(2)]))
    out.append(check("sum_all", lambda x: ad.sum_all(x), [T(4, 3)]))
    out.append(check("mean_of", lambda a, b: ad.mean_of([ad.sum_all(a), ad.sum_all(b)]), [T(3), T(2)]))
    proj = _weighted(rng, (2, 6))
    out.append(check("reshape", lambda x: proj(ad.reshape(x, (2, 6))), [T(12)]))
    return out


def model_checks(n: int = 20, seed: int = 0, coords: int = 60) -> list[GradCheck]:
    """Input and parameter gradients of cross-entropy(D(x), target) for random models.

    Clip lengths are drawn just above the minimum so that full input
    gradients stay cheap; ``coords`` parameter coordinates per tensor are checked.
    """
    from .model import MIN_LENGTH, init_model, probabilities

    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        model = init_model(int(rng.integers(0, 2**31)))
        x = Tensor(rng.uniform(-1.0, 1.0, int(rng.integers(MIN_LENGTH, MIN_LENGTH + 120))))
        a = rng.uniform()
        target = (a, 1.0 - a) if i % 3 else (0.5, 0.5)
        params = [Tensor(p.values.copy()) for p in model.params]

        def build(x, *ps, target=target, model=model):
            saved = model.params
            model.params = list(ps)
            try:
                return ad.cross_entropy(probabilities(model, x), target)
            finally:
                model.params = saved

        idx = {k + 1: rng.choice(p.size, size=min(coords, p.size), replace=False)
               for k, p in enumerate(params)}
        out.append(check(f"model[{i}]", build, [x, *params], idx))
    return out


def run_suite(seed: int = 0, n_models: int = 20) -> tuple[list[GradCheck], float]:
    t0 = time.perf_counter()
    results = primitive_checks(seed) + model_checks(n_models, seed)
    return results, time.perf_counter() - t0
