"""Pseudo-fake generation and per-sample mixing into training batches.

Three generators are provided:

* ``targeted_ambiguous``: one signed-gradient step that lowers the loss
  towards the (0.5, 0.5) target, i.e. towards the detector's boundary.
* ``targeted_fake``: the same step towards a confident (0, 1) target.
* ``untargeted_gaussian``: additive white Gaussian noise.

Every augmented waveform is labelled fake, whatever its source label.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import DetectorModel, probabilities

log = logging.getLogger(__name__)

STRATEGIES = ("none", "untargeted_gaussian", "targeted_fake", "targeted_ambiguous")
FAKE = (0.0, 1.0)

# incremented on every augment_batch call; scoring paths assert it stays put
CALL_COUNTER = {"augment_batch": 0}


@dataclass(frozen=True)
class AugmentationConfig:
    strategy: str = "none"
    p: float = 0.0
    epsilon_min: float = 0.01
    epsilon_max: float = 0.7
    sigma_min: float = 0.01
    sigma_max: float = 1.0
    apply_to: str = "all_samples"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 <= self.epsilon_min <= self.epsilon_max:
            raise ValueError(f"need 0 <= epsilon_min <= epsilon_max, got {self.epsilon_min}, {self.epsilon_max}")
        if not 0.0 <= self.sigma_min <= self.sigma_max:
            raise ValueError(f"need 0 <= sigma_min <= sigma_max, got {self.sigma_min}, {self.sigma_max}")
        if self.apply_to not in ("all_samples", "real_only"):
            raise ValueError(f"apply_to must be 'all_samples' or 'real_only', got {self.apply_to!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Perturbation:
    delta: np.ndarray
    magnitude_used: float


@dataclass
class AugmentedSample:
    waveform: np.ndarray
    label: tuple[float, float]
    source_id: str
    strategy: str
    magnitude_used: float


def ambiguous_target() -> tuple[float, float]:
    return (0.5, 0.5)


def confident_fake_target() -> tuple[float, float]:
    return (0.0, 1.0)


def _check_target(target) -> np.ndarray:
    y = np.asarray(target, dtype=np.float64)
    if y.shape != (2,) or np.any(y < 0) or abs(y.sum() - 1.0) > ad.SIMPLEX_TOL:
        raise ValueError(f"target {target!r} is not a probability pair")
    return y


def input_gradient(clip, model: DetectorModel, target) -> tuple[np.ndarray, float]:
    """Gradient of cross-entropy(D(x), target) w.r.t. the waveform, and the loss.

    Parameters enter detached, so no gradient reaches (or is left on) them.
    """
    y = _check_target(target)
    x = Tensor(np.array(clip, dtype=np.float64), requires_grad=True)
    with ad.Tape() as tape:
        loss = ad.cross_entropy(probabilities(model, x, track_params=False), y)
    tape.backward(loss)
    return x.grad, loss.item()


def perturbation_from_gradient(grad: np.ndarray, epsilon: float) -> Perturbation:
    """``-epsilon * sign(grad)`` with sign(0) = 0."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return Perturbation(-epsilon * np.sign(grad), float(epsilon))


def targeted_perturbation(clip, model: DetectorModel, target, epsilon: float) -> Perturbation:
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    grad, _ = input_gradient(clip, model, target)
    return perturbation_from_gradient(grad, epsilon)


def gaussian_perturbation(clip, sigma: float, rng: np.random.Generator) -> Perturbation:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    n = np.asarray(clip).size
    return Perturbation(sigma * rng.standard_normal(n), float(sigma))


def sample_magnitude(lo: float, hi: float, rng: np.random.Generator) -> float:
    if lo < 0 or lo > hi:
        raise ValueError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def sample_stream(seed: np.random.SeedSequence | int, index: int) -> np.random.Generator:
    """Philox stream for one batch position; independent of evaluation order."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(index),))
    return np.random.Generator(np.random.Philox(child))


def _label_is_real(label) -> bool:
    if isinstance(label, str):
        return label == "real"
    return float(label[0]) > float(label[1])


def augment_one(waveform, model: DetectorModel, config: AugmentationConfig,
                rng: np.random.Generator, source_id: str = "") -> AugmentedSample:
    if config.strategy == "untargeted_gaussian":
        sigma = sample_magnitude(config.sigma_min, config.sigma_max, rng)
        pert = gaussian_perturbation(waveform, sigma, rng)
    else:
        target = ambiguous_target() if config.strategy == "targeted_ambiguous" else confident_fake_target()
        eps = sample_magnitude(config.epsilon_min, config.epsilon_max, rng)
        pert = targeted_perturbation(waveform, model, target, eps)
    x = np.asarray(waveform, dtype=np.float64)
    return AugmentedSample(x + pert.delta, FAKE, source_id, config.strategy, pert.magnitude_used)


def augment_batch(batch: Sequence[tuple], model: DetectorModel, config: AugmentationConfig,
                  rng: np.random.SeedSequence | int, dump=None) -> list[tuple]:
    """Replace each eligible sample by a pseudo-fake with probability ``config.p``.

    ``batch`` holds ``(waveform, label)`` or ``(waveform, label, clip_id)``
    tuples; labels are one-hot pairs or "real"/"fake".  Replaced entries come
    back as ``(waveform, (0.0, 1.0), clip_id)`` with the source's id; the rest
    are returned unchanged.  Position ``i`` draws from ``sample_stream(rng, i)``,
    so results do not depend on processing order.
    """
    CALL_COUNTER["augment_batch"] += 1
    if config.p == 0.0:
        return list(batch)
    if config.strategy == "none":
        warnings.warn("augmentation strategy 'none' with p > 0; batch passes through", stacklevel=2)
        return list(batch)
    out = []
    for i, item in enumerate(batch):
        waveform, label = item[0], item[1]
        source_id = item[2] if len(item) > 2 else str(i)
        stream = sample_stream(rng, i)
        chosen = stream.random() < config.p
        eligible = config.apply_to == "all_samples" or _label_is_real(label)
        if not (chosen and eligible):
            out.append(item)
            continue
        aug = augment_one(waveform, model, config, stream, source_id)
        if dump is not None:
            dump.write(aug)
        out.append((aug.waveform, aug.label, source_id))
    return out


class AugmentationDump:
    """Debug sink: one ``.f64`` waveform per augmented sample + JSON-lines provenance."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._index = open(self.dir / "provenance.jsonl", "a")
        self._n = 0
        self.tag = ""

    def write(self, aug: AugmentedSample) -> None:
        name = f"{self.tag}{self._n:07d}.f64"
        self._n += 1
        (self.dir / name).write_bytes(aug.waveform.astype("<f8").tobytes())
        self._index.write(json.dumps({
            "file": name, "source_id": aug.source_id, "strategy": aug.strategy,
            "magnitude_used": aug.magnitude_used, "label": list(aug.label),
        }, sort_keys=True) + "\n")

    def close(self) -> None:
        self._index.close()
