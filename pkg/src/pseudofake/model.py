"""Small raw-waveform detector: two strided convolutions, global pooling, two dense layers.

The waveform first passes a fixed (non-trainable) front-end that stacks
the raw signal with a scaled pre-emphasised copy, so the first convolution
sees two channels.  The front-end is an ordinary convolution with a
constant kernel, so gradients w.r.t. the input flow through it.

Class order is always (real, fake).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

ARCHITECTURE = "preemph2-conv9s4x8-conv9s4x32-meanmax-fc32-fc2"
PREEMPHASIS = 0.97
PREEMPHASIS_GAIN = 4.0
# channel 0: x[n+1]; channel 1: gain * (x[n+1] - 0.97 x[n])
FRONT_END = np.array([[[0.0, 1.0]],
                      [[-PREEMPHASIS_GAIN * PREEMPHASIS, PREEMPHASIS_GAIN]]])
KERNEL = 9
STRIDE = 4
CONV1_CHANNELS = 8
CONV2_CHANNELS = 32
HIDDEN = 32
MIN_LENGTH = 145
CHECKPOINT_MAGIC = b"PFCK"

# (name, shape, fan_in)
LAYOUT: tuple[tuple[str, tuple[int, ...], int], ...] = (
    ("conv1", (CONV1_CHANNELS, 2, KERNEL), 2 * KERNEL),
    ("conv2", (CONV2_CHANNELS, CONV1_CHANNELS, KERNEL), CONV1_CHANNELS * KERNEL),
    ("fc1_w", (HIDDEN, 2 * CONV2_CHANNELS), 2 * CONV2_CHANNELS),
    ("fc1_b", (HIDDEN,), 2 * CONV2_CHANNELS),
    ("fc2_w", (2, HIDDEN), HIDDEN),
    ("fc2_b", (2,), HIDDEN),
)


@dataclass(frozen=True)
class PredictionPair:
    p_real: float
    p_fake: float
    logits: tuple[float, float] | None = None

    def as_array(self) -> np.ndarray:
        return np.array([self.p_real, self.p_fake])


@dataclass
class DetectorModel:
    params: list[Tensor]
    seed: int
    epoch: int = 0
    names: tuple[str, ...] = field(default=tuple(n for n, _, _ in LAYOUT))

    def __getitem__(self, name: str) -> Tensor:
        return self.params[self.names.index(name)]

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.values.reshape(-1) for p in self.params])

    def copy(self) -> "DetectorModel":
        return DetectorModel([Tensor(p.values.copy(), requires_grad=p.requires_grad)
                              for p in self.params], self.seed, self.epoch)

    def load_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_parameters:
            raise ShapeError(f"parameter block has {flat.size} values, model needs {self.n_parameters}")
        offset = 0
        for p in self.params:
            n = p.size
            p.values = flat[offset:offset + n].reshape(p.shape).copy()
            offset += n


def init_model(seed: int) -> DetectorModel:
    """Uniform(-a, a) init with a = sqrt(1/fan_in), drawn from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    params = []
    for _, shape, fan_in in LAYOUT:
        a = np.sqrt(1.0 / fan_in)
        params.append(Tensor(rng.uniform(-a, a, size=shape), requires_grad=True))
    return DetectorModel(params, int(seed))


def check_length(n: int) -> None:
    if n < MIN_LENGTH:
        raise ShapeError(f"clip has {n} samples; the detector needs at least {MIN_LENGTH}")


def logits(model: DetectorModel, x: Tensor, *, track_params: bool = True) -> Tensor:
    """Pre-softmax scores for a 1-D waveform tensor.

    With ``track_params=False`` the parameters enter the graph detached, so a
    backward pass only reaches ``x``.
    """
    if x.values.ndim != 1:
        raise ShapeError(f"detector input must be 1-D, got shape {x.shape}")
    check_length(x.size)
    p = model.params if track_params else [q.detach() for q in model.params]
    conv1, conv2, w1, b1, w2, b2 = p
    h = ad.conv1d(ad.reshape(x, (1, x.size)), Tensor(FRONT_END), 1)
    h = ad.relu(ad.conv1d(h, conv1, STRIDE))
    h = ad.relu(ad.conv1d(h, conv2, STRIDE))
    h = ad.concat(ad.mean_pool(h), ad.max_pool_global(h))
    h = ad.relu(ad.dense(h, w1, b1))
    return ad.dense(h, w2, b2)


def probabilities(model: DetectorModel, x: Tensor, *, track_params: bool = True) -> Tensor:
    return ad.softmax(logits(model, x, track_params=track_params))


def forward(model: DetectorModel, clip) -> PredictionPair:
    """Predict (p_real, p_fake) for one waveform; no gradient is recorded."""
    x = clip if isinstance(clip, Tensor) else Tensor(clip)
    z = logits(model, x.detach(), track_params=False)
    s = ad.softmax(z.detach()).values
    return PredictionPair(float(s[0]), float(s[1]), (float(z.values[0]), float(z.values[1])))


def detection_score(pred) -> float:
    """Real-minus-fake logit; higher means more likely bona fide.

    Accepts a :class:`PredictionPair` or a length-2 logit sequence.  For a
    pair without stored logits the log-probability ratio is used, which is
    the same quantity.
    """
    if isinstance(pred, PredictionPair):
        if pred.logits is not None:
            return float(pred.logits[0] - pred.logits[1])
        return float(np.log(pred.p_real) - np.log(pred.p_fake))
    z = np.asarray(pred.values if isinstance(pred, Tensor) else pred, dtype=np.float64)
    return float(z[0] - z[1])


# ---------------------------------------------------------------- checkpoints
#
# Layout: b"PFCK" | uint32 LE header length N | N bytes UTF-8 JSON header |
# float64 LE parameter block, layers concatenated in LAYOUT order (C order).


def save_checkpoint(model: DetectorModel, path, extra: dict | None = None) -> Path:
    path = Path(path)
    header = {
        "architecture": ARCHITECTURE,
        "seed": model.seed,
        "epoch": model.epoch,
        "layers": [{"name": n, "shape": list(s)} for n, s, _ in LAYOUT],
        "n_parameters": model.n_parameters,
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    body = model.flat_parameters().astype("<f8").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", len(blob)) + blob + body)
    return path


def load_checkpoint(path) -> DetectorModel:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a detector checkpoint")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + n].decode("utf-8"))
    if header.get("architecture") != ARCHITECTURE:
        raise ValueError(f"{path}: architecture {header.get('architecture')!r} != {ARCHITECTURE!r}")
    flat = np.frombuffer(data[8 + n:], dtype="<f8").astype(np.float64)
    model = init_model(header["seed"])
    model.load_flat(flat)
    model.epoch = int(header.get("epoch", 0))
    return model
