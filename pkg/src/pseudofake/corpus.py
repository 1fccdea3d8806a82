"""Deterministic synthetic corpus: harmonic "real" clips and ten spoof families.

Attacks T01-T04 appear in train/dev; T05-T10 only in eval, so the eval split
measures generalisation to corruption types never seen during training.

On disk a corpus is a directory with ``manifest.json`` at the root and one
headerless little-endian float64 file per clip under ``<split>/<clip_id>.f64``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 8000
CLIP_LENGTH = 4000
MANIFEST_VERSION = 1
SEEN_ATTACKS = ("T01", "T02", "T03", "T04")
UNSEEN_ATTACKS = ("T05", "T06", "T07", "T08", "T09", "T10")
ATTACKS = SEEN_ATTACKS + UNSEEN_ATTACKS
SPLITS = ("train", "dev", "eval")

# split -> (real clips, fake clips per attack)
DEFAULT_COUNTS = {"train": (400, 100), "dev": (100, 25), "eval": (200, 100)}


class CorpusError(ValueError):
    pass


@dataclass
class Clip:
    clip_id: str
    samples: np.ndarray
    label: str = "real"
    attack_id: str = "none"
    split: str = "train"
    seed: int = 0
    sample_rate: int = SAMPLE_RATE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.label == "real") != (self.attack_id == "none"):
            raise CorpusError(f"{self.clip_id}: label {self.label!r} inconsistent with attack {self.attack_id!r}")

    @property
    def one_hot(self) -> tuple[float, float]:
        return (1.0, 0.0) if self.label == "real" else (0.0, 1.0)


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def derive_seed(*key: int) -> int:
    """Counter-derived 63-bit seed, e.g. ``derive_seed(master, split_idx, i)``."""
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------- real clips


def real_components(seed: int, length: int = CLIP_LENGTH) -> dict:
    """Unnormalised pieces of a real clip: harmonic part, noise floor and f0."""
    rng = _rng(seed, 0)
    sr = SAMPLE_RATE
    t = np.arange(length) / sr
    f0 = rng.uniform(80.0, 300.0)
    n_harm = int(rng.integers(4, 9))
    vib_phase = rng.uniform(0, 2 * np.pi)
    inst_f = f0 * (1.0 + 0.02 * np.sin(2 * np.pi * 5.0 * t + vib_phase))
    phase = 2 * np.pi * np.cumsum(inst_f) / sr
    harm = np.zeros(length)
    for k in range(1, n_harm + 1):
        harm += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k

    attack_s = rng.uniform(0.005, 0.03)
    decay_tau = rng.uniform(0.05, 0.15)
    env = np.where(t < attack_s, t / attack_s, np.exp(-(t - attack_s) / decay_tau))
    harm *= env

    # 1/f power shaping of white noise, scaled to -30 dB of the harmonic RMS
    spec = np.fft.rfft(rng.standard_normal(length))
    freqs = np.fft.rfftfreq(length, 1.0 / sr)
    spec /= np.sqrt(np.maximum(freqs, freqs[1]))
    noise = np.fft.irfft(spec, n=length)
    noise *= _rms(harm) * 10 ** (-30 / 20) / _rms(noise)
    return {"harmonic": harm, "noise": noise, "f0": float(f0), "n_harmonics": n_harm}


def synth_real(seed: int, length: int = CLIP_LENGTH, clip_id: str | None = None,
               split: str = "train") -> Clip:
    parts = real_components(seed, length)
    x = parts["harmonic"] + parts["noise"]
    x = 0.9 * x / np.max(np.abs(x))
    return Clip(clip_id or f"real_{seed}", x, "real", "none", split, int(seed),
                meta={"f0": parts["f0"], "n_harmonics": parts["n_harmonics"]})


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


# ---------------------------------------------------------------- attacks


def quantize(x: np.ndarray, bits: int) -> np.ndarray:
    """Round to the nearest of 2**bits uniform levels spanning [-1, 1]."""
    step = 2.0 / (2 ** bits - 1)
    return np.clip(np.round((x + 1.0) / step), 0, 2 ** bits - 1) * step - 1.0


def moving_average(x: np.ndarray, width: int) -> np.ndarray:
    return np.convolve(x, np.ones(width) / width, mode="same")


def hard_clip(x: np.ndarray, level: float) -> np.ndarray:
    return np.clip(x, -level, level)


def down_up_resample(x: np.ndarray, factor: int) -> np.ndarray:
    idx = np.arange(x.size)
    kept = idx[::factor]
    return np.interp(idx, kept, x[kept])


def notch(x: np.ndarray, f0: float, periods: float = 2.0) -> np.ndarray:
    """Remove the band around ``f0``: demodulate, moving-average, remodulate, subtract."""
    n = np.arange(x.size)
    carrier = np.exp(-2j * np.pi * f0 * n / SAMPLE_RATE)
    width = max(2, int(round(periods * SAMPLE_RATE / f0)))
    base = np.convolve(x * carrier, np.ones(width) / width, mode="same")
    return x - 2.0 * np.real(base * np.conj(carrier))


def echo(x: np.ndarray, delay: int, gain: float) -> np.ndarray:
    y = x.copy()
    y[delay:] += gain * x[:-delay]
    return y


def _estimate_f0(x: np.ndarray) -> float:
    mag = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, 1.0 / SAMPLE_RATE)
    band = (freqs >= 60) & (freqs <= 400)
    return float(freqs[band][np.argmax(mag[band])])


def apply_attack(clip: Clip, attack_id: str, seed: int) -> Clip:
    if attack_id not in ATTACKS:
        raise CorpusError(f"unknown attack {attack_id!r}; expected one of {ATTACKS}")
    if clip.label != "real":
        raise CorpusError(f"{clip.clip_id}: attacks apply to real clips only")
    rng = _rng(seed, 1)
    x = clip.samples
    n = x.size
    sr = SAMPLE_RATE
    params: dict = {}

    if attack_id == "T01":
        params["bits"] = int(rng.integers(4, 7))
        y = quantize(x, params["bits"])
    elif attack_id == "T02":
        params["width"] = int(rng.integers(8, 17))
        y = moving_average(x, params["width"])
    elif attack_id == "T03":
        t = np.arange(n) / sr
        hum = sum(np.sin(2 * np.pi * 50.0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in (1, 2, 3))
        y = x + hum * (10 ** (-20 / 20) / _rms(hum))  # -20 dBFS RMS
    elif attack_id == "T04":
        seg = int(0.025 * sr)
        n_seg = n // seg
        order = rng.permutation(n_seg)
        head = x[:n_seg * seg].reshape(n_seg, seg)[order].reshape(-1)
        y = np.concatenate([head, x[n_seg * seg:]])
    elif attack_id == "T05":
        params["level"] = float(rng.uniform(0.3, 0.5))
        y = hard_clip(x, params["level"])
    elif attack_id == "T06":
        params["factor"] = int(rng.integers(2, 5))
        y = down_up_resample(x, params["factor"])
    elif attack_id == "T07":
        f0 = clip.meta.get("f0") or _estimate_f0(x)
        y = notch(x, f0)
    elif attack_id == "T08":
        w = rng.standard_normal(n)
        y = x + w * (10 ** (-15 / 20) / _rms(w))  # -15 dBFS RMS
    elif attack_id == "T09":
        t = np.arange(n) / sr
        depth = 0.5
        y = x * (1.0 - depth * 0.5 * (1.0 - np.cos(2 * np.pi * 8.0 * t + rng.uniform(0, 2 * np.pi))))
    else:  # T10
        y = echo(x, int(0.060 * sr), 0.5)

    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    return Clip(clip.clip_id, y, "fake", attack_id, clip.split, int(seed),
                meta={**clip.meta, **params})


# ---------------------------------------------------------------- corpus I/O


def make_clip(split: str, kind: str, index: int, seed: int) -> Clip:
    """Regenerate a single clip from its manifest seed."""
    clip_id = f"{split}_{'real' if kind == 'real' else kind}_{index:05d}"
    base = synth_real(seed, clip_id=clip_id, split=split)
    if kind == "real":
        return base
    return apply_attack(base, kind, derive_seed(seed, 1))


def _plan(counts: dict) -> list[tuple[str, str, int]]:
    plan = []
    for split in SPLITS:
        n_real, n_fake = counts.get(split, (0, 0))
        if n_real < 0 or n_fake < 0:
            raise CorpusError(f"negative count for split {split}")
        attacks = SEEN_ATTACKS if split in ("train", "dev") else UNSEEN_ATTACKS
        plan += [(split, "real", i) for i in range(n_real)]
        plan += [(split, a, i) for a in attacks for i in range(n_fake)]
    return plan


def generate_corpus(out_dir, master_seed: int = 0, counts: dict | None = None) -> dict:
    """Write clips and ``manifest.json`` under ``out_dir``; return the manifest."""
    counts = {k: tuple(v) for k, v in (counts or DEFAULT_COUNTS).items()}
    out = Path(out_dir)
    manifest = {
        "format_version": MANIFEST_VERSION,
        "sample_rate": SAMPLE_RATE,
        "config": {"master_seed": int(master_seed),
                   "counts": {k: list(v) for k, v in sorted(counts.items())},
                   "seen_attacks": list(SEEN_ATTACKS), "unseen_attacks": list(UNSEEN_ATTACKS)},
        "splits": {s: [] for s in SPLITS},
    }
    for split, kind, i in _plan(counts):
        seed = derive_seed(master_seed, SPLITS.index(split), ATTACKS.index(kind) + 1 if kind != "real" else 0, i)
        clip = make_clip(split, kind, i, seed)
        rel = f"{split}/{clip.clip_id}.f64"
        blob = clip.samples.astype("<f8").tobytes()
        try:
            (out / split).mkdir(parents=True, exist_ok=True)
            (out / rel).write_bytes(blob)
        except OSError as e:
            raise CorpusError(f"cannot write clip file {out / rel}: {e}") from e
        manifest["splits"][split].append({
            "clip_id": clip.clip_id, "path": rel, "label": clip.label, "attack_id": clip.attack_id,
            "length": int(clip.samples.size), "seed": seed, "sha256": hashlib.sha256(blob).hexdigest(),
        })
    validate_manifest(manifest)
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except OSError as e:
        raise CorpusError(f"cannot write manifest {out / 'manifest.json'}: {e}") from e
    return manifest


def validate_manifest(manifest: dict) -> None:
    seen = set(SEEN_ATTACKS)
    ids = set()
    for split, entries in manifest["splits"].items():
        for e in entries:
            if e["clip_id"] in ids:
                raise CorpusError(f"duplicate clip_id {e['clip_id']}")
            ids.add(e["clip_id"])
            if (e["label"] == "real") != (e["attack_id"] == "none"):
                raise CorpusError(f"{e['clip_id']}: label/attack mismatch")
            a = e["attack_id"]
            if a == "none":
                continue
            if split == "eval" and a in seen:
                raise CorpusError(f"{e['clip_id']}: seen attack {a} in eval split")
            if split != "eval" and a not in seen:
                raise CorpusError(f"{e['clip_id']}: unseen attack {a} in {split} split")


def read_manifest(corpus_dir) -> dict:
    path = Path(corpus_dir) / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CorpusError(f"cannot read manifest {path}: {e}") from e
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise CorpusError(f"{path}: unsupported manifest version {manifest.get('format_version')}")
    validate_manifest(manifest)
    return manifest


def load_split(corpus_dir, split: str, verify: bool = True) -> list[Clip]:
    """Load one split, checking each file's length and hash against the manifest."""
    root = Path(corpus_dir)
    manifest = read_manifest(root)
    if split not in manifest["splits"]:
        raise CorpusError(f"split {split!r} not in manifest")
    clips = []
    for e in manifest["splits"][split]:
        path = root / e["path"]
        try:
            blob = path.read_bytes()
        except OSError as err:
            raise CorpusError(f"cannot read clip {path}: {err}") from err
        if verify and hashlib.sha256(blob).hexdigest() != e["sha256"]:
            raise CorpusError(f"{path}: hash does not match manifest")
        x = np.frombuffer(blob, dtype="<f8").astype(np.float64)
        if x.size != e["length"]:
            raise CorpusError(f"{path}: {x.size} samples, manifest says {e['length']}")
        clips.append(Clip(e["clip_id"], x, e["label"], e["attack_id"], split, e["seed"]))
    return clips
