"""Countermeasure scoring: EER, reduced-form min t-DCF, per-attack EER.

Scores follow the anti-spoofing convention: higher means more likely real.
Thresholds are the midpoints between adjacent distinct scores plus -inf and
+inf.  At a threshold ``t`` a real clip is rejected if ``score < t`` and a
fake clip is accepted if ``score >= t``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ScoreRecord:
    clip_id: str
    label: str  # "real" or "fake"
    attack_id: str
    score: float

    def __post_init__(self):
        if self.label not in ("real", "fake"):
            raise ValueError(f"{self.clip_id}: label must be 'real' or 'fake', got {self.label!r}")
        if not math.isfinite(self.score):
            raise ValueError(f"{self.clip_id}: non-finite score {self.score}")


@dataclass(frozen=True)
class TandemCostParams:
    """Constants of ``t-DCF(t) = c0 + c1 * P_miss_cm(t) + c2 * P_fa_cm(t)``."""

    c0: float
    c1: float
    c2: float

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0 or self.c0 < 0:
            raise ValueError(f"need c1 > 0, c2 > 0, c0 >= 0; got {self}")

    @property
    def normalizer(self) -> float:
        return min(self.c0 + self.c1, self.c0 + self.c2)

    @classmethod
    def from_operating_point(
        cls,
        p_miss_asv: float = 0.0243,
        p_fa_asv: float = 0.0243,
        p_miss_spoof_asv: float = 0.0,
        p_spoof: float = 0.05,
        c_miss_asv: float = 1.0,
        c_fa_asv: float = 10.0,
        c_miss_cm: float = 1.0,
        c_fa_cm: float = 10.0,
    ) -> "TandemCostParams":
        """Reduce the tandem cost at a fixed ASV operating point.

        Priors and costs default to the ASVspoof 2019 LA protocol values
        (external provenance).  The ASV error rates are placeholders: no ASV
        system is run here, so they describe a nominal verifier.
        """
        p_tar = (1 - p_spoof) * 0.99
        p_non = (1 - p_spoof) * 0.01
        c1 = p_tar * (c_miss_cm - c_miss_asv * p_miss_asv) - p_non * c_fa_asv * p_fa_asv
        c2 = c_fa_cm * p_spoof * (1 - p_miss_spoof_asv)
        return cls(0.0, c1, c2)


DEFAULT_TDCF = TandemCostParams.from_operating_point()


def _split(records: Sequence[ScoreRecord]) -> tuple[np.ndarray, np.ndarray]:
    real = np.array([r.score for r in records if r.label == "real"], dtype=np.float64)
    fake = np.array([r.score for r in records if r.label == "fake"], dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise ValueError(f"need both classes; got {real.size} real and {fake.size} fake records")
    return real, fake


def thresholds(scores: np.ndarray) -> np.ndarray:
    u = np.unique(scores)
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate(([-np.inf], mids, [np.inf]))


def error_rates(real: np.ndarray, fake: np.ndarray, taus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(FRR, FAR) at each threshold."""
    real = np.sort(real)
    fake = np.sort(fake)
    frr = np.searchsorted(real, taus, side="left") / real.size
    far = (fake.size - np.searchsorted(fake, taus, side="left")) / fake.size
    return frr, far


def eer(records: Sequence[ScoreRecord]) -> tuple[float, float]:
    """Return ``(eer, threshold)``; EER is a fraction in [0, 1]."""
    real, fake = _split(records)
    taus = thresholds(np.concatenate([real, fake]))
    frr, far = error_rates(real, fake, taus)
    i = int(np.argmin(np.abs(far - frr)))  # argmin keeps the first, i.e. lowest, threshold
    return float((far[i] + frr[i]) / 2.0), float(taus[i])


def min_tdcf(records: Sequence[ScoreRecord], params: TandemCostParams = DEFAULT_TDCF) -> float:
    real, fake = _split(records)
    norm = params.normalizer
    if not norm > 0:
        raise ValueError(f"non-positive t-DCF normalizer {norm}")
    taus = thresholds(np.concatenate([real, fake]))
    frr, far = error_rates(real, fake, taus)
    curve = (params.c0 + params.c1 * frr + params.c2 * far) / norm
    return float(curve.min())


def per_attack_eer(records: Sequence[ScoreRecord]) -> dict[str, float]:
    """EER of each attack's fakes against all real records."""
    real = [r for r in records if r.label == "real"]
    out = {}
    for attack in sorted({r.attack_id for r in records if r.label == "fake"}):
        subset = real + [r for r in records if r.label == "fake" and r.attack_id == attack]
        out[attack] = eer(subset)[0]
    return out


def metrics_report(records: Sequence[ScoreRecord], params: TandemCostParams = DEFAULT_TDCF) -> dict:
    e, t = eer(records)
    return {
        "eer": e,
        "eer_threshold": t,
        "min_tdcf": min_tdcf(records, params),
        "per_attack": per_attack_eer(records),
    }


# ---------------------------------------------------------------- score files

SCORE_HEADER = ("clip_id", "label", "attack_id", "score")


def write_scores(records: Iterable[ScoreRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("\t".join(SCORE_HEADER) + "\n")
        for r in records:
            f.write(f"{r.clip_id}\t{r.label}\t{r.attack_id}\t{r.score:.17g}\n")
    return path


def read_scores(path) -> list[ScoreRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f, delimiter="\t")
        if tuple(reader.fieldnames or ()) != SCORE_HEADER:
            raise ValueError(f"{path}: expected header {SCORE_HEADER}, got {reader.fieldnames}")
        return [ScoreRecord(row["clip_id"], row["label"], row["attack_id"], float(row["score"]))
                for row in reader]


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path
