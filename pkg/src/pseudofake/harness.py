"""Training loop, dev-EER model selection, ablation and hyperparameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import augmentation as aug
from . import corpus as cp
from . import metrics as mx
from .autodiff import Tensor
from .model import DetectorModel, check_length, forward, detection_score, init_model, probabilities
from .model import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

# Hyperparameters of the raw-waveform detector used for the ablation.
ABLATION_DEFAULTS = {
    "none": aug.AugmentationConfig("none", 0.0),
    "untargeted_gaussian": aug.AugmentationConfig("untargeted_gaussian", 0.7, sigma_min=0.01, sigma_max=1.0),
    "targeted_fake": aug.AugmentationConfig("targeted_fake", 0.3, epsilon_min=0.01, epsilon_max=0.7),
    "targeted_ambiguous": aug.AugmentationConfig("targeted_ambiguous", 0.7, epsilon_min=0.01, epsilon_max=0.7),
}
SWEEP_PARAMS = {"p": "p", "epsilon_max": "epsilon_max", "epsilon_min": "epsilon_min"}


@dataclass
class TrainConfig:
    corpus: str
    batch_size: int = 8
    epochs: int = 100
    lr: float = 1e-4
    weight_decay: float = 1e-4
    seed: int = 0
    augmentation: aug.AugmentationConfig = field(default_factory=aug.AugmentationConfig)
    selection_metric: str = "dev_eer"

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            self.augmentation = aug.AugmentationConfig(**self.augmentation)
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.selection_metric != "dev_eer":
            raise ValueError(f"only dev_eer selection is supported, got {self.selection_metric!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["corpus"] = str(self.corpus)
        return d

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        d = json.loads(Path(path).read_text())
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**d)


# ---------------------------------------------------------------- scoring


def score_clips(model: DetectorModel, clips: Sequence[cp.Clip]) -> tuple[list[mx.ScoreRecord], list[dict]]:
    """Score raw clips (never augmented).  Too-short clips become error entries."""
    before = aug.CALL_COUNTER["augment_batch"]
    records, errors = [], []
    for c in clips:
        try:
            check_length(c.samples.size)
        except ad.ShapeError as e:
            errors.append({"clip_id": c.clip_id, "error": str(e)})
            continue
        s = detection_score(forward(model, c.samples))
        records.append(mx.ScoreRecord(c.clip_id, c.label, c.attack_id, s))
    if aug.CALL_COUNTER["augment_batch"] != before:
        raise RuntimeError("augmentation was invoked on a scoring path")
    return records, errors


def _parameter_checksum(model: DetectorModel) -> str:
    import hashlib
    return hashlib.sha256(model.flat_parameters().astype("<f8").tobytes()).hexdigest()


class _Splits:
    """Loaded corpus splits, cached per corpus path within a process."""

    _cache: dict = {}

    @classmethod
    def get(cls, corpus_dir) -> dict[str, list[cp.Clip]]:
        key = str(Path(corpus_dir).resolve())
        if key not in cls._cache:
            cls._cache[key] = {s: cp.load_split(corpus_dir, s) for s in cp.SPLITS}
        return cls._cache[key]


# ---------------------------------------------------------------- training


def train_step(model: DetectorModel, state: ad.AdamState, batch: Sequence[tuple],
               config: TrainConfig) -> tuple[float, list[float]]:
    """One Adam step on the mean cross-entropy of ``batch``.

    Returns the batch loss and each sample's pre-step p_real.
    """
    for p in model.params:
        p.zero_grad()
    losses, p_real = [], []
    with ad.Tape() as tape:
        for item in batch:
            probs = probabilities(model, Tensor(item[0]))
            p_real.append(float(probs.values[0]))
            losses.append(ad.cross_entropy(probs, item[1]))
        loss = ad.mean_of(losses)
    tape.backward(loss)
    ad.adam_step(model.params, [p.grad for p in model.params], state,
                 lr=config.lr, weight_decay=config.weight_decay)
    for p in model.params:
        p.zero_grad()
    return loss.item(), p_real


def train(config: TrainConfig, out_dir=None, dump_augmented: bool = False) -> tuple[dict, DetectorModel]:
    """Train, select the best dev-EER epoch, score eval; return (report, model).

    With ``out_dir`` the run writes config.json, report.json, checkpoint.bin,
    dev/eval score TSVs and eval metrics JSON.
    """
    t0 = time.perf_counter()
    splits = _Splits.get(config.corpus)
    train_clips, dev_clips, eval_clips = splits["train"], splits["dev"], splits["eval"]
    if not train_clips or not dev_clips:
        raise ValueError(f"corpus {config.corpus} needs non-empty train and dev splits")
    for c in train_clips:
        check_length(c.samples.size)

    acfg = config.augmentation
    model = init_model(config.seed)
    state = ad.AdamState()
    root = np.random.SeedSequence(int(config.seed))
    dump = None
    if dump_augmented and out_dir is not None:
        dump = aug.AugmentationDump(Path(out_dir) / "augmented")

    epochs, best = [], None
    n_seen = n_replaced = 0
    boundary_gap = []
    for epoch in range(1, config.epochs + 1):
        order = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(root.entropy, spawn_key=(epoch, 0)))).permutation(len(train_clips))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            batch = [(train_clips[i].samples, train_clips[i].one_hot, train_clips[i].clip_id) for i in idx]
            if acfg.strategy != "none" and acfg.p > 0:
                stream = np.random.SeedSequence(root.entropy, spawn_key=(epoch, 1, b))
                if dump is not None:
                    dump.tag = f"e{epoch:03d}b{b:04d}_"
                mixed = aug.augment_batch(batch, model, acfg, stream, dump=dump)
            else:
                mixed = batch
            loss, p_real = train_step(model, state, mixed, config)
            total += loss * len(mixed)
            count += len(mixed)
            for orig, new, pr in zip(batch, mixed, p_real):
                n_seen += 1
                if new[0] is not orig[0]:
                    n_replaced += 1
                    boundary_gap.append(abs(pr - 0.5))
        dev_records, _ = score_clips(model, dev_clips)
        dev_eer = mx.eer(dev_records)[0]
        epochs.append({"epoch": epoch, "train_loss": total / count, "dev_eer": dev_eer})
        log.info("seed %d epoch %d loss %.5f dev EER %.4f", config.seed, epoch, total / count, dev_eer)
        if best is None or dev_eer < best[0]:
            best = (dev_eer, epoch, model.flat_parameters().copy())
    if dump is not None:
        dump.close()

    model.load_flat(best[2])
    model.epoch = best[1]
    report = {
        "config": config.to_dict(),
        "epochs": epochs,
        "selected_epoch": best[1],
        "dev_eer": best[0],
        "n_parameters": model.n_parameters,
        "parameter_checksum": _parameter_checksum(model),
        "augmentation": {
            "replaced_fraction": n_replaced / n_seen if n_seen else 0.0,
            "n_augmented": n_replaced,
            "mean_abs_p_real_minus_half": float(np.mean(boundary_gap)) if boundary_gap else None,
        },
    }
    eval_records, eval_errors = score_clips(model, eval_clips) if eval_clips else ([], [])
    if eval_records:
        m = mx.metrics_report(eval_records)
        report.update({"eval_eer": m["eer"], "eval_eer_threshold": m["eer_threshold"],
                       "eval_min_tdcf": m["min_tdcf"], "per_attack_eval_eer": m["per_attack"]})
    report["eval_errors"] = eval_errors
    report["wall_clock_seconds"] = time.perf_counter() - t0

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        save_checkpoint(model, out / "checkpoint.bin")
        mx.write_scores(score_clips(model, dev_clips)[0], out / "dev_scores.tsv")
        if eval_records:
            mx.write_scores(eval_records, out / "eval_scores.tsv")
            mx.write_report(mx.metrics_report(eval_records), out / "eval_metrics.json")
        mx.write_report(report, out / "report.json")
    return report, model


def strip_wall_clock(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "wall_clock_seconds"}


# ---------------------------------------------------------------- evaluation


def evaluate(checkpoint, corpus_dir, split: str = "eval", out_dir=None) -> dict:
    """Score one split with a saved checkpoint; write TSV scores and JSON metrics."""
    model = load_checkpoint(checkpoint)
    clips = cp.load_split(corpus_dir, split)
    records, errors = score_clips(model, clips)
    report = mx.metrics_report(records)
    report["errors"] = errors
    if out_dir is not None:
        out = Path(out_dir)
        mx.write_scores(records, out / f"{split}_scores.tsv")
        mx.write_report(report, out / f"{split}_metrics.json")
    return report


# ---------------------------------------------------------------- campaigns


def _run_member(key, config: TrainConfig, out_dir):
    try:
        report, _ = train(config, out_dir)
        return key, report, None
    except Exception as e:  # a failed member is recorded, the campaign goes on
        log.exception("run %s failed", key)
        return key, None, f"{type(e).__name__}: {e}"


def _run_all(jobs: list, workers: int) -> dict:
    if workers <= 1:
        results = [_run_member(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_member, *zip(*jobs)))
    return {key: (report, err) for key, report, err in results}


def _stats(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "std": None, "n": 0}
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std()), "n": int(a.size)}


def ablation(base: TrainConfig, seeds: Sequence[int], out_dir=None, workers: int = 1,
             strategies: dict | None = None) -> dict:
    """Run every strategy x seed; summarise eval EER / min t-DCF per strategy."""
    if not seeds:
        raise ValueError("ablation needs at least one seed")
    strategies = strategies or ABLATION_DEFAULTS
    jobs = []
    for name, acfg in strategies.items():
        for s in seeds:
            run_dir = Path(out_dir) / "runs" / f"{name}_seed{s}" if out_dir else None
            jobs.append(((name, s), replace(base, seed=int(s), augmentation=acfg), run_dir))
    results = _run_all(jobs, workers)

    runs, summary, per_attack = [], {}, {}
    for (name, s) in sorted(results):
        report, err = results[(name, s)]
        row = {"strategy": name, "seed": s, "error": err}
        if report is not None:
            row.update({k: report.get(k) for k in ("selected_epoch", "dev_eer", "eval_eer", "eval_min_tdcf")})
            row["per_attack_eval_eer"] = report.get("per_attack_eval_eer")
            row["augmentation"] = report["augmentation"]
        runs.append(row)
    for name in strategies:
        ok = [r for r in runs if r["strategy"] == name and r["error"] is None]
        summary[name] = {
            "config": strategies[name].to_dict(),
            "eval_eer": _stats([r["eval_eer"] for r in ok]),
            "eval_min_tdcf": _stats([r["eval_min_tdcf"] for r in ok]),
            "dev_eer": _stats([r["dev_eer"] for r in ok]),
            "failed": sum(r["error"] is not None for r in runs if r["strategy"] == name),
        }
        attacks = sorted({a for r in ok for a in (r["per_attack_eval_eer"] or {})})
        per_attack[name] = {a: _stats([r["per_attack_eval_eer"][a] for r in ok]) ["mean"] for a in attacks}
    result = {"base_config": base.to_dict(), "seeds": list(seeds), "runs": runs,
              "summary": summary, "per_attack_mean_eval_eer": per_attack}
    if out_dir is not None:
        mx.write_report(result, Path(out_dir) / "ablation.json")
        (Path(out_dir) / "ablation_table.txt").write_text(format_ablation(result))
    return result


def format_ablation(result: dict) -> str:
    lines = [f"{'strategy':<22}{'eval EER %':>16}{'eval min t-DCF':>20}{'dev EER %':>14}"]
    for name, s in result["summary"].items():
        e, t, d = s["eval_eer"], s["eval_min_tdcf"], s["dev_eer"]
        if e["n"] == 0:
            lines.append(f"{name:<22}{'(all runs failed)':>16}")
            continue
        lines.append(f"{name:<22}{100 * e['mean']:>9.2f} ± {100 * e['std']:<5.2f}"
                     f"{t['mean']:>12.4f} ± {t['std']:<6.4f}{100 * d['mean']:>10.2f}")
    attacks = sorted({a for v in result["per_attack_mean_eval_eer"].values() for a in v})
    lines.append("")
    lines.append("per-attack mean eval EER (%)")
    lines.append(f"{'strategy':<22}" + "".join(f"{a:>8}" for a in attacks))
    for name, row in result["per_attack_mean_eval_eer"].items():
        lines.append(f"{name:<22}" + "".join(
            f"{100 * row[a]:>8.2f}" if a in row else f"{'-':>8}" for a in attacks))
    return "\n".join(lines) + "\n"


SWEEP_COLUMNS = ("param", "value", "strategy", "seed", "dev_eer", "eval_eer", "error")


def sweep(param: str, values: Sequence[float], base: TrainConfig, seeds: Sequence[int],
          out_dir=None, workers: int = 1) -> list[dict]:
    """Vary one augmentation hyperparameter; add strategy=none baseline rows."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep param must be one of {tuple(SWEEP_PARAMS)}, got {param!r}")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    acfg = base.augmentation if base.augmentation.strategy != "none" else ABLATION_DEFAULTS["targeted_ambiguous"]
    jobs = []
    for v in values:
        cfg_aug = replace(acfg, **{SWEEP_PARAMS[param]: float(v)})  # validates ranges
        for s in seeds:
            run_dir = Path(out_dir) / "runs" / f"{param}={v}_seed{s}" if out_dir else None
            jobs.append(((float(v), s), replace(base, seed=int(s), augmentation=cfg_aug), run_dir))
    for s in seeds:
        run_dir = Path(out_dir) / "runs" / f"baseline_seed{s}" if out_dir else None
        jobs.append(((float("nan"), s), replace(base, seed=int(s), augmentation=ABLATION_DEFAULTS["none"]), run_dir))
    results = _run_all(jobs, workers)

    def order(key):
        v, s = key
        return (np.isnan(v), 0.0 if np.isnan(v) else v, s)

    rows = []
    for key in sorted(results, key=order):
        v, s = key
        report, err = results[key]
        baseline = np.isnan(v)
        rows.append({
            "param": param, "value": "baseline" if baseline else v,
            "strategy": "none" if baseline else acfg.strategy, "seed": s,
            "dev_eer": report["dev_eer"] if report else None,
            "eval_eer": report.get("eval_eer") if report else None,
            "error": err or "",
        })
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / f"sweep_{param}.csv").write_text(sweep_csv(rows))
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                    for k in SWEEP_COLUMNS})
    return buf.getvalue()
