"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or
``python tests/test_acceptance.py`` for the same checks without pytest.
The learnability and generalisation criteria share one full ablation
campaign (4 strategies x 5 seeds x 100 epochs on the default corpus),
which takes about half an hour on a single core.
"""

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from pseudofake import augmentation as aug
from pseudofake import corpus as cp
from pseudofake import harness as hs
from pseudofake import metrics as mx
from pseudofake import model as md
from pseudofake.augmentation import AugmentationConfig
from pseudofake.autodiff import Tensor, cross_entropy
from pseudofake.gradcheck import run_suite

SEEDS = [1, 2, 3, 4, 5]
_cache: dict = {}


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


def default_corpus() -> Path:
    if "corpus" not in _cache:
        root = Path(tempfile.mkdtemp(prefix="accept_corpus_"))
        cp.generate_corpus(root, master_seed=0)
        _cache["corpus"] = root
    return _cache["corpus"]


def campaign() -> tuple[dict, float]:
    if "campaign" not in _cache:
        t0 = time.perf_counter()
        result = hs.ablation(hs.TrainConfig(str(default_corpus())), SEEDS)
        _cache["campaign"] = (result, time.perf_counter() - t0)
        print()
        print(hs.format_ablation(result), flush=True)
    return _cache["campaign"]


def test_gradient_correctness():
    results, seconds = run_suite(seed=0, n_models=20)
    worst = max(r.max_rel_error for r in results)
    n_model = sum(r.name.startswith("model") for r in results)
    ok = all(r.passed for r in results) and n_model == 20 and seconds < 120
    report("gradient correctness", ok,
           f"{len(results)} checks ({n_model} full-model), max rel err {worst:.2e} < 1e-6, {seconds:.1f}s < 120s")


def _brute(records, params):
    scores = sorted({r.score for r in records})
    cands = [-math.inf] + [(a + b) / 2 for a, b in zip(scores, scores[1:])] + [math.inf]
    nr = sum(r.label == "real" for r in records)
    nf = len(records) - nr
    best, cost = None, math.inf
    for t in cands:
        frr = sum(r.label == "real" and r.score < t for r in records) / nr
        far = sum(r.label == "fake" and r.score >= t for r in records) / nf
        if best is None or abs(far - frr) < best[0]:
            best = (abs(far - frr), (far + frr) / 2)
        cost = min(cost, (params.c0 + params.c1 * frr + params.c2 * far) / params.normalizer)
    return best[1], cost


def test_fgsm_invariants():
    rng = np.random.default_rng(2024)
    bad = []
    n_descent = 0
    for i in range(100):
        model = md.init_model(int(rng.integers(1 << 31)))
        x = rng.uniform(-1, 1, int(rng.integers(md.MIN_LENGTH, 1200)))
        eps = float(rng.uniform(0.0, 0.7))
        target = aug.ambiguous_target() if i % 2 else aug.confident_fake_target()
        g, base = aug.input_gradient(x, model, target)
        d = aug.targeted_perturbation(x, model, target, eps).delta
        if not set(np.unique(d)) <= {-eps, 0.0, eps}:
            bad.append((i, "values"))
        if g.any() and np.max(np.abs(d)) != eps:
            bad.append((i, "linf"))
        if np.max(np.abs(g)) > 1e-6:
            n_descent += 1
            small = aug.targeted_perturbation(x, model, target, 1e-4).delta
            after = cross_entropy(md.probabilities(model, Tensor(x + small), track_params=False), target).item()
            if not after < base:
                bad.append((i, "descent"))
        # fixed point: zero the output layer so the prediction equals (0.5, 0.5)
        flat = model.copy()
        flat["fc2_w"].values[:] = 0
        flat["fc2_b"].values[:] = 0
        if aug.targeted_perturbation(x, flat, (0.5, 0.5), eps).delta.any():
            bad.append((i, "fixed point"))
    report("FGSM invariants", not bad,
           f"100 triples, {n_descent} descent checks, violations: {bad or 'none'}")


def test_metric_oracle_equivalence():
    rng = np.random.default_rng(99)
    worst_eer = worst_tdcf = worst_attack = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 51))
        nr = int(rng.integers(1, n))
        s = rng.integers(-5, 6, n) / 2.0 if rng.random() < 0.5 else rng.standard_normal(n)
        att = ["none"] * nr + [f"T{k:02d}" for k in rng.integers(5, 11, n - nr)]
        recs = [mx.ScoreRecord(str(i), "real" if i < nr else "fake", att[i], float(s[i])) for i in range(n)]
        e, c = _brute(recs, mx.DEFAULT_TDCF)
        worst_eer = max(worst_eer, abs(mx.eer(recs)[0] - e))
        worst_tdcf = max(worst_tdcf, abs(mx.min_tdcf(recs) - c))
        real = [r for r in recs if r.label == "real"]
        for a, v in mx.per_attack_eer(recs).items():
            sub = real + [r for r in recs if r.attack_id == a]
            worst_attack = max(worst_attack, abs(v - _brute(sub, mx.DEFAULT_TDCF)[0]))
    ok = max(worst_eer, worst_tdcf, worst_attack) <= 1e-12
    report("metric oracle equivalence", ok,
           f"200 sets, max |diff| EER {worst_eer:.1e}, min t-DCF {worst_tdcf:.1e}, per-attack {worst_attack:.1e}")


def test_determinism(tmp_path):
    corpus = default_corpus()
    cfg = hs.TrainConfig(str(corpus), epochs=3, seed=7,
                         augmentation=hs.ABLATION_DEFAULTS["targeted_ambiguous"])
    a, _ = hs.train(cfg, tmp_path / "a")
    b, _ = hs.train(cfg, tmp_path / "b")
    same_report = mx.write_report(hs.strip_wall_clock(a), tmp_path / "ra.json").read_bytes() == \
        mx.write_report(hs.strip_wall_clock(b), tmp_path / "rb.json").read_bytes()
    same_ckpt = (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()
    cp.generate_corpus(tmp_path / "regen", master_seed=0)
    files = [f for f in corpus.rglob("*") if f.is_file()]
    same_corpus = all((tmp_path / "regen" / f.relative_to(corpus)).read_bytes() == f.read_bytes() for f in files)
    report("determinism", same_report and same_ckpt and same_corpus,
           f"reports identical {same_report}, checkpoints identical {same_ckpt}, "
           f"corpus regeneration identical {same_corpus} ({len(files)} files)")


def test_mixing_law():
    cfg_common = dict(sigma_min=0.05, sigma_max=0.05)
    rng = np.random.default_rng(1)
    batch = [(rng.uniform(-1, 1, md.MIN_LENGTH), (1.0, 0.0) if i % 2 else (0.0, 1.0), f"c{i}") for i in range(100)]
    lines, ok = [], True
    for p in (0.25, 0.5, 0.75):
        cfg = AugmentationConfig("untargeted_gaussian", p, **cfg_common)
        replaced = total = 0
        labels_ok = True
        for rep in range(100):
            out = aug.augment_batch(batch, None, cfg, np.random.SeedSequence(rep, spawn_key=(int(p * 100),)))
            for o, i in zip(out, batch):
                total += 1
                if o is not i:
                    replaced += 1
                    labels_ok &= o[1] == (0.0, 1.0)
        frac = replaced / total
        ok &= abs(frac - p) <= 0.02 and labels_ok and total >= 10_000
        lines.append(f"p={p}: {frac:.4f} of {total}")
    # targeted strategies go through the same Bernoulli draw; check labels on one
    model = md.init_model(0)
    out = aug.augment_batch(batch[:20], model, AugmentationConfig("targeted_ambiguous", 1.0), 5)
    ok &= all(o[1] == (0.0, 1.0) for o in out)
    report("mixing law", ok, "; ".join(lines) + "; replaced labels all fake")


def test_sanity_learnability():
    result, seconds = campaign()
    runs = [r for r in result["runs"] if r["strategy"] == "none"]
    devs = [r["dev_eer"] for r in runs]
    mean = float(np.mean(devs))
    ok_eer = len(devs) == 5 and mean < 0.10
    report("sanity learnability", ok_eer,
           f"baseline dev EER per seed {devs}, mean {mean:.4f} < 0.10")


def test_campaign_runtime():
    result, seconds = campaign()
    failed = sum(r["error"] is not None for r in result["runs"])
    report("campaign runtime", seconds < 3600 and failed == 0,
           f"{len(result['runs'])} runs serially on one core in {seconds / 60:.1f} min < 60 min, {failed} failed")


def test_scaled_generalization():
    result, _ = campaign()
    s = result["summary"]
    amb, none = s["targeted_ambiguous"]["eval_eer"]["mean"], s["none"]["eval_eer"]["mean"]
    order = sorted(s, key=lambda k: s[k]["eval_eer"]["mean"])
    complete = set(result["per_attack_mean_eval_eer"]) == set(hs.ABLATION_DEFAULTS) and all(
        set(v) == set(cp.UNSEEN_ATTACKS) for v in result["per_attack_mean_eval_eer"].values())
    report("scaled generalization", amb <= none and complete,
           f"mean eval EER targeted_ambiguous {amb:.4f} vs none {none:.4f}; "
           f"ordering (best first) {order}; per-attack table complete {complete}")


def test_sweep_machinery(tmp_path):
    # complete grids with baseline rows; reduced epochs, the criterion concerns the machinery
    small = tmp_path / "corpus"
    cp.generate_corpus(small, master_seed=0, counts={"train": (40, 10), "dev": (20, 5), "eval": (20, 5)})
    base = hs.TrainConfig(str(small), epochs=3, augmentation=hs.ABLATION_DEFAULTS["targeted_ambiguous"])
    seeds = [1, 2]
    grids = {"p": [0.1, 0.3, 0.5, 0.7, 0.9], "epsilon_max": [0.01, 0.05, 0.1, 0.3, 0.7]}
    ok, lines = True, []
    for param, values in grids.items():
        rows = hs.sweep(param, values, base, seeds, tmp_path / param)
        csv_rows = (tmp_path / param / f"sweep_{param}.csv").read_text().splitlines()
        baseline = [r for r in rows if r["value"] == "baseline"]
        complete = (len(rows) == len(values) * len(seeds) + len(seeds) and len(csv_rows) == len(rows) + 1
                    and all(r["error"] == "" and r["eval_eer"] is not None for r in rows) and len(baseline) == len(seeds))
        ok &= complete
        means = {v: np.mean([r["eval_eer"] for r in rows if r["value"] == v]) for v in values}
        lines.append(f"{param}: {len(rows)} rows incl. {len(baseline)} baseline, mean eval EER "
                     + ", ".join(f"{v}->{m:.3f}" for v, m in means.items()))
    report("sweep machinery", ok, "; ".join(lines))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
