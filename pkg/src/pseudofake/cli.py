"""Command-line entry point: ``python -m pseudofake <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import corpus as cp
from . import harness


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _counts(s: str) -> dict:
    """``train=400:100,dev=100:25,eval=200:100`` (real : fake per attack)."""
    out = dict(cp.DEFAULT_COUNTS)
    for part in s.split(","):
        split, _, val = part.partition("=")
        real, _, fake = val.partition(":")
        if split not in cp.SPLITS or not fake:
            raise argparse.ArgumentTypeError(f"bad counts entry {part!r}; expected split=REAL:FAKE_PER_ATTACK")
        out[split] = (int(real), int(fake))
    return out


def _base_config(args) -> harness.TrainConfig:
    if getattr(args, "config", None):
        cfg = harness.TrainConfig.from_file(args.config, corpus=args.corpus)
    else:
        cfg = harness.TrainConfig(args.corpus)
    if getattr(args, "epochs", None):
        cfg = replace(cfg, epochs=args.epochs)
    return cfg


def cmd_gen_corpus(args) -> int:
    m = cp.generate_corpus(args.out, args.seed, args.counts)
    print(json.dumps({s: len(v) for s, v in m["splits"].items()}))
    return 0


def cmd_train(args) -> int:
    cfg = _base_config(args)
    report, _ = harness.train(cfg, args.out, dump_augmented=args.dump_augmented)
    print(json.dumps({k: report.get(k) for k in ("selected_epoch", "dev_eer", "eval_eer", "eval_min_tdcf")}))
    return 0


def cmd_evaluate(args) -> int:
    report = harness.evaluate(args.checkpoint, args.corpus, args.split, args.out)
    print(json.dumps({k: report[k] for k in ("eer", "min_tdcf")}))
    return 0 if not report["errors"] else 3


def cmd_ablation(args) -> int:
    result = harness.ablation(_base_config(args), args.seeds, args.out, workers=args.workers)
    print(harness.format_ablation(result), end="")
    return 0


def cmd_sweep(args) -> int:
    base = _base_config(args)
    if base.augmentation.strategy == "none":
        base = replace(base, augmentation=harness.ABLATION_DEFAULTS["targeted_ambiguous"])
    if args.epsilon_max is not None:
        base = replace(base, augmentation=replace(base.augmentation, epsilon_max=args.epsilon_max))
    rows = harness.sweep(args.param, args.values, base, args.seeds, args.out, workers=args.workers)
    print(harness.sweep_csv(rows), end="")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite
    results, seconds = run_suite(args.seed, args.models)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} max rel err {r.max_rel_error:.2e}  ({r.n_checked} coords)")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} passed in {seconds:.1f}s")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pseudofake", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="write the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", type=_counts, default=None,
                   help="e.g. train=400:100,dev=100:25 (real:fake per attack)")
    p.set_defaults(func=cmd_gen_corpus)

    def run_opts(p):
        p.add_argument("--corpus", required=True)
        p.add_argument("--config", help="JSON file mirroring TrainConfig")
        p.add_argument("--epochs", type=int)
        p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one detector")
    run_opts(p)
    p.add_argument("--dump-augmented", action="store_true", help="write every augmented waveform")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a split with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="eval", choices=cp.SPLITS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablation", help="four strategies x seeds")
    run_opts(p)
    p.add_argument("--seeds", type=_ints, default=[1, 2, 3, 4, 5])
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("sweep", help="vary one augmentation hyperparameter")
    run_opts(p)
    p.add_argument("--param", required=True, choices=sorted(harness.SWEEP_PARAMS))
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--epsilon-max", type=float, help="fix epsilon_max (e.g. for an epsilon_min sweep)")
    p.add_argument("--seeds", type=_ints, default=[1, 2, 3, 4, 5])
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--models", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
