"""
A pocket ablation
=================

The four-way comparison on a reduced corpus and a handful of epochs, so it
finishes in a couple of minutes.  The full-size campaign is
``pseudofake ablation --corpus DIR --seeds 1,2,3,4,5 --out DIR``.
"""

import tempfile

from pseudofake import corpus as cp
from pseudofake.harness import TrainConfig, ablation, format_ablation, sweep, sweep_csv

tmp = tempfile.mkdtemp()
cp.generate_corpus(tmp, master_seed=0, counts={"train": (200, 50), "dev": (60, 15), "eval": (60, 20)})
base = TrainConfig(tmp, epochs=30, lr=1e-3)  # a larger step than the full campaign, so 30 epochs learn something

result = ablation(base, seeds=[1, 2])
print(format_ablation(result))
for name, s in result["summary"].items():
    print(f"{name:<22} replaced fraction per run:",
          [round(r["augmentation"]["replaced_fraction"], 3) for r in result["runs"] if r["strategy"] == name])

rows = sweep("p", [0.1, 0.5, 0.9], base, seeds=[1])
print()
print(sweep_csv(rows))
