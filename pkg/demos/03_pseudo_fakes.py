"""
Pseudo-fakes near the decision boundary
=======================================

Train a detector briefly, then push clips one signed-gradient step towards
the (0.5, 0.5) target and towards a confident-fake target, and look at
where the detector puts them.
"""

import tempfile

import numpy as np

from pseudofake import augmentation as aug
from pseudofake import corpus as cp
from pseudofake.harness import TrainConfig, train
from pseudofake.model import forward

tmp = tempfile.mkdtemp()
cp.generate_corpus(tmp, master_seed=1, counts={"train": (60, 15), "dev": (20, 5), "eval": (10, 5)})
report, model = train(TrainConfig(tmp, epochs=15, seed=0))
print(f"dev EER after {report['selected_epoch']} epochs: {report['dev_eer']:.3f}")

clips = cp.load_split(tmp, "dev")[:6]
print(f"\n{'clip':<18}{'p_real':>8}" + "".join(f"{'amb e=' + str(e):>12}" for e in (0.01, 0.05, 0.2))
      + f"{'fake e=0.05':>13}{'gauss s=.05':>13}")
rng = np.random.default_rng(0)
for c in clips:
    row = f"{c.clip_id:<18}{forward(model, c.samples).p_real:>8.3f}"
    for eps in (0.01, 0.05, 0.2):
        d = aug.targeted_perturbation(c.samples, model, aug.ambiguous_target(), eps).delta
        row += f"{forward(model, c.samples + d).p_real:>12.3f}"
    d = aug.targeted_perturbation(c.samples, model, aug.confident_fake_target(), 0.05).delta
    row += f"{forward(model, c.samples + d).p_real:>13.3f}"
    d = aug.gaussian_perturbation(c.samples, 0.05, rng).delta
    row += f"{forward(model, c.samples + d).p_real:>13.3f}"
    print(row)

# every targeted element is -eps, 0 or +eps
d = aug.targeted_perturbation(clips[0].samples, model, (0.5, 0.5), 0.1).delta
print("\ndistinct delta values:", np.unique(d))

# mixing into a batch: all replaced entries come back labelled fake
batch = [(c.samples, c.one_hot, c.clip_id) for c in clips]
cfg = aug.AugmentationConfig("targeted_ambiguous", p=0.7)
for (_, old, cid), (_, new, _) in zip(batch, aug.augment_batch(batch, model, cfg, rng=7)):
    print(f"{cid:<18}{str(old):>12} -> {new}")
