"""
The synthetic corpus
====================

Real clips are vibrato harmonic tones with a pink noise floor.  Ten attack
families corrupt them; four are used for training, the other six only at
evaluation time.
"""

import tempfile

import numpy as np

from pseudofake import corpus as cp

clip = cp.synth_real(seed=12)
print(f"real clip: {clip.samples.size} samples at {clip.sample_rate} Hz, "
      f"f0 = {clip.meta['f0']:.1f} Hz, peak = {np.max(np.abs(clip.samples)):.3f}")


def band_energy(x, lo, hi):
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(x.size, 1 / cp.SAMPLE_RATE)
    return 10 * np.log10(spec[(f >= lo) & (f < hi)].sum() / spec.sum() + 1e-300)


print(f"\n{'attack':<8}{'seen':>6}{'rms':>8}{'<100 Hz dB':>12}{'>2 kHz dB':>11}  params")
print(f"{'none':<8}{'':>6}{np.sqrt(np.mean(clip.samples ** 2)):>8.3f}"
      f"{band_energy(clip.samples, 0, 100):>12.1f}{band_energy(clip.samples, 2000, 4000):>11.1f}")
for attack in cp.ATTACKS:
    fake = cp.apply_attack(clip, attack, seed=3)
    x = fake.samples
    extra = {k: v for k, v in fake.meta.items() if k not in ("f0", "n_harmonics")}
    print(f"{attack:<8}{'yes' if attack in cp.SEEN_ATTACKS else 'no':>6}{np.sqrt(np.mean(x ** 2)):>8.3f}"
          f"{band_energy(x, 0, 100):>12.1f}{band_energy(x, 2000, 4000):>11.1f}  {extra}")

# the 4-bit quantiser: 16 levels over [-1, 1]
print("\n0.30 at 4 bits ->", cp.quantize(np.array([0.30]), 4)[0])

# a miniature corpus on disk
with tempfile.TemporaryDirectory() as d:
    m = cp.generate_corpus(d, master_seed=0, counts={"train": (4, 1), "dev": (2, 1), "eval": (2, 1)})
    for split, entries in m["splits"].items():
        print(split, sorted({e["attack_id"] for e in entries}))
    print("first entry:", m["splits"]["train"][0])
