"""Crossing probabilities of level sets in d = 3 and a rough critical-level estimate.

Each sample yields the largest level at which the inner box still reaches the
outer sphere, so a whole curve in h costs one labelling sweep per sample.

Run: python3 demos/02_crossing_curves.py  (about a minute)
"""
import numpy as np

from gffperc.percolation import crossing_thresholds, fit_decay, fraction_above, half_crossing_level, McEstimate

levels = np.round(np.arange(0.0, 3.01, 0.5), 2)
sizes = (4, 8, 16)
n = 200
curves = {}
for L in sizes:
    t = crossing_thresholds(3, L, n, seed=1)
    curves[L] = [McEstimate.bernoulli(fraction_above(t, h), n, 1) for h in levels]
    print(f"L={L:>2}  " + "  ".join(f"{h:.1f}:{e.value:.3f}" for h, e in zip(levels, curves[L])))
    print(f"      level where half the samples cross: {half_crossing_level(t, (0.0, 3.0)):.3f}")

print("\nDecay classification per level")
for j, h in enumerate(levels):
    try:
        fit = fit_decay([(L, curves[L][j]) for L in sizes])
        print(f"  h={h:.1f}: {fit.classification}" + (f" (rho={fit.rho:.2f})" if fit.rho else ""))
    except ValueError as exc:
        print(f"  h={h:.1f}: no fit ({exc})")
