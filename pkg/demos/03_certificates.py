"""Exact and conditional arithmetic: the multi-scale recursion and the slab dimension threshold.

Run: python3 demos/03_certificates.py
"""
import math

from gffperc.renorm import RenormConfig, certify_from_seed, h_sequence, p0_upper_bound, rho, tree_counts
from gffperc.slab import find_d0, peierls_sum, peierls_tail

cfg = RenormConfig(3, 10, 100, 16.0)
print(f"growth exponent for l0=100: {rho(100):.12f}")
print(f"K0 with the default constants: {cfg.K0:.6f}")
for h0 in (12.0, 16.0):
    c = RenormConfig(3, 10, 100, h0)
    p0 = p0_upper_bound(c)
    tr = certify_from_seed(c, p0)
    print(f"h0={h0:>4}: seed bound p0={p0:.3e}, certificate {tr.certificate} (valid={tr.valid})")

hs = h_sequence(cfg, 40)
print(f"levels rise from {hs.h[0]} to a limit {hs.h_infinity:.6f}")

small = RenormConfig(3, 1, 4, 1.0, strict=False)
for n in (1, 2):
    tc = tree_counts(small, n)
    print(f"trees at depth {n} (l0=4): exact {tc.exact}, bound 10^{tc.log_bound / math.log(10):.1f}")

print(f"\nPeierls sum at n=5: {peierls_sum(5)}; tail from n=2: {peierls_tail(2)}")
for h0 in (0.25, 1.0):
    print(f"smallest dimension certified for h0={h0}, L0=2: d0={find_d0(h0, 2)}")
