"""Walk Green function, its high-dimensional behaviour, and the scalars built from it.

Run: python3 demos/01_green_function.py
"""
from gffperc.greens import green, green_box, highdim_scalars, kappa

print("g(0) on Z^3 by two independent routes")
q = green(3, 0)
b = green_box(3, [[0, 0, 0]])[0]
print(f"  lattice-sum quadrature {q.value:.10f}   box solve {b.value:.10f}")

print("\nAs d grows, g(0) approaches 1 + 1/(2d) and kappa approaches 1 - 7/(2d)")
for d in (6, 10, 20, 50, 100):
    g0 = green(d, 0).value
    k = kappa(d)
    print(f"  d={d:>3}  g(0)={g0:.6f}  1+1/2d={1 + 1 / (2 * d):.6f}   kappa={k:.6f}  1-7/2d={1 - 7 / (2 * d):.6f}")

print("\nScalars that drive the split into an iid part and a correlated remainder")
for d in (6, 10, 30):
    s = highdim_scalars(d)
    print(f"  d={d:>2}  sigma^2={s.sigma2:.6f}  rho_bound={s.rho_bound:.6f}")
