"""Scalar renewal sequences with a heavy-tailed return law.

For first-return probabilities with tail n^{-beta} the renewal sequence
decays like n^{beta-1}, and n^{1-beta} u_n settles at sin(beta pi)/pi.
Run with ``python3 demos/scalar_renewal.py``.
"""
import time

import numpy as np

from oprenewal import scalar as sc
from oprenewal.spectral import constants, d_beta

# --- first order -----------------------------------------------------------
beta, N = 0.75, 10 ** 6
t0 = time.perf_counter()
u = sc.renewal_sequence(sc.pareto_f(beta, N), method="fft")
print(f"u_0..u_{N} by online FFT convolution in {time.perf_counter() - t0:.1f} s")
for n in (10, 100, 10 ** 4, N):
    print(f"  n={n:>8d}  n^(1-beta) u_n = {u[n] * n ** (1 - beta):.6f}")
print(f"  limit d_beta = {d_beta(beta):.6f}")

# --- the next term -----------------------------------------------------------
# for beta > 3/4 the residual n^{1-beta} (n^{1-beta} u_n - d_beta) has its own limit
beta = 0.85
C = constants(beta)
u = sc.renewal_sequence(sc.pareto_f(beta, N), method="fft")
n = np.array([10 ** 3, 10 ** 4, 10 ** 5, N])
res = n ** (1 - beta) * (u[n] * n ** (1 - beta) - C.d_beta)
print(f"\nbeta={beta}: residual {np.round(res, 5)} -> d_beta_1 = {C.d_beta_j(1):.5f}")

# --- beta <= 1/2 -------------------------------------------------------------
# pointwise convergence can fail; it holds off a set of zero density
beta = 0.4
rep = sc.zero_density_demo(sc.pareto_f(beta, N), beta, [10 ** 4, 10 ** 5, N])
print(f"\nbeta={beta}: target {rep.target:.6f}")
for k, Nk in enumerate(rep.Ns):
    dens = ", ".join(f"eps={e}: {rep.density[e][k]:.2e}" for e in rep.eps)
    print(f"  N={Nk:>8d} liminf {rep.liminf[k]:.6f}  cesaro {rep.cesaro[k]:.6f}  {dens}")

# --- slowly varying corrections ---------------------------------------------
k = sc.karamata_sum(np.log(np.arange(1, N + 1)), -0.5)
print(f"\nKaramata ratio for ell = log, p = -1/2: {np.round(k.ratio, 4)}")
print("  (approaches 1 like 1 - 2/log n)")
