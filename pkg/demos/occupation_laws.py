"""Occupation times and last visits by renewal-accelerated simulation.

Each excursion from Y is drawn in one step from the Ulam chain of the
induced map, so a horizon of 10^6 costs only as many steps as there are
returns.  Pass a thread count as the first argument.
"""
import math
import sys

import numpy as np

from oprenewal import build_operator, make_lsv
from oprenewal import stochastic as st

threads = int(sys.argv[1]) if len(sys.argv) > 1 else 1

seq, _ = build_operator(make_lsv(2.0), m=1024, N=4096)
sampler = st.RenewalSampler.from_operator(seq)
S, Z = st.simulate_renewals(sampler, 10 ** 5, 40_000, seed=1, threads=threads)

law = st.sample_occupation(sampler, 10 ** 5, len(S), S=S)
print(f"beta=1/2 Darling-Kac: mean {law.moments[0]:.4f}, "
      f"second moment {law.moments[1]:.4f} (pi/2 = {math.pi / 2:.4f}), KS {law.ks:.4f}")

arc = st.sample_arcsine(sampler, 10 ** 5, len(Z), Z=Z)
print(f"beta=1/2 last visit Z_n/n vs (2/pi) arcsin sqrt t: KS {arc.ks:.4f}")

# direct orbits of the map agree with the jump chain
S_j, _ = st.simulate_renewals(sampler, 1000, 5000, seed=2)
S_o, _ = st.simulate_orbits(sampler, 1000, 5000, seed=2)
q = np.linspace(0.1, 0.9, 5)
print("occupation quantiles, jump chain :", np.quantile(S_j, q))
print("occupation quantiles, direct orbit:", np.quantile(S_o, q))
