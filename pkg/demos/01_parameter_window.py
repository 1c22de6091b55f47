"""Which fixed-point word lengths survive a given lattice parameter set?

Run:  python demos/01_parameter_window.py
"""

from lattice2pc.lattice import LweParams
from lattice2pc.params import feasible_window, l_lower_bound, full_preset, validate
from lattice2pc.ring import Modulus

# The full-size set: n = 4096, q = 2^108, t = 2 n log2 q, precision target 2^-10.
p = full_preset()
print(p.summary())
w = feasible_window(p.lwe, p.t, p.dims, p.epsilon)
print("window        :", w.describe())
print("k_max (raw)   :", round(w.k_max, 6))
print("l_min at k_max:", round(w.l_min(w.k_max), 6))
print("largest k     :", w.best())
print("(53, 44) ok   :", validate(p) == [])

# Every halving of epsilon costs half a fractional bit.
for e in range(6, 15, 2):
    print(f"eps = 2^-{e:<2}  l_min(53) = {l_lower_bound(53, 2, p.t, 2.0**-e):.3f}")

# A tiny modulus cannot absorb the commitment randomness at all.
small = feasible_window(LweParams(64, Modulus(16)), 1024, (1, 2, 1), 2.0**-10)
print("q = 2^16, t = 1024:", small.describe())

# The reduced set used for fast runs keeps only about two integer bits.
reduced = feasible_window(LweParams(512, Modulus(64)), 2048, (1, 2, 1), 2.0**-10)
print("q = 2^64, t = 2048:", reduced.describe(), "->", reduced.best())
