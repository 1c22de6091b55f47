"""The error distribution: exp(-pi x^2 / sigma^2) over the integers, sigma = 3.2.

Run:  python demos/04_gaussian_sampler.py
"""

import numpy as np

from lattice2pc.sampling import GaussianSpec, RngStream, gaussian_values

g = GaussianSpec.from_sigma(3.2)
print("sigma", g.sigma, "bound", g.bound, "variance", round(g.variance(), 6))

v = gaussian_values(RngStream(bytes(32), 1), 1_000_000, g)
counts = np.bincount(v + g.bound, minlength=2 * g.bound + 1)
exact = g.pmf()
for x in range(-8, 9):
    bar = "#" * int(200 * counts[x + g.bound] / v.size)
    print(f"{x:3d} {float(exact[x]):.5f} {counts[x + g.bound] / v.size:.5f} {bar}")

tv = 0.5 * sum(abs(counts[x + g.bound] / v.size - float(p)) for x, p in exact.items())
print("total variation at 1e6 samples:", tv)
print("largest |sample|:", np.abs(v).max())
