"""Multiply two matrices without either computing party seeing them.

Run:  python demos/02_encrypted_product.py
"""

import numpy as np

from lattice2pc.fixedpoint import encode_l, quantize
from lattice2pc.params import ci_preset
from lattice2pc.protocol import Client, Party, run_mult
from lattice2pc.sampling import derive_seed
from lattice2pc.secretshare import SharePair, reconst
from lattice2pc.transport import transcript_round_count

p = ci_preset((2, 3, 2))
print(p.summary())

rng = np.random.default_rng(3)
X = quantize(rng.uniform(-1, 1, (2, 3)), p.fp)
Y = quantize(rng.uniform(-1, 1, (3, 2)), p.fp)

# Whole protocol over in-process channels: setup, offline, one online step.
Z, transcript = run_mult(p, X, Y, exact=True)
exact = X.values().dot(Y.values())
err = max(abs(a - b) for a, b in zip(Z.ravel(), exact.ravel()))
print("max |XY - Z| =", float(err), " target", p.epsilon)
print("party rounds  =", transcript_round_count(transcript, step=0))
for e in transcript.entries:
    print(f"  {e.phase:7} {e.src.name:>7} -> {e.dst.name:<7} {e.kind.name:8} {e.size:8d} bytes")

# The same computation by hand, role by role.
seed = bytes(32)
client = Client(p, derive_seed(seed, "client"))
crs = client.setup()
m0, m1, secrets = client.offline(crs, X, expose=True)
p0 = Party(0, derive_seed(seed, "party0"), keep_randomness=True)
p1 = Party(1, derive_seed(seed, "party1"), keep_randomness=True)
p0.load(crs, m0)
p1.load(crs, m1)

y0, y1 = client.online_begin(Y, step=0)
h0, h1 = p0.phase1(y0), p1.phase1(y1)       # the single exchange
z0, z1 = p0.phase2(h1), p1.phase2(h0)

# Exact identity behind the error bound: the result equals XY plus two small noise terms.
Xbar, Ybar = encode_l(X, p.modulus), encode_l(Y, p.modulus)
R = p0.randomness[0] + p1.randomness[0]
rhs = Xbar @ Ybar + secrets.E.T @ Ybar + secrets.E_prime.T @ R
print("identity holds:", reconst(SharePair(z0.body, z1.body)) == rhs)
print("noise terms   :", (secrets.E.T @ Ybar + secrets.E_prime.T @ R).to_ints().tolist())
