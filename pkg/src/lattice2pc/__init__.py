"""Two-party approximate matrix multiplication from LWE/SIS, and an encrypted control loop built on it."""

from .ring import Modulus, ZqMatrix, mat_add, mat_mul, mat_neg, mat_sub, mat_transpose, reduce
from .sampling import GaussianSpec, RngStream, Role, sample_gaussian, sample_uniform_zq, sample_z3
from .secretshare import SharePair, reconst, share
from .lattice import LweParams, SisParams, lwe_encrypt, sis_commit
from .fixedpoint import FixedPointMatrix, FixedPointSpec, decode_2l, encode_2l, encode_l, quantize
from .params import ProtocolParams, ci_preset, feasible_window, full_preset, validate
from .protocol import Client, Operator, Party, offline, run_mult, setup
from .transport import Transcript, run_session, transcript_round_count
from .control import LoopTrace, run_encrypted_loop

__version__ = "0.1.0"
