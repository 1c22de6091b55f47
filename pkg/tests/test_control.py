import math
from fractions import Fraction

import numpy as np
import pytest

from lattice2pc.control import (
    ControllerSpec, PlantModel, example_controller, example_plant, plaintext_loop, plant_step,
    quantization_bound, quantized_control, reference_signal, run_encrypted_loop, true_control, zero_reference,
)
from lattice2pc.fixedpoint import FixedPointSpec
from lattice2pc.params import ProtocolParams, ci_preset, full_preset

EPS = Fraction(1, 1024)


def wide_params():
    # n = 512 with a 100-bit modulus: (49, 38) leaves 11 integer bits, so nothing saturates
    return ProtocolParams.create(n=512, q_bits=100, t=2048, k=49, l=38, epsilon=2.0**-10)


def test_plant_step_examples():
    m = example_plant()
    assert np.array_equal(plant_step(m, [0, 0], [0]), [0, 0])
    assert np.allclose(plant_step(m, [1, -1], [6.24]), [1.6, 3.02], atol=1e-14)
    rng = np.random.default_rng(0)
    x1, x2, u1, u2 = rng.normal(size=2), rng.normal(size=2), rng.normal(size=1), rng.normal(size=1)
    assert np.allclose(plant_step(m, x1 + x2, u1 + u2), plant_step(m, x1, u1) + plant_step(m, x2, u2))
    with pytest.raises(ValueError):
        PlantModel(A=[[1, 0]], B=[[0]], x0=[1])


def test_true_control_examples():
    c = example_controller()
    assert abs(true_control(c, [1, -1], 0)[0] - 6.24) < 1e-14
    five = ControllerSpec(K=[[3.84, -2.4]], reference=lambda tau: [5.0])
    assert true_control(five, [0, 0], 3)[0] == 5.0
    assert abs(reference_signal(5)[0]) < 1e-14
    assert reference_signal(0)[0] == 0
    assert abs(reference_signal(1)[0] - 5.877852522924731) < 1e-12
    assert zero_reference(3)[0] == 0
    with pytest.raises(ValueError):
        ControllerSpec(K=[[np.inf, 0]])


def test_quantized_control_exact_when_representable():
    c = ControllerSpec(K=[[0.5, -1.25]], reference=lambda tau: [0.75])
    law = quantized_control(c, [2.0, 1.0], 0, FixedPointSpec(20, 8))
    assert law.u[0] == Fraction(1) - Fraction(5, 4) + Fraction(3, 4)
    assert law.saturated == 0


def test_quantized_control_demo_values():
    spec = full_preset().fp
    law = quantized_control(example_controller(), [1.0, -1.0], 0, spec)
    assert abs(law.u[0] - Fraction(624, 100)) <= Fraction(4, 1 << spec.l)


def test_quantization_bound_holds():
    c = example_controller()
    spec = FixedPointSpec(30, 20)
    rng = np.random.default_rng(1)
    for tau in range(30):
        x = rng.uniform(-5, 5, 2)
        law = quantized_control(c, x, tau, spec)
        u = true_control(c, x, tau)
        assert abs(Fraction(u[0]) - law.u[0]) <= quantization_bound(c, x, spec) + Fraction(1, 2**50)


def test_noiseless_single_step_is_exact():
    c = example_controller(zero_reference)
    tr = run_encrypted_loop(wide_params(), example_plant(), c, steps=0, noiseless=True)
    assert len(tr) == 1
    assert tr.records[0].u_enc[0] == tr.records[0].u_quant[0]
    assert tr.records[0].err_quant == 0


def test_wide_params_loop_bounds():
    tr = run_encrypted_loop(wide_params(), example_plant(), example_controller(), steps=50)
    assert len(tr) == 51 and tr.saturated == 0
    assert tr.max_err_quant < EPS
    c, spec = example_controller(), wide_params().fp
    for r in tr.records:
        assert r.err_true <= r.err_quant + quantization_bound(c, r.x, spec) + Fraction(1, 2**45)
    assert tr.max_err_true < Fraction(1, 100)


def test_ci_loop_bound_and_determinism():
    p = ci_preset()
    a = run_encrypted_loop(p, example_plant(), example_controller(), steps=50)
    assert a.max_err_quant < Fraction(p.epsilon)
    b = run_encrypted_loop(p, example_plant(), example_controller(), steps=50)
    assert a.to_csv() == b.to_csv()
    other = run_encrypted_loop(p, example_plant(), example_controller(), steps=50, seed=bytes([1]) * 32)
    assert other.to_csv() != a.to_csv()


def test_csv_format():
    tr = run_encrypted_loop(ci_preset(), example_plant(), example_controller(), steps=3)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "tau,x1,x2,v,u_true,u_quant,u_enc,err_quant,err_true"
    assert len(lines) == 5
    row = lines[1].split(",")
    assert row[0] == "0" and row[1] == "1" and row[2] == "-1"
    assert float(row[4]) == 3.84 + 2.4
    # errors are rounded from exact rationals
    r = tr.records[2]
    assert float(lines[3].split(",")[7]) == float(r.err_quant)


def test_plaintext_loops_recorded():
    xs = plaintext_loop(example_plant(), example_controller(), 10)
    xq = plaintext_loop(example_plant(), example_controller(), 10, FixedPointSpec(53, 44))
    assert xs.shape == xq.shape == (11, 2)
    assert np.max(np.abs(xs - xq)) < 1e-9
