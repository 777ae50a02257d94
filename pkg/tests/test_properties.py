"""Randomised invariant checks."""
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from adiabatic_cz.benchmarking.clifford import GROUP_ORDER, CliffordElement, equal_up_to_phase
from adiabatic_cz.calibration import conditional_phase, z_phase
from adiabatic_cz.device import DeviceParams, build_hamiltonian, number_operator_total
from adiabatic_cz.dynamics import (
    ModeNoise,
    NoiseModel,
    PulseShape,
    Subspace,
    channel_from_pulse,
    dressed_frame,
    propagate_unitary,
    to_dressed,
)

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

couplings = st.tuples(
    st.floats(0.0, 0.03), st.floats(0.02, 0.2), st.floats(0.02, 0.2)
)
coupler_freq = st.floats(4.0, 6.74)


def _device(g, levels=3):
    g12, g1c, g2c = g
    return DeviceParams().with_levels(levels).with_couplings(g12=g12, g1c=g1c, g2c=g2c)


def _pulse(params, peak, duration, space="frequency"):
    return PulseShape(params.idle_frequency, peak, duration, sample_step=duration / 200, space=space, flux_map=params.flux_map)


@SETTINGS
@given(couplings, coupler_freq, st.integers(3, 5))
def test_hamiltonian_hermitian_and_conserving(g, wc, levels):
    p = _device(g, levels)
    H = build_hamiltonian(p, wc)
    N = number_operator_total(p)
    assert np.abs(H - H.conj().T).max() < 1e-12
    assert np.abs(H @ N - N @ H).max() < 1e-12


@SETTINGS
@given(couplings, st.floats(5.0, 6.7), st.floats(5.0, 40.0), st.sampled_from(["frequency", "flux"]))
def test_propagator_unitary(g, peak, duration, space):
    p = _device(g)
    U = propagate_unitary(p, _pulse(p, peak, duration, space), verify=False)
    assert np.abs(U.conj().T @ U - np.eye(len(U))).max() < 1e-9
    # no amplitude moves between excitation manifolds
    N = np.diag(number_operator_total(p))
    assert np.abs(U[N[:, None] != N[None, :]]).max() < 1e-12


@settings(max_examples=8, deadline=None)
@given(
    st.floats(5.2, 6.7),
    st.floats(0.5, 50.0),
    st.floats(0.5, 50.0),
    st.floats(0.2, 5.0),
    st.sampled_from(["markovian", "quasi_static_gaussian"]),
)
def test_channel_trace_preserving_and_cp(peak, t1, tphi, tphi_c, kind):
    p = DeviceParams().with_levels(3)
    noise = NoiseModel(ModeNoise(t1, tphi), ModeNoise(t1 / 5, tphi_c), ModeNoise(t1, tphi), kind)
    ch = channel_from_pulse(p, _pulse(p, peak, 10.0), noise, validate=False)
    assert ch.trace_error() < 1e-9
    assert ch.min_choi_eigenvalue() > -1e-9


@SETTINGS
@given(couplings, st.floats(5.0, 6.7), st.floats(5.0, 40.0), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_conditional_phase_frame_invariant(g, peak, duration, a, b):
    p = _device(g)
    pulse = _pulse(p, peak, duration)
    fr = dressed_frame(p)
    U = propagate_unitary(p, pulse, max_excitation=2, verify=False)
    comp = np.ix_(fr.computational, fr.computational)
    lab = to_dressed(U, fr)[comp]
    rot = to_dressed(U, fr, duration)[comp]
    ref = conditional_phase(lab)
    for M in (rot, z_phase(a, b) @ rot, rot @ z_phase(b, a)):
        assert abs(np.angle(np.exp(1j * (conditional_phase(M) - ref)))) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, GROUP_ORDER - 1), st.integers(0, GROUP_ORDER - 1))
def test_clifford_closure_and_inverse(i, j):
    a, b = CliffordElement.from_index(i), CliffordElement.from_index(j)
    ab = a @ b
    assert 0 <= ab.index < GROUP_ORDER
    assert equal_up_to_phase(ab.unitary(), a.unitary() @ b.unitary())
    assert equal_up_to_phase(a.inverse().unitary() @ a.unitary(), np.eye(4))
    assert (ab.inverse() @ ab).is_identity()
