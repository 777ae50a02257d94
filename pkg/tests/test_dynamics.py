import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import solve_ivp

from adiabatic_cz.calibration import conditional_phase, z_phase
from adiabatic_cz.device import build_hamiltonian, state_index
from adiabatic_cz.dynamics import (
    TWO_PI,
    ModeNoise,
    NoiseModel,
    PulseShape,
    QuantumChannel,
    Subspace,
    channel_from_pulse,
    dressed_frame,
    idle_pulse,
    propagate_lindblad,
    propagate_unitary,
    pulse_waveform,
    to_dressed,
    virtual_z,
)
from adiabatic_cz.errors import AccuracyError, RangeError, ValidationError
from adiabatic_cz.io import read_csv

PEAK_30NS = 5.098260888046311


def cz_pulse(params, peak=PEAK_30NS, duration=30.0):
    return PulseShape.for_device(params, duration).with_peak(peak)


# -- pulses ---------------------------------------------------------------


def test_waveform_endpoints_and_midpoint(nominal):
    p = cz_pulse(nominal)
    assert pulse_waveform(p, 0.0) == pytest.approx(nominal.idle_frequency, abs=1e-12)
    assert pulse_waveform(p, 30.0) == pytest.approx(nominal.idle_frequency, abs=1e-12)
    assert pulse_waveform(p, 15.0) == pytest.approx(PEAK_30NS, abs=1e-12)


def test_waveform_edges_are_not_flat(nominal):
    p = cz_pulse(nominal)
    slope = (pulse_waveform(p, 1e-3) - pulse_waveform(p, 0.0)) / 1e-3
    assert abs(slope) > 0.1


def test_waveform_out_of_range(nominal):
    with pytest.raises(RangeError):
        pulse_waveform(cz_pulse(nominal), 30.5)


def test_flux_space_pulse_is_sine_in_flux(nominal):
    p = PulseShape.for_device(nominal, 30.0, flux_amplitude=0.3, space="flux")
    t = np.linspace(0, 30, 7)
    assert np.allclose(p.flux(t), p.idle_flux + 0.3 * np.sin(np.pi * t / 30))
    assert p.flux_amplitude == pytest.approx(0.3)


def test_pulse_validation(nominal):
    with pytest.raises(ValidationError):
        PulseShape(6.74, 5.0, 30.0, sample_step=1.0)
    with pytest.raises(ValidationError):
        PulseShape(6.74, 5.0, -1.0)
    with pytest.raises(RangeError):
        PulseShape.for_device(nominal, 30.0).with_peak(7.5)


def test_waveform_csv(nominal, tmp_path):
    path = cz_pulse(nominal).to_csv(tmp_path / "w.csv")
    _, header, rows = read_csv(path)
    assert header == ["t_ns", "coupler_frequency_GHz", "flux_Phi0"]
    assert len(rows) == 15001


# -- unitary propagation ---------------------------------------------------


def test_idle_pulse_is_free_evolution(nominal):
    U = propagate_unitary(nominal, idle_pulse(nominal, 12.0))
    H = build_hamiltonian(nominal, nominal.idle_frequency)
    assert np.abs(U - scipy.linalg.expm(-1j * TWO_PI * H * 12.0)).max() < 1e-9


def _ode_propagator(params, pulse, sub):
    """Independent oracle: adaptive Runge-Kutta on the Schrödinger equation."""
    from adiabatic_cz.device import hamiltonian_parts

    h0, nc = hamiltonian_parts(params)
    idx = sub.indices
    h0, nc = h0[np.ix_(idx, idx)], nc[np.ix_(idx, idx)]
    d = len(idx)

    def rhs(t, y):
        H = h0 + pulse.frequency(t) * nc
        return (-1j * TWO_PI * H @ y.reshape(d, d)).ravel()

    sol = solve_ivp(rhs, (0, pulse.duration), np.eye(d, dtype=complex).ravel(), method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[:, -1].reshape(d, d)


def test_propagator_matches_ode_oracle(small):
    pulse = cz_pulse(small, peak=5.3, duration=12.0)
    sub = Subspace(small, 2)
    U = propagate_unitary(small, pulse, max_excitation=2)
    assert np.abs(U - _ode_propagator(small, pulse, sub)).max() < 1e-8


def test_propagator_unitary(nominal):
    U = propagate_unitary(nominal, cz_pulse(nominal), max_excitation=2)
    assert np.abs(U.conj().T @ U - np.eye(len(U))).max() < 1e-9


def test_subspace_restriction_is_exact(small):
    pulse = cz_pulse(small, peak=5.4, duration=10.0)
    full = propagate_unitary(small, pulse, verify=False)
    sub = Subspace(small, 2)
    part = propagate_unitary(small, pulse, max_excitation=2, verify=False)
    assert np.abs(full[np.ix_(sub.indices, sub.indices)] - part).max() < 1e-12


def test_richardson_check_raises(small):
    with pytest.raises(AccuracyError) as info:
        propagate_unitary(small, cz_pulse(small, duration=10.0), dt=0.1, tolerance=1e-14)
    assert info.value.residual > 1e-14


def test_calibrated_pulse_is_cz(nominal):
    U = to_dressed(propagate_unitary(nominal, cz_pulse(nominal), max_excitation=2), dressed_frame(nominal), 30.0)
    comp = dressed_frame(nominal).computational
    assert conditional_phase(U[np.ix_(comp, comp)]) == pytest.approx(np.pi, abs=1e-6)


def test_conditional_phase_frame_invariant(nominal, rng):
    frame = dressed_frame(nominal)
    U = to_dressed(propagate_unitary(nominal, cz_pulse(nominal), max_excitation=2), frame, 30.0)
    M = U[np.ix_(frame.computational, frame.computational)]
    base = conditional_phase(M)
    for _ in range(10):
        a, b, c, d = rng.uniform(-np.pi, np.pi, 4)
        rotated = z_phase(a, b) @ M @ z_phase(c, d)
        assert abs(np.angle(np.exp(1j * (conditional_phase(rotated) - base)))) < 1e-10


# -- open-system propagation -------------------------------------------------


def _qubit_state(params, which, plus=False):
    """Dressed |00> / |1> state of one qubit, as a full-space density matrix,
    plus the full-space dressed vectors used to read it out."""
    frame = dressed_frame(params)
    sub = Subspace(params, 2)
    D = params.dimension
    vecs = np.zeros((D, 2), complex)
    vecs[sub.indices, 0] = frame.vectors[:, frame.index((0, 0, 0))]
    vecs[sub.indices, 1] = frame.vectors[:, frame.index((1, 0, 0) if which == 1 else (0, 0, 1))]
    psi = (vecs[:, 0] + vecs[:, 1]) / np.sqrt(2) if plus else vecs[:, 1]
    return np.outer(psi, psi.conj()), vecs


def _qubit_block(rho, vecs):
    return vecs.conj().T @ rho @ vecs


def test_lindblad_noiseless_matches_unitary(small):
    pulse = cz_pulse(small, peak=5.3, duration=10.0)
    psi = np.zeros(small.dimension, complex)
    psi[state_index(small, (1, 0, 1))] = 0.6
    psi[state_index(small, (0, 0, 1))] = 0.8
    rho0 = np.outer(psi, psi.conj())
    U = propagate_unitary(small, pulse)
    out = propagate_lindblad(small, pulse, None, rho0)
    assert np.abs(out - U @ rho0 @ U.conj().T).max() < 1e-8


def test_lindblad_t1_decay(small):
    noise = NoiseModel(q2=ModeNoise(t1=10.0))
    rho0, vecs = _qubit_state(small, 2)
    out = propagate_lindblad(small, idle_pulse(small, 1000.0), noise, rho0)
    # the dressed |001> keeps a ~0.3% coupler admixture, which does not decay here
    assert _qubit_block(out, vecs)[1, 1].real == pytest.approx(np.exp(-0.1), abs=5e-4)
    assert np.trace(out).real == pytest.approx(1, abs=1e-8)


def test_markovian_dephasing_is_exponential(small):
    noise = NoiseModel(q2=ModeNoise(tphi=2.0))
    rho0, vecs = _qubit_state(small, 2, plus=True)
    out = propagate_lindblad(small, idle_pulse(small, 1000.0), noise, rho0)
    assert 2 * abs(_qubit_block(out, vecs)[0, 1]) == pytest.approx(np.exp(-0.5), abs=2e-3)


@pytest.mark.parametrize("t_ns", [300.0, 700.0, 1000.0])
def test_quasi_static_dephasing_is_gaussian(small, t_ns):
    noise = NoiseModel(q2=ModeNoise(tphi=1.0), dephasing_kind="quasi_static_gaussian")
    rho0, vecs = _qubit_state(small, 2, plus=True)
    out = propagate_lindblad(small, idle_pulse(small, t_ns), noise, rho0)
    assert 2 * abs(_qubit_block(out, vecs)[0, 1]) == pytest.approx(np.exp(-((t_ns / 1000) ** 2)), abs=0.01)


def _lindblad_ode(params, pulse, noise, rho0, sub):
    """Independent oracle: the full master equation integrated with RK."""
    from adiabatic_cz.device import hamiltonian_parts, mode_operators

    h0, nc = hamiltonian_parts(params)
    idx = sub.indices
    h0, nc = h0[np.ix_(idx, idx)], nc[np.ix_(idx, idx)]
    ops = [a[np.ix_(idx, idx)] for a in mode_operators(params)]
    d = len(idx)

    def rhs(t, y):
        w = pulse.frequency(t)
        rho = y.reshape(d, d)
        H = h0 + w * nc
        out = -1j * TWO_PI * (H @ rho - rho @ H)
        g1 = noise.relaxation_rates(np.array([w]))[0]
        gp = noise.dephasing_rates(np.array([w]))[0]
        for k, a in enumerate(ops):
            n = a.T @ a
            for L, rate in ((a, g1[k]), (n, 2 * gp[k])):
                if rate:
                    LdL = L.conj().T @ L
                    out += rate * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
        return out.ravel()

    sol = solve_ivp(rhs, (0, pulse.duration), rho0.ravel(), method="DOP853", rtol=1e-11, atol=1e-12)
    return sol.y[:, -1].reshape(d, d)


def test_lindblad_matches_master_equation_oracle(small):
    table = ((5.0, 6.74), (0.5, 3.0))
    noise = NoiseModel(
        q1=ModeNoise(t1=2.0, tphi=1.0),
        coupler=ModeNoise(t1_table=table, tphi_table=table),
        q2=ModeNoise(t1=3.0, tphi=1.5),
    )
    pulse = cz_pulse(small, peak=5.3, duration=20.0)
    sub = Subspace(small, 2)
    psi = np.zeros(sub.dim, complex)
    lab = sub.labels
    psi[lab.index((1, 0, 1))] = psi[lab.index((0, 0, 0))] = psi[lab.index((1, 0, 0))] = 1 / np.sqrt(3)
    rho_sub = np.outer(psi, psi.conj())
    rho0 = np.zeros((small.dimension,) * 2, complex)
    rho0[np.ix_(sub.indices, sub.indices)] = rho_sub
    out = propagate_lindblad(small, pulse, noise, rho0)[np.ix_(sub.indices, sub.indices)]
    ref = _lindblad_ode(small, pulse, noise, rho_sub, sub)
    assert np.abs(out - ref).max() < 1e-5


def test_lindblad_rejects_invalid_state(small):
    bad = np.eye(small.dimension) / small.dimension
    bad[0, 1] = 0.3
    with pytest.raises(ValidationError):
        propagate_lindblad(small, idle_pulse(small, 1.0), None, bad)
    with pytest.raises(ValidationError):
        propagate_lindblad(small, idle_pulse(small, 1.0), None, 2 * np.eye(small.dimension) / small.dimension)


# -- noise model ----------------------------------------------------------------


def test_offset_draws_seeded_and_symmetric():
    a = NoiseModel(dephasing_kind="quasi_static_gaussian", seed=3).offset_draws()
    b = NoiseModel(dephasing_kind="quasi_static_gaussian", seed=3).offset_draws()
    c = NoiseModel(dephasing_kind="quasi_static_gaussian", seed=4).offset_draws()
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert a.shape == (64, 3)
    assert np.allclose(a.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(a.var(axis=0), 1, atol=0.1)


def test_noise_model_validation():
    with pytest.raises(ValidationError):
        NoiseModel(dephasing_kind="pink")
    with pytest.raises(ValidationError):
        NoiseModel(dephasing_kind="quasi_static_gaussian", samples=16)
    with pytest.raises(ValidationError):
        ModeNoise(t1=-1)
    with pytest.raises(ValidationError):
        ModeNoise(t1_table=((6.0, 5.0), (1.0, 2.0)))
    with pytest.raises(RangeError):
        ModeNoise(t1_table=((5.0, 6.0), (1.0, 2.0))).t1_at(6.5)


# -- channels ---------------------------------------------------------------------


def test_idle_channel_is_residual_zz_only(nominal):
    frame = dressed_frame(nominal)
    ch = channel_from_pulse(nominal, idle_pulse(nominal, 8.0))
    phases = np.exp(-1j * TWO_PI * (frame.energies - frame.frame_energies) * 8.0)
    expected = QuantumChannel.from_unitary(np.diag(phases), frame.labels)
    assert np.abs(ch.superoperator - expected.superoperator).max() < 1e-9


def test_idle_channel_identity_without_coupling():
    from adiabatic_cz.device import DeviceParams

    p = DeviceParams().with_levels(3).with_couplings(g12=0, g1c=0, g2c=0)
    ch = channel_from_pulse(p, idle_pulse(p, 8.0))
    assert np.abs(ch.superoperator - np.eye(ch.dim**2)).max() < 1e-9


def test_channel_composition_matches_sequence(small):
    noise = NoiseModel(q1=ModeNoise(t1=2.0, tphi=1.0), coupler=ModeNoise(t1=1.0, tphi=0.5), q2=ModeNoise(t1=3.0))
    a = cz_pulse(small, peak=5.3, duration=10.0)
    b = idle_pulse(small, 4.0)
    ca = channel_from_pulse(small, a, noise, frame="lab")
    cb = channel_from_pulse(small, b, noise, frame="lab")
    both = channel_from_pulse(small, [a, b], noise, frame="lab")
    assert np.abs((cb @ ca).superoperator - both.superoperator).max() < 1e-6


def test_noisy_channel_is_cptp(small):
    noise = NoiseModel(q1=ModeNoise(t1=2.0, tphi=1.0), coupler=ModeNoise(t1=1.0, tphi=0.5), dephasing_kind="quasi_static_gaussian")
    ch = channel_from_pulse(small, cz_pulse(small, peak=5.3, duration=10.0), noise)
    assert ch.trace_error() < 1e-8
    assert ch.min_choi_eigenvalue() > -1e-8


def test_channel_reproduces_direct_propagation(small):
    noise = NoiseModel(q1=ModeNoise(t1=2.0, tphi=1.0), q2=ModeNoise(t1=3.0, tphi=2.0))
    pulse = cz_pulse(small, peak=5.3, duration=10.0)
    ch = channel_from_pulse(small, pulse, noise, frame="lab")
    frame = dressed_frame(small)
    sub = Subspace(small, 2)
    psi = np.zeros(sub.dim, complex)
    psi[frame.index((1, 0, 0))] = psi[frame.index((0, 0, 1))] = 1 / np.sqrt(2)
    rho_d = np.outer(psi, psi.conj())
    rho_sub = frame.vectors @ rho_d @ frame.vectors.conj().T
    rho0 = np.zeros((small.dimension,) * 2, complex)
    rho0[np.ix_(sub.indices, sub.indices)] = rho_sub
    direct = propagate_lindblad(small, pulse, noise, rho0)[np.ix_(sub.indices, sub.indices)]
    direct_d = frame.vectors.conj().T @ direct @ frame.vectors
    diff = ch.apply(rho_d) - direct_d
    assert 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum() < 1e-6


def _channel_conditional_phase(ch):
    """phi11 - phi10 - phi01 + phi00 read from coherences with |00>."""
    d = ch.dim
    i00, i01, i10, i11 = ch.computational
    S = ch.superoperator

    def phase(k):
        return np.angle(S[k * d + i00, k * d + i00])

    return phase(i11) - phase(i10) - phase(i01)


def test_virtual_z_keeps_conditional_phase(nominal, rng):
    frame = dressed_frame(nominal)
    U = to_dressed(propagate_unitary(nominal, cz_pulse(nominal), max_excitation=2), frame, 30.0)
    ch = QuantumChannel.from_unitary(U, frame.labels)
    base = _channel_conditional_phase(ch)
    for _ in range(5):
        z = virtual_z(frame.labels, *rng.uniform(-np.pi, np.pi, 2))
        shifted = _channel_conditional_phase(z @ ch)
        assert abs(np.angle(np.exp(1j * (shifted - base)))) < 1e-10


def test_quasi_static_channel_reproducible(small):
    noise = NoiseModel(q1=ModeNoise(tphi=1.0), dephasing_kind="quasi_static_gaussian", seed=7)
    pulse = cz_pulse(small, peak=5.5, duration=10.0)
    a = channel_from_pulse(small, pulse, noise)
    b = channel_from_pulse(small, pulse, noise)
    assert np.array_equal(a.superoperator, b.superoperator)
