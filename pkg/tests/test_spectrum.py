import numpy as np
import pytest

from adiabatic_cz.device import DeviceParams, build_hamiltonian
from adiabatic_cz.dynamics import PulseShape
from adiabatic_cz.errors import DegenerateLabelError, ValidationError
from adiabatic_cz.io import read_csv
from adiabatic_cz.spectrum import (
    L101,
    _greedy_assign,
    chi12_from_hamiltonian,
    chi12_spectral,
    crosstalk_sensitivity,
    eigensolve,
    frequency_to_flux,
    flux_to_frequency,
    gap_profile,
    labeled_spectrum,
    min_gap,
    min_gap_detail,
    sweep_chi,
    track_spectra,
)

# Frozen from the tracked dressed spectrum at 5 levels per mode (GHz).
CHI_IDLE = -7.463108150851383e-05
CHI_FROZEN = {6.0: -1.611618074459642e-04, 5.5: -3.122360541706115e-03, 5.2: -3.537128744002871e-02}
PEAK_30NS = 5.098260888046311


def test_eigensolve_diagonal():
    e, v = eigensolve(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(e, [1, 2, 3])
    assert np.allclose(np.abs(v), np.eye(3)[:, [1, 2, 0]])


def test_eigensolve_two_level_avoided_crossing():
    g, d = 0.1, 0.3
    e, _ = eigensolve(np.array([[0, g], [g, d]]))
    root = np.sqrt(d * d + 4 * g * g)
    assert np.allclose(e, [(d - root) / 2, (d + root) / 2])


def test_eigensolve_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        eigensolve(np.array([[0, 1], [0, 0]]))


def test_uncoupled_labels_are_bare():
    p = DeviceParams().with_couplings(g12=0, g1c=0, g2c=0)
    spec = labeled_spectrum(p, 6.3)
    assert np.allclose(spec.overlaps, 1)
    for lab in spec.labels:
        assert abs(spec.state(lab)[np.ravel_multi_index(lab, p.dims)]) == pytest.approx(1)
    assert abs(chi12_spectral(p, 6.3)) < 1e-14


def test_idle_labels_mostly_bare(nominal):
    spec = labeled_spectrum(nominal, nominal.idle_frequency)
    bare = spec.state(L101)[np.ravel_multi_index(L101, nominal.dims)]
    assert abs(bare) ** 2 > 0.95


def test_energies_ascending_within_manifold(nominal):
    spec = labeled_spectrum(nominal, 5.4)
    for n in (0, 1, 2):
        _, e = spec.levels_in(n)
        assert np.all(np.diff(e) >= 0)
    assert len(set(spec.labels)) == len(spec.labels)


def test_chi_frozen_values(nominal):
    assert chi12_spectral(nominal, 6.74) == pytest.approx(CHI_IDLE, rel=1e-6)
    for w, chi in CHI_FROZEN.items():
        assert chi12_spectral(nominal, w) == pytest.approx(chi, rel=1e-6)


def test_chi_matches_direct_diagonalisation_at_idle(nominal):
    """At idle the coupler is far detuned, so bare-basis labelling of a plain
    dense diagonalisation is unambiguous and must agree with tracking."""
    H = build_hamiltonian(nominal, nominal.idle_frequency)
    assert chi12_from_hamiltonian(nominal, H) == pytest.approx(CHI_IDLE, rel=1e-9)


def test_chi_invariant_under_global_shift(nominal):
    H = build_hamiltonian(nominal, 6.2)
    shifted = H + 3.7 * np.eye(len(H))
    assert abs(chi12_from_hamiltonian(nominal, shifted) - chi12_from_hamiltonian(nominal, H)) < 1e-10


def test_chi_vanishes_far_detuned_without_direct_coupling():
    p = DeviceParams().with_couplings(g12=0.0)
    assert abs(chi12_spectral(p, 20.0)) < abs(chi12_spectral(p, p.idle_frequency))


def test_chi_perturbative_limit_far_detuned():
    """With g12 = 0 and a far-detuned coupler, chi12 falls off as the fourth
    power of the coupling: doubling g1c and g2c multiplies it by about 16."""
    base = DeviceParams().with_couplings(g12=0.0, g1c=0.01, g2c=0.01)
    dbl = base.with_couplings(g1c=0.02, g2c=0.02)
    ratio = chi12_spectral(dbl, 6.74) / chi12_spectral(base, 6.74)
    assert ratio == pytest.approx(16, rel=0.02)


def test_label_continuity_through_crossing(nominal):
    freqs = np.linspace(5.0, 5.6, 301)
    spectra = track_spectra(nominal, freqs, 2, max_step=0.002)
    e = np.array([s.energy(L101) for s in spectra])
    step = freqs[1] - freqs[0]
    # the branch slope dE/dw_c is its coupler occupation, at most 2 in this
    # manifold, and it changes smoothly: no jumps onto a neighbouring level
    slope = np.diff(e) / step
    assert np.abs(slope).max() < 2
    assert np.abs(np.diff(slope)).max() < 0.05


def test_tracking_is_order_independent(nominal):
    a = track_spectra(nominal, [5.2, 6.0, 5.5])
    b = track_spectra(nominal, [5.5, 5.2, 6.0])
    assert a[0].chi12 == b[1].chi12 and a[1].chi12 == b[2].chi12


def test_tie_raises_degenerate_error():
    with pytest.raises(DegenerateLabelError) as info:
        _greedy_assign(np.array([[0.5, 0.5], [0.5, 0.5]]), 1e-6, [(0, 0, 1), (1, 0, 0)])
    assert len(info.value.candidates) == 2


def test_min_gap_calibrated_trajectory(nominal):
    pulse = PulseShape.for_device(nominal, 30.0).with_peak(PEAK_30NS)
    gap, where, partner = min_gap_detail(nominal, pulse)
    assert gap == pytest.approx(0.23814931, abs=1e-6)
    assert partner == (2, 0, 0)
    assert PEAK_30NS < where < nominal.idle_frequency


def test_min_gap_uncoupled_is_bare_detuning():
    p = DeviceParams().with_couplings(g12=0, g1c=0, g2c=0)
    # on [5.8, 6.74] the closest bare level to |101> is |200>
    expected = abs((p.q1.frequency + p.q2.frequency) - (2 * p.q1.frequency + p.q1.anharmonicity))
    assert min_gap(p, np.array([5.8, 6.74])) == pytest.approx(expected, abs=1e-9)


def test_min_gap_grows_with_coupling(nominal):
    pulse = PulseShape.for_device(nominal, 30.0).with_peak(PEAK_30NS)
    stronger = nominal.with_couplings(g1c=2 * nominal.couplings.g1c, g2c=2 * nominal.couplings.g2c)
    assert min_gap(stronger, pulse) > min_gap(nominal, pulse)


def test_gap_profile_brute_force_agrees(nominal):
    freqs = np.linspace(5.26, 5.30, 401)
    _, gaps, _ = gap_profile(nominal, freqs, 0.002)
    pulse = PulseShape.for_device(nominal, 30.0).with_peak(PEAK_30NS)
    assert min_gap(nominal, pulse) <= gaps.min() + 1e-9
    assert gaps.min() - min_gap(nominal, pulse) < 1e-5


def test_sweep_dynamic_range_and_sign(nominal):
    sweep = sweep_chi(nominal, np.linspace(4.9, 6.74, 93))
    assert sweep.dynamic_range > 1000
    assert np.abs(sweep.chi12).max() >= 0.1
    assert np.all(sweep.chi12 < 0)  # plotted as -chi12
    assert not any(sweep.flags)


def test_sweep_parallel_is_deterministic(nominal):
    freqs = np.linspace(5.3, 6.7, 15)
    a = sweep_chi(nominal, freqs, workers=1)
    b = sweep_chi(nominal, freqs, workers=4)
    assert np.array_equal(a.chi12, b.chi12)


def test_sweep_csv_columns(nominal, tmp_path):
    sweep = sweep_chi(nominal, [6.0, 6.5])
    path = sweep.to_csv(tmp_path / "chi.csv")
    _, header, rows = read_csv(path)
    assert header == ["coupler_frequency_GHz", "chi12_GHz", "label_overlap", "flags"]
    assert len(rows) == 2


def test_flux_wrappers_round_trip(nominal):
    fm = nominal.flux_map
    assert flux_to_frequency(fm, frequency_to_flux(fm, 5.5)) == pytest.approx(5.5, abs=1e-9)


def test_crosstalk_zero_fraction_exact(nominal):
    assert crosstalk_sensitivity(nominal, 0.3, 0.0) == 0.0


def test_crosstalk_quadratic_near_sweet_spot(nominal):
    s1 = crosstalk_sensitivity(nominal, 0.2985, 0.05)
    s2 = crosstalk_sensitivity(nominal, 0.2985, 0.10)
    assert s2 / s1 == pytest.approx(4.0, rel=0.05)


def test_chi_flux_insensitive_at_sweet_spot(nominal):
    fm = nominal.flux_map
    phi0 = fm.flux(nominal.idle_frequency)
    chi0 = chi12_spectral(nominal, nominal.idle_frequency)
    d = [abs(chi12_spectral(nominal, float(fm.frequency(phi0 + delta))) - chi0) for delta in (0.01, 0.02)]
    assert d[1] / d[0] == pytest.approx(4.0, rel=0.05)
