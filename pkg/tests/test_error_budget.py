import dataclasses
import json

import numpy as np
import pytest

from adiabatic_cz.dynamics import idle_pulse
from adiabatic_cz.error_budget import (
    JOINT_STATES,
    DecoherenceProfile,
    ModeProfile,
    analytic_budget,
    budget_report,
    coupler_participation,
    dephasing_error,
    effective_rates,
    fit_decay,
    relaxation_error,
    transitional_channels,
    transitional_error_experiment,
)
from adiabatic_cz.errors import RangeError, ValidationError

# frozen from the reconstructed profile of the 30 ns calibration
T1_EFF = (4.823, 16.858)
TPHI_Q1_EFF = 0.50006


def test_dephasing_anchor():
    assert dephasing_error(30.0, 0.5) == pytest.approx(0.0012, abs=1e-12)


def test_dephasing_is_quadratic_and_vanishes_without_noise():
    assert dephasing_error(60.0, 0.5) == pytest.approx(4 * dephasing_error(30.0, 0.5))
    assert dephasing_error(30.0, float("inf")) == 0.0


def test_relaxation_formula():
    # hand arithmetic: (30/4823 + 30/16858 + 4/20000 * 2) / 3
    expected = (30 / 4823 + 30 / 16858 + 8 / 20000) / 3
    assert relaxation_error(30.0, 4.0, T1_EFF, (20.0, 20.0)) == pytest.approx(expected, rel=1e-12)
    assert relaxation_error(30.0, 4.0, (1e12, 1e12), (1e12, 1e12)) == pytest.approx(0.0, abs=1e-12)


def test_relaxation_is_linear_in_rate():
    a = relaxation_error(30.0, 0.0, (10.0, 10.0), (20.0, 20.0))
    b = relaxation_error(30.0, 0.0, (5.0, 5.0), (20.0, 20.0))
    assert b == pytest.approx(2 * a)


def test_formulas_reject_bad_inputs():
    with pytest.raises(ValidationError):
        dephasing_error(-1.0, 0.5)
    with pytest.raises(ValidationError):
        relaxation_error(30.0, 4.0, (0.0, 1.0), (20.0, 20.0))


def test_budget_fractions():
    rep = budget_report(0.0012, 0.00001, 0.0028, total=0.0052)
    assert sum(rep.fractions.values()) == pytest.approx(1.0)
    assert rep.nonadiabatic_error == pytest.approx(0.0052 - 0.00401)
    scaled = budget_report(0.0024, 0.00002, 0.0056, total=0.0104)
    for k in rep.fractions:
        assert scaled.fractions[k] == pytest.approx(rep.fractions[k])


def test_budget_rejects_negative_remainder():
    with pytest.raises(ValidationError):
        budget_report(0.003, 0.0, 0.003, total=0.005)


def test_budget_zero_total():
    rep = budget_report(0.0, 0.0, 0.0, nonadiabatic=0.0)
    assert rep.fractions["nonadiabatic"] == 1.0


def test_effective_rates_flat_profile(calibrated):
    flat = DecoherenceProfile(ModeProfile(12.0, 3.0), ModeProfile(15.0, 7.0))
    eff = effective_rates(flat, calibrated.pulse)
    assert eff.t1 == pytest.approx((12.0, 15.0))
    assert eff.tphi == pytest.approx((3.0, 7.0))


def test_effective_rates_monotone(calibrated):
    freqs = tuple(np.linspace(5.0, 6.74, 30))
    worse = lambda s: ModeProfile(20.0, 20.0, freqs, tuple(np.full(30, 20.0 * s)), tuple(np.full(30, 20.0 * s)))  # noqa: E731
    a = effective_rates(DecoherenceProfile(worse(1.0), worse(1.0)), calibrated.pulse)
    b = effective_rates(DecoherenceProfile(worse(0.5), worse(0.5)), calibrated.pulse)
    assert all(x < y for x, y in zip(b.t1, a.t1))
    assert all(x < y for x, y in zip(b.tphi, a.tphi))


def test_profile_lookup_out_of_range():
    mp = ModeProfile(20.0, 20.0, (5.0, 6.0), (10.0, 10.0), (5.0, 5.0))
    with pytest.raises(RangeError):
        mp.t1_at(6.5)


def test_profile_validation():
    with pytest.raises(ValidationError):
        ModeProfile(20.0, 20.0, (6.0, 5.0), (1.0, 1.0), (1.0, 1.0))
    with pytest.raises(ValidationError):
        DecoherenceProfile(ModeProfile(1.0, 1.0), ModeProfile(1.0, 1.0), coupler=ModeProfile(1.0, 1.0))


def test_reconstructed_profile_hits_anchors(profile, calibrated):
    eff = effective_rates(profile, calibrated.pulse)
    assert eff.tphi[0] == pytest.approx(0.5, rel=1e-3)
    assert eff.t1 == pytest.approx(T1_EFF, rel=1e-3)
    rep = analytic_budget(profile, calibrated.pulse, total=0.0052)
    assert rep.dephasing_error_q1 == pytest.approx(0.0012, rel=1e-3)
    assert rep.relaxation_error == pytest.approx(0.0028, rel=1e-3)


def test_profile_round_trip(profile):
    back = DecoherenceProfile.from_dict(json.loads(json.dumps(profile.to_dict())))
    assert back == profile


def test_coupler_participation_peaks_near_crossing(nominal):
    h = coupler_participation(nominal, [nominal.idle_frequency, 5.1])
    assert h[0, 0] < 0.01
    assert h[1, 0] > 0.5


def test_fit_decay():
    m = np.arange(61)
    A, g, B = fit_decay(m, 0.98 * np.exp(-2e-3 * m))
    assert g == pytest.approx(2e-3, rel=1e-6)
    assert fit_decay(m, np.ones(61)) == (1.0, 0.0, 0.0)


def test_transitional_validation(small, calibrated):
    with pytest.raises(ValidationError):
        transitional_error_experiment(small, None, "22", 40, calibrated.pulse)
    with pytest.raises(ValidationError):
        transitional_error_experiment(small, None, "00", 10, calibrated.pulse)


def test_transitional_identity_pulse_adds_nothing(small, profile):
    noise = profile.noise_model("markovian")
    ident = idle_pulse(small, 30.0)
    chs = transitional_channels(small, noise, ident)
    for s in ("01", "11"):
        r = transitional_error_experiment(small, noise, s, 40, ident, channels=chs)
        assert abs(r.additional_error) < 1e-9


def test_transitional_slow_pulse_noiseless(small, calibrated):
    slow = dataclasses.replace(calibrated.pulse, duration=4 * calibrated.pulse.duration)
    chs = transitional_channels(small, None, slow)
    res = {s: transitional_error_experiment(small, None, s, 40, slow, channels=chs) for s in JOINT_STATES}
    assert all(abs(r.additional_error) < 1e-4 for r in res.values())
    assert abs(res["00"].additional_error) <= min(abs(r.additional_error) for r in res.values())
