"""Shared fixtures.  Expensive objects (calibration, noisy channels) are
built once per session and reused by the module and acceptance tests."""
import numpy as np
import pytest

from adiabatic_cz.calibration import calibrate_cz, compensated_cz_channel
from adiabatic_cz.device import DeviceParams
from adiabatic_cz.error_budget import reconstructed_profile, transitional_channels


@pytest.fixture(scope="session")
def nominal():
    return DeviceParams()


@pytest.fixture(scope="session")
def small():
    """Three levels per mode: enough for every two-excitation state, cheap to propagate."""
    return DeviceParams().with_levels(3)


@pytest.fixture(scope="session")
def calibrated(nominal):
    return calibrate_cz(nominal, 30.0)


@pytest.fixture(scope="session")
def profile(nominal, calibrated):
    return reconstructed_profile(nominal, calibrated.pulse)


@pytest.fixture(scope="session")
def noisy_cz_channel(nominal, calibrated, profile):
    """Compensated CZ (pulse + 4 ns spacing) under the reconstructed quasi-static profile."""
    noise = profile.noise_model("quasi_static_gaussian", seed=0)
    return compensated_cz_channel(nominal, calibrated.pulse, noise, calibrated.metrics.single_qubit_phases)


@pytest.fixture(scope="session")
def transitional_pair(nominal, calibrated, profile, noisy_cz_channel):
    """(gate, identity) channels; the gate is the same compensated channel used for RB."""
    from adiabatic_cz.dynamics import channel_from_pulse, idle_pulse

    noise = profile.noise_model("quasi_static_gaussian", seed=0)
    ident = channel_from_pulse(nominal, idle_pulse(nominal, calibrated.pulse.duration + 4.0), noise)
    return noisy_cz_channel, ident, noise


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a verdict, then asserts it."""

    def record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
