"""Simulated calibration of the adiabatic CZ gate.

Phases follow the propagator convention: with ``U = exp(-i 2 pi H t)`` the
conditional phase ``arg U11 - arg U10 - arg U01 + arg U00`` of a constant
interaction equals ``-2 pi chi12 t``.  Only its value modulo 2 pi matters for
the CZ target, so the calibration is insensitive to the sign convention.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .device import DeviceParams, Label
from .dynamics import (
    SPACING_NS,
    NoiseModel,
    PulseShape,
    QuantumChannel,
    channel_from_pulse,
    dressed_frame,
    idle_pulse,
    propagate_unitary,
    to_dressed,
    virtual_z,
)
from .errors import CalibrationRangeError, FitQualityError, PhaseUndefinedError, ValidationError

CZ = np.diag([1, 1, 1, -1]).astype(complex)
DEFAULT_TOLERANCE = 1e-4
_BISECTION_STOP = 1e-3
_SCAN_STEP = 0.05  # GHz, initial peak-frequency step of the bracket scan


def z_phase(theta1: float, theta2: float) -> np.ndarray:
    """``Z1(theta1) Z2(theta2)`` on (|00>, |01>, |10>, |11>), ``Z(t) = diag(1, e^{it})``."""
    return np.diag(np.exp(1j * np.array([0.0, theta2, theta1, theta1 + theta2])))


def conditional_phase(M: np.ndarray) -> float:
    """Conditional phase of a 4x4 block, wrapped to [0, 2 pi)."""
    d = np.angle(np.diag(M))
    return float(np.mod(d[3] - d[2] - d[1] + d[0], 2 * np.pi))


def _wrap(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


@dataclasses.dataclass(frozen=True)
class GateMetrics:
    conditional_phase: float
    single_qubit_phases: Tuple[float, float]
    leakage: float
    avg_fidelity_coherent: float

    @property
    def coherent_infidelity(self) -> float:
        return 1.0 - self.avg_fidelity_coherent


@dataclasses.dataclass(frozen=True)
class RamseyResult:
    control_state: str
    phases: Tuple[float, ...]
    populations: Tuple[float, ...]
    fitted_phase: float
    fit_residual: float
    amplitude: float


def single_qubit_phases(U: np.ndarray, max_leakage: float = 0.05):
    """Parasitic single-qubit phases of a computational 4x4 block.

    Returns ``(phi1, phi2, V)`` where ``V = Z1(-phi1) Z2(-phi2) U`` with the
    global phase of ``U00`` removed, so ``diag(V)`` carries phases
    ``(0, 0, 0, conditional phase)`` up to the leakage-induced magnitude loss.
    """
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4):
        raise ValidationError("expected the 4x4 computational block")
    if computational_leakage(U) > max_leakage:
        raise ValidationError(f"leakage {computational_leakage(U):.3g} exceeds {max_leakage}")
    diag = np.diag(U)
    if np.abs(diag).min() < 0.1:
        raise PhaseUndefinedError(f"diagonal amplitude {np.abs(diag).min():.3g} too small to define a phase")
    phi1 = float(np.angle(diag[2] / diag[0]))
    phi2 = float(np.angle(diag[1] / diag[0]))
    V = z_phase(-phi1, -phi2) @ U * np.exp(-1j * np.angle(diag[0]))
    return phi1, phi2, V


def computational_leakage(M: np.ndarray) -> float:
    """1 - mean population kept inside the block, over the four basis inputs."""
    return float(1.0 - np.mean(np.sum(np.abs(M) ** 2, axis=0)))


def average_gate_fidelity(V: np.ndarray, target: np.ndarray = CZ) -> float:
    M = target.conj().T @ V
    d = M.shape[0]
    return float((np.real(np.trace(M.conj().T @ M)) + abs(np.trace(M)) ** 2) / (d * (d + 1)))


def gate_metrics(U: np.ndarray, target: np.ndarray = CZ, computational: Optional[Sequence[int]] = None) -> GateMetrics:
    """Metrics of a (possibly leaky) propagator against ``target``.

    ``computational`` gives the indices of |00>, |01>, |10>, |11> in ``U``;
    it may be omitted for a 4x4 input.
    """
    U = np.asarray(U, dtype=complex)
    if computational is None:
        if U.shape != (4, 4):
            raise ValidationError("computational indices are required for a non-4x4 propagator")
        computational = range(4)
    idx = np.asarray(list(computational))
    M = U[np.ix_(idx, idx)]
    leak = min(1.0, max(0.0, computational_leakage(M)))
    phi1, phi2, V = single_qubit_phases(M, max_leakage=1.0)
    return GateMetrics(conditional_phase(M), (phi1, phi2), leak, average_gate_fidelity(V, target))


# -- propagator helpers --------------------------------------------------------


def cz_unitary(params: DeviceParams, pulse, dt: Optional[float] = None, verify: bool = False) -> np.ndarray:
    """Pulse propagator on the dressed two-excitation subspace, rotating frame."""
    frame = dressed_frame(params, 2)
    U = propagate_unitary(params, pulse, dt=dt, max_excitation=2, verify=verify)
    total = sum(p.duration for p in ([pulse] if isinstance(pulse, PulseShape) else pulse))
    return to_dressed(U, frame, total)


def pulse_metrics(params: DeviceParams, pulse, dt: Optional[float] = None, verify: bool = False) -> GateMetrics:
    frame = dressed_frame(params, 2)
    return gate_metrics(cz_unitary(params, pulse, dt, verify), computational=frame.computational)


# -- conditional Ramsey --------------------------------------------------------


def _rotation(phi: float, angle: float = np.pi / 2) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]])


def _on_q2(op2: np.ndarray, labels: Sequence[Label]) -> np.ndarray:
    """Lift a Q2 qubit operator to the labelled basis (identity elsewhere)."""
    labels = list(labels)
    out = np.eye(len(labels), dtype=complex)
    for q1 in (0, 1):
        i0, i1 = labels.index((q1, 0, 0)), labels.index((q1, 0, 1))
        out[np.ix_([i0, i1], [i0, i1])] = op2
    return out


def fit_sinusoid(phases, populations):
    """Least-squares fit of ``a + b cos(phi) + c sin(phi)``; returns
    ``(offset, amplitude, phase, rms_residual)`` with ``P = a + A cos(phi - phase)``."""
    phases = np.asarray(phases, dtype=float)
    y = np.asarray(populations, dtype=float)
    X = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return float(coef[0]), float(np.hypot(coef[1], coef[2])), float(np.arctan2(coef[2], coef[1])), resid


def conditional_ramsey(
    params: DeviceParams,
    pulse,
    control_state: str = "ground",
    phase_grid: Optional[Sequence[float]] = None,
    noise: Optional[NoiseModel] = None,
    max_residual: float = 0.05,
) -> RamseyResult:
    """Ramsey on Q2 around the flux pulse with Q1 prepared in ``control_state``.

    The pi/2 rotations are ideal and instantaneous.  The fitted phase is the
    phase Q2's |1> acquires relative to |0> during the pulse, so the
    difference between the two control states is the conditional phase.
    """
    if control_state not in ("ground", "excited"):
        raise ValidationError("control_state must be 'ground' or 'excited'")
    if phase_grid is None:
        phase_grid = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    grid = np.asarray(phase_grid, dtype=float)
    if len(grid) < 8 or grid.max() - grid.min() < 2 * np.pi * (1 - 1 / len(grid)) - 1e-12:
        raise ValidationError("phase grid must span a full period with at least 8 points")
    frame = dressed_frame(params, 2)
    labels = frame.labels
    c = 1 if control_state == "excited" else 0
    psi = np.zeros(len(labels), dtype=complex)
    psi[labels.index((c, 0, 0))] = 1
    psi = _on_q2(_rotation(0.0), labels) @ psi
    rho = np.outer(psi, psi.conj())
    if noise is None:
        U = cz_unitary(params, pulse)
        rho = U @ rho @ U.conj().T
    else:
        rho = channel_from_pulse(params, pulse, noise).apply(rho)
    excited = np.array([lab[2] == 1 for lab in labels])
    pops = []
    for phi in grid:
        R = _on_q2(_rotation(phi), labels)
        out = R @ rho @ R.conj().T
        pops.append(float(np.real(np.diag(out)[excited].sum())))
    _, amp, phase, resid = fit_sinusoid(grid, pops)
    if resid > max_residual:
        raise FitQualityError(f"Ramsey fit residual {resid:.3g} exceeds {max_residual}", {"residual": resid})
    return RamseyResult(control_state, tuple(grid), tuple(pops), phase, resid, amp)


def ramsey_conditional_phase(params: DeviceParams, pulse, **kwargs) -> float:
    """Excited-minus-ground Ramsey phase, wrapped to (-pi, pi]."""
    g = conditional_ramsey(params, pulse, "ground", **kwargs)
    e = conditional_ramsey(params, pulse, "excited", **kwargs)
    return float(_wrap(e.fitted_phase - g.fitted_phase))


def square_pulse(params: DeviceParams, coupler_frequency: float, duration: float, ramp: float = 0.0) -> PulseShape:
    """Flat-top pulse for chi12 extraction; ``ramp`` (ns) softens the edges."""
    return PulseShape(
        params.idle_frequency,
        coupler_frequency,
        duration,
        sample_step=min(0.002, duration / 100),
        shape="square",
        flux_map=params.flux_map,
        ramp=ramp,
    )


def ramsey_chi12(
    params: DeviceParams,
    coupler_frequency: float,
    durations: Tuple[float, float] = (40.0, 60.0),
    ramp: float = 8.0,
) -> float:
    """chi12 (GHz) from the growth of the Ramsey conditional phase with the
    flat-top length.

    The ramps contribute the same phase to both durations, so the difference
    isolates ``-2 pi chi12 (t2 - t1)``.  The phase difference must stay below
    pi in magnitude, which bounds the measurable ``|chi12|`` by
    ``1 / (2 (t2 - t1))``.
    """
    t1, t2 = durations
    if not t2 > t1 > 2 * ramp:
        raise ValidationError("durations must increase and exceed twice the ramp")
    ph = [ramsey_conditional_phase(params, square_pulse(params, coupler_frequency, t, ramp)) for t in durations]
    return -float(_wrap(ph[1] - ph[0])) / (2 * np.pi * (t2 - t1))


# -- CZ calibration ------------------------------------------------------------


class CalibrationResult:
    """Calibrated pulse and its metrics; unpacks as ``pulse, metrics``."""

    def __init__(self, pulse: PulseShape, metrics: GateMetrics, diagnostics: Dict):
        self.pulse = pulse
        self.metrics = metrics
        self.diagnostics = diagnostics

    def __iter__(self):
        return iter((self.pulse, self.metrics))

    @property
    def amplitude(self) -> float:
        return self.pulse.flux_amplitude

    def report(self) -> Dict[str, float]:
        return calibration_report(self.pulse, self.metrics)


def calibration_report(pulse: PulseShape, metrics: GateMetrics) -> Dict[str, float]:
    return {
        "amplitude_flux_Phi0": pulse.flux_amplitude,
        "peak_frequency_GHz": pulse.peak_frequency,
        "conditional_phase_rad": metrics.conditional_phase,
        "phi1_rad": metrics.single_qubit_phases[0],
        "phi2_rad": metrics.single_qubit_phases[1],
        "leakage": metrics.leakage,
        "coherent_infidelity": metrics.coherent_infidelity,
    }


def calibrate_cz(
    params: DeviceParams,
    duration: float = 30.0,
    tolerance: float = DEFAULT_TOLERANCE,
    space: str = "frequency",
    initial_amplitude: Optional[float] = None,
    min_frequency: Optional[float] = None,
    dt: Optional[float] = None,
    verify: bool = True,
) -> CalibrationResult:
    """Find the flux amplitude giving conditional phase pi.

    The amplitude is scanned from the idle point towards lower coupler
    frequency (down to ``min_frequency``, default 50 MHz above the lower
    qubit) until the unwrapped conditional phase first crosses pi.  The
    bracket is narrowed by bisection to 1e-3 rad and finished by secant
    steps.

    Raises:
        CalibrationRangeError: duration outside [10, 200] ns or no bracket.
    """
    if not 10 <= duration <= 200:
        raise CalibrationRangeError(f"duration {duration} ns outside [10, 200] ns", {"duration_ns": duration})
    floor = min_frequency or min(params.q1.frequency, params.q2.frequency) + 0.05
    dt = dt or min(0.002, duration / 100)
    history: List[Tuple[float, float]] = []

    def make(a):
        return PulseShape.for_device(params, duration, a, space=space, sample_step=dt)

    def phase(a):
        p = pulse_metrics(params, make(a), dt).conditional_phase
        history.append((a, p))
        return p

    def residual(a):
        return float(_wrap(phase(a) - np.pi))

    diagnostics: Dict = {"scan": [], "non_monotone": False, "scan_non_monotone": False}
    lo = hi = None
    if initial_amplitude is not None:
        f0 = residual(initial_amplitude)
        if abs(f0) < tolerance:
            return _finish(params, make(initial_amplitude), dt, verify, diagnostics, history)
        step = 1e-3 * max(abs(initial_amplitude), 1e-3)
        for k in range(12):
            a1, a2 = initial_amplitude - step * 2**k, initial_amplitude + step * 2**k
            f1, f2 = residual(a1), residual(a2)
            if np.sign(f1) != np.sign(f2) and abs(f1 - f2) < np.pi:
                lo, hi, flo = a1, a2, f1
                break
    if lo is None:
        lo, hi, flo = _scan_bracket(params, duration, space, floor, min(0.01, duration / 100), diagnostics)
    fhi = residual(hi)
    # bisection
    while True:
        mid = 0.5 * (lo + hi)
        fm = residual(mid)
        if abs(fm) < _BISECTION_STOP or hi - lo < 1e-12:
            break
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    if not (min(flo, fhi) <= fm <= max(flo, fhi)):
        diagnostics["non_monotone"] = True
    # secant refinement, kept inside the bracket
    a_prev, f_prev = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    a, f = mid, fm
    for _ in range(30):
        if abs(f) < tolerance:
            break
        a_new = a - f * (a - a_prev) / (f - f_prev) if f != f_prev else 0.5 * (lo + hi)
        if not lo < a_new < hi:
            a_new = 0.5 * (lo + hi)
        f_new = residual(a_new)
        if np.sign(f_new) == np.sign(flo):
            lo, flo = a_new, f_new
        else:
            hi, fhi = a_new, f_new
        a_prev, f_prev, a, f = a, f, a_new, f_new
    if abs(f) >= tolerance:
        raise CalibrationRangeError("secant refinement did not converge", dict(diagnostics, residual=f))
    return _finish(params, make(a), dt, verify, diagnostics, history)


def _scan_bracket(params, duration, space, floor, scan_dt, diagnostics):
    """Walk the peak frequency down from idle with an adaptive step until the
    unwrapped conditional phase passes pi.  Returns ``(lo, hi, f_lo)`` in
    flux amplitude."""
    fmap = params.flux_map
    phi_idle = float(fmap.flux(params.idle_frequency))
    scan = diagnostics["scan"]
    step = _SCAN_STEP
    w_prev, ph_prev = params.idle_frequency, 0.0
    while w_prev > floor:
        w = max(floor, w_prev - step)
        a = float(fmap.flux(w)) - phi_idle
        pulse = PulseShape.for_device(params, duration, a, space=space, sample_step=scan_dt)
        try:
            raw = pulse_metrics(params, pulse, scan_dt).conditional_phase
        except PhaseUndefinedError:
            break
        ph = ph_prev + float(_wrap(raw - ph_prev))
        jump = abs(ph - ph_prev)
        if jump > 0.5 and step > _SCAN_STEP / 16:
            step /= 2
            continue
        scan.append((a, w, ph))
        if abs(ph) < abs(ph_prev):
            diagnostics["scan_non_monotone"] = True
        if abs(ph) >= np.pi:
            lo = float(fmap.flux(w_prev)) - phi_idle
            return lo, a, float(_wrap(ph_prev - np.pi))
        if jump < 0.1:
            step *= 1.5
        w_prev, ph_prev = w, ph
    raise CalibrationRangeError(
        f"conditional phase never reaches pi for duration {duration} ns "
        f"(max |phase| {max([abs(x[2]) for x in scan] or [0.0]):.3f} rad down to {w_prev:.3f} GHz)",
        diagnostics,
    )


def _finish(params, pulse, dt, verify, diagnostics, history):
    metrics = pulse_metrics(params, pulse, dt, verify=verify)
    diagnostics = dict(diagnostics, evaluations=len(history))
    return CalibrationResult(pulse, metrics, diagnostics)


def compensated_cz_channel(
    params: DeviceParams,
    pulse: PulseShape,
    noise: Optional[NoiseModel] = None,
    phases: Optional[Tuple[float, float]] = None,
    spacing: float = SPACING_NS,
) -> QuantumChannel:
    """CZ as used in sequences: pulse, idle spacing, then virtual-Z correction.

    ``phases`` default to the single-qubit phases of the noiseless pulse.
    """
    if phases is None:
        phases = pulse_metrics(params, pulse).single_qubit_phases
    segments = [pulse, idle_pulse(params, spacing)] if spacing > 0 else [pulse]
    ch = channel_from_pulse(params, segments, noise)
    return virtual_z(ch.labels, *phases) @ ch
