"""Reference and interleaved randomized benchmarking over simulated channels."""
from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from ..errors import FitError, NegativeBoundError, ValidationError
from .clifford import CZ_ELEMENT, GATES, CliffordElement, sample_clifford

DEFAULT_LENGTHS = (1, 2, 4, 6, 8, 12, 16, 24, 32, 48, 64)
CZ_PER_CLIFFORD = 1.5
SINGLE_PER_CLIFFORD = 8.25
B0 = 0.25
COMPUTATIONAL_LABELS = ((0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1))


@dataclasses.dataclass(frozen=True)
class RBConfig:
    sequence_lengths: Tuple[int, ...] = DEFAULT_LENGTHS
    sequences_per_length: int = 30
    seed: int = 0
    interleaved: bool = False
    shots: Optional[int] = None  # finite-sampling readout of each sequence; None = exact

    def __post_init__(self):
        if self.shots is not None and self.shots < 1:
            raise ValidationError("shots must be positive")
        lengths = tuple(int(m) for m in self.sequence_lengths)
        if not lengths or lengths[0] < 1 or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValidationError("sequence lengths must be >= 1 and strictly ascending")
        if self.sequences_per_length < 1:
            raise ValidationError("need at least one sequence per length")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "sequence_lengths", lengths)


@dataclasses.dataclass(frozen=True)
class RBFit:
    A: float
    p: float
    B: float

    @property
    def r(self) -> float:
        return 0.75 * (1 - self.p)

    def model(self, m):
        return self.A * self.p ** np.asarray(m, dtype=float) + self.B


@dataclasses.dataclass(frozen=True)
class RBResult:
    lengths: np.ndarray
    raw: np.ndarray  # (n_lengths, n_sequences) ground-state population
    leakage: np.ndarray  # same shape, population outside the computational block
    fit: RBFit
    interleaved: bool

    @property
    def means(self) -> np.ndarray:
        return self.raw.mean(axis=1)

    @property
    def stds(self) -> np.ndarray:
        return self.raw.std(axis=1, ddof=1) if self.raw.shape[1] > 1 else np.zeros(len(self.lengths))

    @property
    def r(self) -> float:
        return self.fit.r

    def rows(self):
        for i, m in enumerate(self.lengths):
            for s in range(self.raw.shape[1]):
                yield int(m), s, float(self.raw[i, s]), float(self.leakage[i, s])


# -- channel providers -------------------------------------------------------------


def _pauli_superops(paulis: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [np.kron(P, P.conj()) for P in paulis]


def depolarizing_superop(paulis: Sequence[np.ndarray], lam: float) -> np.ndarray:
    """``rho -> (1 - lam) rho + lam * (twirled rho)`` with the twirl over ``paulis``
    (which must include the identity)."""
    sups = _pauli_superops(paulis)
    d2 = sups[0].shape[0]
    return (1 - lam) * np.eye(d2) + lam * sum(sups) / len(sups)


class ChannelProvider:
    """Noisy implementations of Clifford elements on some labelled basis.

    Subclasses supply ``labels`` and ``op_superop(op)`` for decomposition
    ops, or override ``clifford_superops`` directly.
    """

    labels: Tuple[Tuple[int, int, int], ...]

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def computational(self) -> np.ndarray:
        return np.array([self.labels.index(lab) for lab in COMPUTATIONAL_LABELS])

    @property
    def ground_index(self) -> int:
        return self.labels.index((0, 0, 0))

    def initial_state(self) -> np.ndarray:
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[self.ground_index, self.ground_index] = 1
        return rho.ravel()

    def clifford_superops(self, element: CliffordElement) -> List[np.ndarray]:
        return [self.op_superop(op) for op in element.decomposition]

    def interleaved_superops(self) -> List[np.ndarray]:
        return [self.op_superop(("CZ",))]

    def op_superop(self, op) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class PhysicalChannels(ChannelProvider):
    """Single-qubit gates as ideal rotations followed by depolarizing noise of
    average infidelity ``r_1q`` on their qubit; CZ as a simulated channel.

    ``cz_channel`` should already include virtual-Z compensation and the
    inter-pulse idle spacing.
    """

    def __init__(self, cz_channel, r_1q: float = 0.0):
        if not 0 <= r_1q < 0.5:
            raise ValidationError("r_1q must lie in [0, 0.5)")
        self.labels = tuple(tuple(lab) for lab in cz_channel.labels)
        self.cz = np.asarray(cz_channel.superoperator)
        self.r_1q = r_1q
        self._ops: Dict = {}

    def _lift(self, qubit: int, op2: np.ndarray) -> np.ndarray:
        out = np.eye(self.dim, dtype=complex)
        for other in (0, 1):
            pair = [(0, 0, other), (1, 0, other)] if qubit == 0 else [(other, 0, 0), (other, 0, 1)]
            idx = [self.labels.index(lab) for lab in pair]
            out[np.ix_(idx, idx)] = op2
        return out

    def op_superop(self, op) -> np.ndarray:
        hit = self._ops.get(op)
        if hit is not None:
            return hit
        if op[0] == "CZ":
            S = self.cz
        else:
            q, name = op
            U = self._lift(q, GATES[name])
            S = np.kron(U, U.conj())
            if self.r_1q > 0:
                paulis = [self._lift(q, P) for P in (np.eye(2), GATES["X"], GATES["Y"], GATES["X"] @ GATES["Y"])]
                S = depolarizing_superop(paulis, 2 * self.r_1q) @ S
        self._ops[op] = S
        return S


class DepolarizingChannels(ChannelProvider):
    """Ideal Cliffords on two qubits, each followed by two-qubit depolarizing
    noise with parameter ``p`` (``rho -> p rho + (1 - p) I/4``)."""

    labels = COMPUTATIONAL_LABELS

    def __init__(self, p: float, interleaved_p: float = 1.0):
        if not (0 < p <= 1 and 0 < interleaved_p <= 1):
            raise ValidationError("depolarizing parameters must lie in (0, 1]")
        from .clifford import pauli_matrix

        paulis = [pauli_matrix([(k >> j) & 1 for j in range(4)]) for k in range(16)]
        self._dep = lambda q: depolarizing_superop(paulis, 1 - q)
        self.p = p
        self.noise = self._dep(p)
        self.gate_noise = self._dep(interleaved_p)

    @lru_cache(maxsize=None)
    def _element(self, index: int) -> np.ndarray:
        U = CliffordElement.from_index(index).unitary()
        return self.noise @ np.kron(U, U.conj())

    def clifford_superops(self, element):
        return [self._element(element.index)]

    def interleaved_superops(self):
        U = CZ_ELEMENT.unitary()
        return [self.gate_noise @ np.kron(U, U.conj())]


# -- sequences ---------------------------------------------------------------------


def _sequence_rng(seed: int, length: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, length, index])


def random_sequence(seed: int, length: int, index: int) -> List[CliffordElement]:
    rng = _sequence_rng(seed, length, index)
    return [sample_clifford(rng) for _ in range(length)]


def _run_sequence(provider: ChannelProvider, elements, interleaved: bool):
    vec = provider.initial_state()
    total = CliffordElement.identity()
    gate = provider.interleaved_superops() if interleaved else []
    for el in elements:
        for S in provider.clifford_superops(el):
            vec = S @ vec
        total = el @ total
        if interleaved:
            for S in gate:
                vec = S @ vec
            total = CZ_ELEMENT @ total
    for S in provider.clifford_superops(total.inverse()):
        vec = S @ vec
    diag = np.real(vec.reshape(provider.dim, provider.dim).diagonal())
    comp = diag[provider.computational].sum()
    return float(diag[provider.ground_index]), float(max(0.0, 1.0 - comp))


def run_rb(provider: ChannelProvider, config: RBConfig, workers: int = 1, fit: bool = True) -> RBResult:
    """Simulate an RB experiment and fit ``F = A p^m + B``.

    Sequences are drawn from a generator keyed by (seed, length, index), so
    the reference and interleaved runs of one seed share their random
    Cliffords and the outcome does not depend on ``workers``.
    """
    jobs = [(i, s, m) for i, m in enumerate(config.sequence_lengths) for s in range(config.sequences_per_length)]
    shape = (len(config.sequence_lengths), config.sequences_per_length)
    raw, leak = np.zeros(shape), np.zeros(shape)

    def work(job):
        i, s, m = job
        g, l = _run_sequence(provider, random_sequence(config.seed, m, s), config.interleaved)
        if config.shots is not None:
            rng = np.random.default_rng([config.seed, m, s, 1 + config.interleaved])
            g = rng.binomial(config.shots, min(max(g, 0.0), 1.0)) / config.shots
        return job, (g, l)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    for (i, s, _), (g, l) in results:
        raw[i, s], leak[i, s] = g, l
    lengths = np.array(config.sequence_lengths)
    fitted = fit_rb(lengths, raw.mean(axis=1), _sem(raw)) if fit else RBFit(math.nan, math.nan, math.nan)
    return RBResult(lengths, raw, leak, fitted, config.interleaved)


def _sem(raw: np.ndarray) -> np.ndarray:
    if raw.shape[1] < 2:
        return np.zeros(raw.shape[0])
    return raw.std(axis=1, ddof=1) / math.sqrt(raw.shape[1])


# -- fitting -------------------------------------------------------------------------


def fit_rb(lengths, means, sigmas=None) -> RBFit:
    """Weighted least-squares fit of ``A p^m + B``.

    Starts from ``B = 0.25`` and a log-linear estimate of ``A`` and ``p``.
    ``p = 1`` is accepted (noiseless data); anything outside (0, 1] raises
    :class:`FitError`.
    """
    m = np.asarray(lengths, dtype=float)
    y = np.asarray(means, dtype=float)
    if len(np.unique(m)) < 3:
        raise FitError("need at least three distinct lengths", {"lengths": m.tolist()})
    w = np.ones_like(y)
    if sigmas is not None:
        s = np.asarray(sigmas, dtype=float)
        if np.all(s > 0):
            w = 1.0 / s
        elif np.any(s > 0):
            w = 1.0 / np.maximum(s, s[s > 0].min())
    shifted = y - B0
    ok = shifted > 0
    if ok.sum() >= 2:
        slope, intercept = np.polyfit(m[ok], np.log(shifted[ok]), 1)
        p0, A0 = float(np.exp(slope)), float(np.exp(intercept))
    else:
        p0, A0 = 0.9, 0.75
    p0 = min(max(p0, 1e-3), 1.0)

    def resid(x):
        A, p, B = x
        return w * (A * np.power(p, m) + B - y)

    x0 = np.array([A0, p0, B0])
    diagnostics = {"x0": x0.tolist()}
    if np.abs(resid(x0)).max() < 1e-13:
        A, p, B = x0
    else:
        sol = least_squares(resid, x0, method="lm", xtol=1e-9, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        diagnostics.update(status=int(sol.status), message=sol.message, cost=float(sol.cost))
        if not sol.success:
            raise FitError(f"RB fit did not converge: {sol.message}", diagnostics)
        A, p, B = sol.x
    if not (0 < p <= 1 + 1e-9) or not np.isfinite([A, p, B]).all():
        raise FitError(f"fitted p = {p:.6g} outside (0, 1]", dict(diagnostics, x=[A, p, B]))
    return RBFit(float(A), float(min(p, 1.0)), float(B))


def r_from_p(p: float) -> float:
    return 0.75 * (1 - p)


def p_from_r(r: float) -> float:
    return 1 - 4 * r / 3


@dataclasses.dataclass(frozen=True)
class ErrorRates:
    r_ref: float
    r_int: float
    r_cz: float
    f_cz: float
    warning: Optional[str] = None


def error_rates(p_ref: float, p_int: float) -> ErrorRates:
    """Interleaved-RB gate error ``r_CZ = 3/4 (1 - p_int / p_ref)``."""
    if not (0 < p_ref <= 1 and 0 < p_int <= 1):
        raise ValidationError("decay parameters must lie in (0, 1]")
    warning = None
    if p_int > p_ref:
        warning = "interleaved decay slower than reference (p_int > p_ref)"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    r_cz = 0.75 * (1 - p_int / p_ref)
    return ErrorRates(r_from_p(p_ref), r_from_p(p_int), r_cz, 1 - r_cz, warning)


def consistency_upper_bound(
    r_ref: float, r_1q: float, cz_per_clifford: float = CZ_PER_CLIFFORD, single_per_clifford: float = SINGLE_PER_CLIFFORD
) -> float:
    """Upper bound on the CZ error if all reference error came from its gates."""
    budget = r_ref - single_per_clifford * r_1q
    if budget <= 0:
        raise NegativeBoundError(f"r_ref = {r_ref} does not exceed {single_per_clifford} * r_1q = {single_per_clifford * r_1q}")
    return budget / cz_per_clifford


# -- bootstrap -----------------------------------------------------------------------


def _resample(raw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = raw.shape[1]
    picks = rng.integers(0, n, size=raw.shape)
    return np.take_along_axis(raw, picks, axis=1)


def bootstrap_distribution(lengths, raw_ref, raw_int=None, resamples: int = 200, seed: int = 0, max_failure: float = 0.05):
    """Bootstrap samples of ``F_CZ`` (or of ``p`` when ``raw_int`` is None).

    Sequences are resampled with replacement within each length and the
    decays refitted.  Raises :class:`FitError` when more than
    ``max_failure`` of the refits fail.
    """
    if resamples < 200:
        raise ValidationError("use at least 200 bootstrap resamples")
    rng = np.random.default_rng([seed, 0xB007])
    raw_ref = np.asarray(raw_ref, dtype=float)
    raw_int = None if raw_int is None else np.asarray(raw_int, dtype=float)
    values, failures = [], 0
    for _ in range(resamples):
        try:
            ref = _resample(raw_ref, rng)
            f_ref = fit_rb(lengths, ref.mean(axis=1), _sem(ref))
            if raw_int is None:
                values.append(f_ref.p)
                continue
            it = _resample(raw_int, rng)
            f_int = fit_rb(lengths, it.mean(axis=1), _sem(it))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                values.append(error_rates(f_ref.p, f_int.p).f_cz)
        except (FitError, ValidationError):
            failures += 1
    if failures > max_failure * resamples:
        raise FitError(f"{failures} of {resamples} bootstrap fits failed", {"failures": failures})
    return np.array(values)


def bootstrap_uncertainty(lengths, raw_ref, raw_int=None, resamples: int = 200, seed: int = 0) -> float:
    """Standard deviation of the bootstrapped ``F_CZ`` (or ``p``)."""
    return float(np.std(bootstrap_distribution(lengths, raw_ref, raw_int, resamples, seed), ddof=1))


@dataclasses.dataclass(frozen=True)
class InterleavedResult:
    reference: RBResult
    interleaved: RBResult
    rates: ErrorRates
    sigma_f_cz: float

    def summary(self) -> Dict:
        return {
            "reference_fit": dataclasses.asdict(self.reference.fit),
            "interleaved_fit": dataclasses.asdict(self.interleaved.fit),
            "r_ref": self.rates.r_ref,
            "r_int": self.rates.r_int,
            "r_cz": self.rates.r_cz,
            "F_CZ": self.rates.f_cz,
            "F_CZ_bootstrap_sigma": self.sigma_f_cz,
            "warning": self.rates.warning,
            "lengths": self.reference.lengths.tolist(),
            "reference_means": self.reference.means.tolist(),
            "interleaved_means": self.interleaved.means.tolist(),
            "reference_leakage": self.reference.leakage.mean(axis=1).tolist(),
            "interleaved_leakage": self.interleaved.leakage.mean(axis=1).tolist(),
        }


def run_interleaved(
    provider: ChannelProvider, config: RBConfig, resamples: int = 200, workers: int = 1
) -> InterleavedResult:
    """Reference and interleaved RB on shared sequences, with bootstrap sigma."""
    ref = run_rb(provider, dataclasses.replace(config, interleaved=False), workers)
    it = run_rb(provider, dataclasses.replace(config, interleaved=True), workers)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rates = error_rates(ref.fit.p, it.fit.p)
    sigma = bootstrap_uncertainty(ref.lengths, ref.raw, it.raw, resamples, config.seed)
    return InterleavedResult(ref, it, rates, sigma)
