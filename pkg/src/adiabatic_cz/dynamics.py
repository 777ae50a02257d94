"""Time evolution under the coupler flux pulse.

The Hamiltonian conserves the total excitation number, so unitary
propagation is done block by block.  Each time step uses the fourth-order
Magnus integrator with two Gauss points, which keeps the lab-frame
propagator converged to 1e-8 at the default 2 ps step.

Open-system evolution uses Strang splitting: the exact unitary over a short
chunk sandwiched between half-chunk exponentials of the dissipator.
Energy relaxation only lowers the excitation number, so the subspace with
at most ``k`` excitations is invariant and everything is computed there.
"""
from __future__ import annotations

import dataclasses
import math
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.special import ndtri

from .device import DeviceParams, FluxMap, Label, basis_labels, excitation_numbers, hamiltonian_parts, mode_operators
from .errors import AccuracyError, RangeError, ValidationError
from .spectrum import L000, L001, L100, L101, diagonalize, label_states

TWO_PI = 2 * np.pi
DEFAULT_DT = 0.002  # ns
DEFAULT_CHUNK = 0.1  # ns, dissipator splitting interval
SPACING_NS = 4.0
_GAUSS = math.sqrt(3) / 6


# -- pulses ------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class PulseShape:
    """Coupler frequency excursion.

    ``shape="sine"`` is the half-period sinusoid: the excursion grows as
    ``sin(pi t / duration)`` from the idle value to the peak and back.
    ``space`` selects whether that sinusoid is drawn in coupler frequency or
    in flux (mapped through ``flux_map``).  ``shape="square"`` holds the
    peak for the whole duration, optionally with sinusoidal ``ramp`` edges.
    """

    idle_frequency: float
    peak_frequency: float
    duration: float
    sample_step: float = DEFAULT_DT
    shape: str = "sine"
    space: str = "frequency"
    flux_map: Optional[FluxMap] = None
    ramp: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValidationError("pulse duration must be positive")
        if not 0 < self.sample_step <= self.duration / 100 * (1 + 1e-12):
            raise ValidationError("sample_step must be positive and at most duration/100")
        if self.shape not in ("sine", "square"):
            raise ValidationError(f"unknown pulse shape {self.shape!r}")
        if self.space not in ("frequency", "flux"):
            raise ValidationError(f"unknown pulse space {self.space!r}")
        if self.space == "flux" and self.flux_map is None:
            raise ValidationError("flux-space pulses need a flux map")
        if not 0 <= self.ramp <= self.duration / 2:
            raise ValidationError("ramp must lie in [0, duration/2]")
        if self.idle_frequency <= 0 or self.peak_frequency <= 0:
            raise RangeError("pulse frequencies must be positive")
        if self.flux_map is not None:
            self.flux_map.flux([self.idle_frequency, self.peak_frequency])

    @classmethod
    def for_device(cls, params: DeviceParams, duration: float, flux_amplitude: float = 0.0, **kwargs):
        """Pulse whose peak sits ``flux_amplitude`` flux quanta from the idle bias."""
        fmap = params.flux_map
        phi_idle = float(fmap.flux(params.idle_frequency))
        peak = float(fmap.frequency(phi_idle + flux_amplitude))
        kwargs.setdefault("flux_map", fmap)
        kwargs.setdefault("sample_step", min(DEFAULT_DT, duration / 100))
        return cls(params.idle_frequency, peak, duration, **kwargs)

    @property
    def idle_flux(self) -> float:
        return float(self.flux_map.flux(self.idle_frequency))

    @property
    def peak_flux(self) -> float:
        return float(self.flux_map.flux(self.peak_frequency))

    @property
    def flux_amplitude(self) -> float:
        return self.peak_flux - self.idle_flux

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "sine":
            return np.sin(np.pi * t / self.duration)
        if self.ramp == 0:
            inside = (t > 0) & (t < self.duration)
            return inside.astype(float)
        rise = np.clip(t / self.ramp, 0, 1)
        fall = np.clip((self.duration - t) / self.ramp, 0, 1)
        return np.sin(0.5 * np.pi * np.minimum(rise, fall))

    def frequency(self, t):
        s = self.envelope(t)
        if self.space == "frequency":
            return self.idle_frequency + (self.peak_frequency - self.idle_frequency) * s
        phi = self.idle_flux + self.flux_amplitude * s
        return self.flux_map.frequency(phi)

    def flux(self, t):
        if self.space == "flux":
            return self.idle_flux + self.flux_amplitude * self.envelope(t)
        return self.flux_map.flux(self.frequency(t)) if self.flux_map is not None else np.full(np.shape(t), np.nan)

    def frequency_range(self) -> Tuple[float, float]:
        return tuple(sorted((self.idle_frequency, self.peak_frequency)))

    def with_peak(self, peak_frequency: float) -> "PulseShape":
        return dataclasses.replace(self, peak_frequency=peak_frequency)

    def with_duration(self, duration: float) -> "PulseShape":
        return dataclasses.replace(self, duration=duration, sample_step=min(self.sample_step, duration / 100))

    def waveform_rows(self):
        n = int(round(self.duration / self.sample_step))
        t = np.linspace(0, self.duration, n + 1)
        return zip(t, self.frequency(t), self.flux(t))

    def to_csv(self, path, meta=None):
        from .io import write_csv

        return write_csv(path, ("t_ns", "coupler_frequency_GHz", "flux_Phi0"), self.waveform_rows(), meta)


def idle_pulse(params: DeviceParams, duration: float) -> PulseShape:
    return PulseShape(params.idle_frequency, params.idle_frequency, duration, min(DEFAULT_DT, duration / 100))


def pulse_waveform(pulse: PulseShape, t):
    """Coupler frequency (GHz) at time ``t`` (ns) inside the pulse."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr > pulse.duration):
        raise RangeError(f"t outside [0, {pulse.duration}] ns")
    return pulse.frequency(arr)


Segments = Union[PulseShape, Sequence[PulseShape]]


def _segments(pulses: Segments) -> List[PulseShape]:
    return [pulses] if isinstance(pulses, PulseShape) else list(pulses)


# -- noise -------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ModeNoise:
    """Relaxation and pure-dephasing times of one mode, in microseconds.

    Optional tables give the times as functions of the coupler frequency
    (``(frequencies_GHz, times_us)``, frequencies strictly increasing) and
    override the constant values along a pulse.
    """

    t1: float = math.inf
    tphi: float = math.inf
    t1_table: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    tphi_table: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    def __post_init__(self):
        if not (self.t1 > 0 and self.tphi > 0):
            raise ValidationError("relaxation and dephasing times must be positive")
        for name in ("t1_table", "tphi_table"):
            table = getattr(self, name)
            if table is None:
                continue
            freqs, times = (tuple(float(x) for x in col) for col in table)
            if len(freqs) != len(times) or len(freqs) < 2:
                raise ValidationError(f"{name} needs matching columns with >= 2 rows")
            if np.any(np.diff(freqs) <= 0):
                raise ValidationError(f"{name} frequency grid must be strictly increasing")
            if min(times) <= 0:
                raise ValidationError(f"{name} times must be positive")
            object.__setattr__(self, name, (freqs, times))

    @staticmethod
    def _lookup(table, const, wc):
        wc = np.asarray(wc, dtype=float)
        if table is None:
            return np.full(wc.shape, const)
        freqs, times = table
        if np.any(wc < freqs[0] - 1e-9) or np.any(wc > freqs[-1] + 1e-9):
            raise RangeError("coupler frequency outside the noise table range")
        return np.interp(wc, freqs, times)

    def t1_at(self, wc):
        return self._lookup(self.t1_table, self.t1, wc)

    def tphi_at(self, wc):
        return self._lookup(self.tphi_table, self.tphi, wc)


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """Per-mode decoherence.

    ``dephasing_kind="markovian"`` uses the collapse operator
    ``sqrt(1/(2 Tphi)) * 2n``.  ``"quasi_static_gaussian"`` instead averages
    over static Gaussian frequency offsets with standard deviation
    ``sqrt(2) / (2 pi Tphi)``, drawn by symmetric stratified sampling
    from a Philox stream keyed by ``seed``, which gives exp(-(t/Tphi)^2) Ramsey decay.
    """

    q1: ModeNoise = ModeNoise()
    coupler: ModeNoise = ModeNoise()
    q2: ModeNoise = ModeNoise()
    dephasing_kind: str = "markovian"
    samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.dephasing_kind not in ("markovian", "quasi_static_gaussian"):
            raise ValidationError(f"unknown dephasing kind {self.dephasing_kind!r}")
        if self.dephasing_kind == "quasi_static_gaussian" and self.samples < 64:
            raise ValidationError("quasi-static averaging needs at least 64 samples")

    @property
    def modes(self):
        return (self.q1, self.coupler, self.q2)

    @property
    def is_noiseless(self) -> bool:
        return all(math.isinf(m.t1) and math.isinf(m.tphi) and m.t1_table is None and m.tphi_table is None for m in self.modes)

    def relaxation_rates(self, wc):
        """Energy-relaxation rates in 1/ns, shape ``(len(wc), 3)``."""
        return np.stack([1.0 / (1e3 * m.t1_at(wc)) for m in self.modes], axis=-1)

    def dephasing_rates(self, wc):
        """1/Tphi in 1/ns, shape ``(len(wc), 3)``."""
        return np.stack([1.0 / (1e3 * m.tphi_at(wc)) for m in self.modes], axis=-1)

    def offset_draws(self) -> np.ndarray:
        """Standard-normal draws, shape ``(samples, 3)``.

        Each mode gets a symmetric stratified sample: one uniform draw per
        stratum of the lower half, mapped through the normal quantile and
        mirrored, then shuffled independently per mode.  Plain Monte Carlo
        with 64 draws misestimates the Gaussian decay envelope by several
        percent; this scheme keeps it within a few parts per thousand.
        """
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        n = self.samples
        half = (n + 1) // 2
        cols = []
        for _ in range(3):
            u = (np.arange(half) + rng.random(half)) / (2 * half)
            z = ndtri(u)
            col = np.concatenate([z, -z])[:n]
            cols.append(rng.permutation(col))
        return np.stack(cols, axis=1)


# -- subspace and blocks -----------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Subspace:
    """States with at most ``max_excitation`` quanta, grouped by manifold."""

    params: DeviceParams
    max_excitation: Optional[int]

    @property
    def indices(self) -> np.ndarray:
        return _subspace_indices(self.params, self.max_excitation)[0]

    @property
    def blocks(self) -> Tuple[np.ndarray, ...]:
        return _subspace_indices(self.params, self.max_excitation)[1]

    @property
    def dim(self) -> int:
        return len(self.indices)

    @property
    def labels(self) -> Tuple[Label, ...]:
        lab = basis_labels(self.params)
        return tuple(lab[i] for i in self.indices)


@lru_cache(maxsize=64)
def _subspace_indices(params: DeviceParams, max_excitation):
    n = excitation_numbers(params)
    top = n.max() if max_excitation is None else max_excitation
    order, blocks, start = [], [], 0
    for k in range(top + 1):
        idx = np.flatnonzero(n == k)
        order.extend(idx)
        blocks.append(np.arange(start, start + len(idx)))
        start += len(idx)
    return np.array(order), tuple(blocks)


def _gauss_frequencies(pulse: PulseShape, dt: float):
    n = max(1, int(math.ceil(pulse.duration / dt - 1e-9)))
    h = pulse.duration / n
    k = np.arange(n)
    w1 = pulse.frequency((k + 0.5 - _GAUSS) * h)
    w2 = pulse.frequency((k + 0.5 + _GAUSS) * h)
    return h, w1, w2


def _ordered_product(stack: np.ndarray) -> np.ndarray:
    """Time-ordered product along axis -3: ``U[n-1] @ ... @ U[0]``."""
    while stack.shape[-3] > 1:
        n = stack.shape[-3]
        even = stack[..., 1 : n - n % 2 : 2, :, :] @ stack[..., 0 : n - n % 2 : 2, :, :]
        if n % 2:
            even = np.concatenate([even, stack[..., n - 1 :, :, :]], axis=-3)
        stack = even
    return stack[..., 0, :, :]


def _block_step_unitaries(h0b, ncb, diag_n, h, w1, w2, offsets):
    """Magnus-4 step propagators for one block; returns ``(steps, b, b)``."""
    H1 = h0b[None] + w1[:, None, None] * ncb[None]
    H2 = h0b[None] + w2[:, None, None] * ncb[None]
    if offsets is not None:
        o1, o2 = offsets
        idx = np.arange(h0b.shape[0])
        H1[:, idx, idx] += o1 @ diag_n
        H2[:, idx, idx] += o2 @ diag_n
    comm = H2 @ H1 - H1 @ H2
    K = np.pi * h * (H1 + H2) - 1j * (np.pi**2 * h * h / math.sqrt(3)) * comm
    e, v = np.linalg.eigh(K)
    return (v * np.exp(-1j * e)[:, None, :]) @ v.conj().transpose(0, 2, 1)


def _segment_group_unitaries(
    sub: Subspace,
    pulse: PulseShape,
    dt: float,
    group_time: Optional[float],
    offset_fn: Optional[Callable] = None,
    batch: int = 2048,
):
    """Products of step propagators over consecutive groups of steps.

    Returns ``(U_groups, group_durations, boundary_frequencies)`` with
    ``U_groups`` of shape ``(n_groups, dim, dim)`` in subspace coordinates
    and the coupler frequency at the ``n_groups + 1`` group boundaries.
    """
    h, w1, w2 = _gauss_frequencies(pulse, dt)
    n = len(w1)
    g = n if group_time is None else max(1, int(round(group_time / h)))
    n_groups = int(math.ceil(n / g))
    sizes = np.full(n_groups, g)
    sizes[-1] = n - g * (n_groups - 1)
    durations = sizes * h
    edges = pulse.frequency(np.concatenate([[0.0], np.cumsum(durations)]))
    h0, nc = hamiltonian_parts(sub.params)
    nums = np.stack([np.diag(a.T @ a) for a in mode_operators(sub.params)])  # (3, D)
    idx_full = sub.indices
    out = np.zeros((n_groups, sub.dim, sub.dim), dtype=complex)
    constant = pulse.peak_frequency == pulse.idle_frequency
    if constant:
        w = np.array([pulse.idle_frequency])
        shift = None if offset_fn is None else offset_fn(w)[0]
    else:
        offsets = None if offset_fn is None else (offset_fn(w1), offset_fn(w2))
    for blk in sub.blocks:
        full = idx_full[blk]
        h0b = h0[np.ix_(full, full)]
        ncb = nc[np.ix_(full, full)]
        diag_n = nums[:, full]
        if constant:
            # time-independent: exact exponential per distinct group length
            H = h0b + w[0] * ncb
            if shift is not None:
                H = H + np.diag(shift @ diag_n)
            e, v = np.linalg.eigh(H)
            for size in np.unique(sizes):
                U = (v * np.exp(-1j * TWO_PI * e * size * h)) @ v.conj().T
                out[np.ix_(sizes == size, blk, blk)] = U
            continue
        if g <= batch:
            step_batch = (batch // g) * g
            for s0 in range(0, n, step_batch):
                s1 = min(n, s0 + step_batch)
                offs = None if offset_fn is None else (offsets[0][s0:s1], offsets[1][s0:s1])
                steps = _block_step_unitaries(h0b, ncb, diag_n, h, w1[s0:s1], w2[s0:s1], offs)
                k, rem = divmod(s1 - s0, g)
                res = []
                if k:
                    res.append(_ordered_product(steps[: k * g].reshape(k, g, *steps.shape[1:])))
                if rem:
                    res.append(_ordered_product(steps[k * g :])[None])
                gs = s0 // g
                out[gs : gs + k + (rem > 0), blk[:, None], blk[None, :]] = np.concatenate(res)
        else:
            for gi in range(n_groups):
                acc = np.eye(len(blk), dtype=complex)
                for s0 in range(gi * g, gi * g + sizes[gi], batch):
                    s1 = min(gi * g + sizes[gi], s0 + batch)
                    offs = None if offset_fn is None else (offsets[0][s0:s1], offsets[1][s0:s1])
                    steps = _block_step_unitaries(h0b, ncb, diag_n, h, w1[s0:s1], w2[s0:s1], offs)
                    acc = _ordered_product(steps) @ acc
                out[gi, blk[:, None], blk[None, :]] = acc
    return out, durations, edges


def _propagate_subspace(sub: Subspace, pulses: Segments, dt: float, offset_fn=None) -> np.ndarray:
    U = np.eye(sub.dim, dtype=complex)
    for p in _segments(pulses):
        U = _segment_group_unitaries(sub, p, dt, None, offset_fn)[0][0] @ U
    return U


def propagate_unitary(
    params: DeviceParams,
    pulse: Segments,
    dt: Optional[float] = None,
    max_excitation: Optional[int] = None,
    verify: bool = True,
    tolerance: float = 1e-8,
    offsets: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Time-ordered propagator of one pulse (or a list of back-to-back pulses).

    Without ``max_excitation`` the result is in tensor-product order.  With
    it, the result is the propagator restricted to the invariant subspace,
    in the order of :attr:`Subspace.indices` (exact, since the Hamiltonian
    conserves excitations).  ``verify`` repeats the run at half
    the step and raises :class:`AccuracyError` if any entry moved by more
    than ``tolerance``; the refined propagator is returned.

    ``offsets`` adds static frequency shifts (GHz) to the three modes.
    """
    segs = _segments(pulse)
    dt = dt or min(p.sample_step for p in segs)
    sub = Subspace(params, max_excitation)
    fn = None
    if offsets is not None:
        off = np.asarray(offsets, dtype=float)
        fn = lambda w: np.broadcast_to(off, (len(w), 3))  # noqa: E731
    U = _propagate_subspace(sub, segs, dt, fn)
    if verify:
        fine = _propagate_subspace(sub, segs, dt / 2, fn)
        residual = float(np.abs(fine - U).max())
        if residual > tolerance:
            raise AccuracyError(f"step halving changed the propagator by {residual:.3g}", residual)
        U = fine
    if max_excitation is None:
        # back from manifold-grouped order to tensor-product order
        full = np.empty_like(U)
        full[np.ix_(sub.indices, sub.indices)] = U
        U = full
    return U


# -- dressed frame -----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class DressedFrame:
    """Idle-point dressed basis of a subspace.

    ``vectors[:, k]`` (subspace coordinates) is the dressed state labelled
    ``labels[k]``.  ``frame_energies`` are the dressed energies with the
    |101> entry replaced by E(100) + E(001) - E(000), so that in the
    rotating frame the residual ZZ interaction remains visible.
    """

    labels: Tuple[Label, ...]
    vectors: np.ndarray
    energies: np.ndarray
    frame_energies: np.ndarray

    def index(self, label: Label) -> int:
        return self.labels.index(tuple(label))

    @property
    def computational(self) -> np.ndarray:
        """Indices of |00>, |01>, |10>, |11> (qubit order Q1 Q2)."""
        return np.array([self.index(lab) for lab in (L000, L001, L100, L101)])

    def rotation(self, duration: float) -> np.ndarray:
        return np.exp(1j * TWO_PI * self.frame_energies * duration)


@lru_cache(maxsize=32)
def dressed_frame(params: DeviceParams, max_excitation: int = 2) -> DressedFrame:
    sub = Subspace(params, max_excitation)
    e, v, m = diagonalize(params, params.idle_frequency, max_excitation)
    spec = label_states(params, e, v, m, None, params.idle_frequency)
    # eigen-order from diagonalize matches the manifold-grouped subspace order
    vecs = v[sub.indices]
    frame_e = spec.energies.copy()
    lab = list(spec.labels)
    frame_e[lab.index(L101)] = spec.energy(L100) + spec.energy(L001) - spec.energy(L000)
    return DressedFrame(spec.labels, vecs, spec.energies.copy(), frame_e)


def to_dressed(U_sub: np.ndarray, frame: DressedFrame, duration: Optional[float] = None) -> np.ndarray:
    """Express a subspace propagator in the dressed basis; with ``duration``,
    additionally move it into the rotating frame."""
    Ud = frame.vectors.conj().T @ U_sub @ frame.vectors
    if duration is not None:
        Ud = frame.rotation(duration)[:, None] * Ud
    return Ud


def total_duration(pulses: Segments) -> float:
    return float(sum(p.duration for p in _segments(pulses)))


# -- Lindblad ----------------------------------------------------------------


def _dissipator(L: sp.spmatrix) -> sp.csr_matrix:
    """Superoperator of D[L] in row-major vectorisation."""
    d = L.shape[0]
    eye = sp.identity(d, format="csr")
    LdL = (L.conj().T @ L).tocsr()
    return (sp.kron(L, L.conj()) - 0.5 * sp.kron(LdL, eye) - 0.5 * sp.kron(eye, LdL.T)).tocsr()


@lru_cache(maxsize=16)
def _mode_dissipators(params: DeviceParams, max_excitation):
    sub = Subspace(params, max_excitation)
    idx = sub.indices
    relax, deph = [], []
    for a in mode_operators(params):
        a_sub = sp.csr_matrix(a[np.ix_(idx, idx)])
        n_sub = sp.csr_matrix(np.diag(np.diag((a.T @ a)[np.ix_(idx, idx)])))
        relax.append(_dissipator(a_sub))
        deph.append(_dissipator(n_sub))
    return tuple(relax), tuple(deph)


class _DissipatorCache:
    """Exponentials of the dissipator for piecewise-constant rates."""

    dense_limit = 1600

    def __init__(self, params, max_excitation, noise: NoiseModel):
        self.relax, self.deph = _mode_dissipators(params, max_excitation)
        self.dim2 = self.relax[0].shape[0]
        self.markov_dephasing = noise.dephasing_kind == "markovian"
        self._memo = {}

    def generator(self, g1, gphi):
        L = sp.csr_matrix((self.dim2, self.dim2), dtype=complex)
        for i in range(3):
            if g1[i] > 0:
                L = L + g1[i] * self.relax[i]
            if self.markov_dephasing and gphi[i] > 0:
                L = L + 2.0 * gphi[i] * self.deph[i]
        return L

    def propagator(self, g1, gphi, tau):
        key = (tuple(np.round(g1, 15)), tuple(np.round(gphi, 15)), round(tau, 12))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        L = self.generator(g1, gphi)
        if self.dim2 <= self.dense_limit:
            P = scipy.linalg.expm(L.toarray() * tau)
        else:
            P = ("sparse", (L * tau).tocsr())
        if len(self._memo) < 4096:
            self._memo[key] = P
        return P

    @staticmethod
    def apply(P, vec):
        if isinstance(P, tuple):
            return expm_multiply(P[1], vec)
        return P @ vec


def _chunk_sequence(sub: Subspace, pulses: Segments, dt: float, chunk: float, noise: NoiseModel, offset_fn):
    """Chunk unitaries and the dissipator steps between them.

    Returns ``(unitaries, dissipator_steps)`` where ``dissipator_steps`` has
    one more entry than ``unitaries``: ``(duration, g1, gphi)`` applied at
    each chunk boundary.  The first and last carry half a chunk, interior
    ones half of each neighbour (Strang splitting with rates sampled at the
    boundaries).
    """
    Us, taus, edges = [], [], []
    for p in _segments(pulses):
        U, durs, bnd = _segment_group_unitaries(sub, p, dt, chunk, offset_fn)
        Us.extend(U)
        taus.extend(durs)
        edges.append(bnd)
    taus = np.asarray(taus)
    # boundary between segments: average the two coincident edge values
    freqs = [edges[0][0]]
    for i, bnd in enumerate(edges):
        inner = list(bnd[1:-1])
        freqs.extend(inner)
        freqs.append(bnd[-1] if i + 1 == len(edges) else 0.5 * (bnd[-1] + edges[i + 1][0]))
    freqs = np.asarray(freqs)
    weights = np.concatenate([[taus[0] / 2], (taus[:-1] + taus[1:]) / 2, [taus[-1] / 2]])
    g1 = noise.relaxation_rates(freqs)
    gphi = noise.dephasing_rates(freqs)
    return Us, list(zip(weights, g1, gphi))


def _constant_liouvillian_step(sub: Subspace, pulse: PulseShape, noise: NoiseModel, offset_fn, cache):
    """Exact propagator of a constant segment under the full Liouvillian."""
    w = np.array([pulse.idle_frequency])
    h0, nc = hamiltonian_parts(sub.params)
    idx = sub.indices
    H = h0[np.ix_(idx, idx)] + w[0] * nc[np.ix_(idx, idx)]
    if offset_fn is not None:
        nums = np.stack([np.diag(a.T @ a)[idx] for a in mode_operators(sub.params)])
        H = H + np.diag(offset_fn(w)[0] @ nums)
    eye = sp.identity(sub.dim, format="csr")
    Hs = sp.csr_matrix(H)
    L = -1j * TWO_PI * (sp.kron(Hs, eye) - sp.kron(eye, Hs.T))
    L = L + cache.generator(noise.relaxation_rates(w)[0], noise.dephasing_rates(w)[0])
    if cache.dim2 <= cache.dense_limit:
        return scipy.linalg.expm(L.toarray() * pulse.duration)
    return ("sparse", (L * pulse.duration).tocsr())


def _lindblad_steps(sub: Subspace, segs, dt: float, chunk: float, noise: NoiseModel, offset_fn, cache):
    """Ordered evolution steps: ``("U", unitary)`` or ``("S", superoperator)``.

    Constant segments are exponentiated exactly in one step; driven segments
    are split into chunks with the dissipator applied at chunk boundaries.
    """
    steps = []
    for p in segs:
        if p.peak_frequency == p.idle_frequency:
            steps.append(("S", _constant_liouvillian_step(sub, p, noise, offset_fn, cache)))
            continue
        Us, diss = _chunk_sequence(sub, [p], dt, chunk, noise, offset_fn)
        for k, (tau, g1, gphi) in enumerate(diss):
            steps.append(("S", cache.propagator(g1, gphi, tau)))
            if k < len(Us):
                steps.append(("U", Us[k]))
    return steps


def _offset_function(noise: NoiseModel, draw: np.ndarray):
    def fn(w):
        sigma = math.sqrt(2) / TWO_PI * noise.dephasing_rates(w)  # GHz
        return sigma * draw[None, :]

    return fn


def _noise_samples(noise: Optional[NoiseModel]):
    if noise is None or noise.dephasing_kind == "markovian":
        return [None]
    return list(noise.offset_draws())


def _validate_density_matrix(rho):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > 1e-10:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-8:
        raise ValidationError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValidationError("density matrix is not positive semidefinite")
    return rho


def propagate_lindblad(
    params: DeviceParams,
    pulse: Segments,
    noise: Optional[NoiseModel],
    rho0: np.ndarray,
    dt: Optional[float] = None,
    chunk: float = DEFAULT_CHUNK,
) -> np.ndarray:
    """Evolve a full-space density matrix through pulse(s) under decoherence.

    Relaxation acts through ``sqrt(1/T1) a`` per mode.  Dephasing is either
    Markovian or quasi-static Gaussian according to ``noise.dephasing_kind``.
    """
    rho0 = _validate_density_matrix(rho0)
    if rho0.shape[0] != params.dimension:
        raise ValidationError("density matrix dimension does not match the device")
    segs = _segments(pulse)
    dt = dt or min(p.sample_step for p in segs)
    support = np.flatnonzero((np.abs(rho0).sum(axis=0) + np.abs(rho0).sum(axis=1)) > 0)
    kmax = int(excitation_numbers(params)[support].max()) if support.size else 0
    sub = Subspace(params, kmax)
    idx = sub.indices
    noise = noise or NoiseModel()
    cache = _DissipatorCache(params, kmax, noise)
    acc = np.zeros((sub.dim, sub.dim), dtype=complex)
    samples = _noise_samples(noise)
    for draw in samples:
        fn = None if draw is None else _offset_function(noise, draw)
        rho = rho0[np.ix_(idx, idx)].copy()
        for kind, M in _lindblad_steps(sub, segs, dt, chunk, noise, fn, cache):
            if kind == "U":
                rho = M @ rho @ M.conj().T
            else:
                rho = cache.apply(M, rho.ravel()).reshape(rho.shape)
        acc += rho
    out = np.zeros_like(rho0)
    out[np.ix_(idx, idx)] = acc / len(samples)
    return out


# -- channels ----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class QuantumChannel:
    """CPTP map on a small basis, as a row-major superoperator.

    ``vec(rho)[i*d + j] = rho[i, j]`` and ``vec(A rho B) = (A kron B^T) vec(rho)``.
    """

    superoperator: np.ndarray
    labels: Tuple[Label, ...]
    frame: str = "rotating"

    @property
    def dim(self) -> int:
        return len(self.labels)

    @classmethod
    def identity(cls, labels, frame="rotating"):
        d = len(labels)
        return cls(np.eye(d * d, dtype=complex), tuple(labels), frame)

    @classmethod
    def from_unitary(cls, U, labels, frame="rotating"):
        U = np.asarray(U)
        return cls(np.kron(U, U.conj()), tuple(labels), frame)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.superoperator @ np.asarray(rho).ravel()).reshape(self.dim, self.dim)

    def __matmul__(self, other: "QuantumChannel") -> "QuantumChannel":
        """``(self @ other)(rho) = self(other(rho))``."""
        if self.labels != other.labels:
            raise ValidationError("channels act on different bases")
        return QuantumChannel(self.superoperator @ other.superoperator, self.labels, self.frame)

    def choi(self) -> np.ndarray:
        d = self.dim
        return self.superoperator.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)

    def trace_error(self) -> float:
        d = self.dim
        tr = self.superoperator.reshape(d, d, d * d)[np.arange(d), np.arange(d)].sum(axis=0)
        return float(np.abs(tr - np.eye(d).ravel()).max())

    def min_choi_eigenvalue(self) -> float:
        J = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (J + J.conj().T)).min())

    def validate(self, tolerance: float = 1e-8) -> "QuantumChannel":
        from .errors import AccuracyError as _Acc

        if self.trace_error() > tolerance:
            raise _Acc(f"channel not trace preserving ({self.trace_error():.3g})", self.trace_error())
        if self.min_choi_eigenvalue() < -tolerance:
            raise _Acc(f"channel not completely positive ({self.min_choi_eigenvalue():.3g})", self.min_choi_eigenvalue())
        return self

    def index(self, label: Label) -> int:
        return self.labels.index(tuple(label))

    @property
    def computational(self) -> np.ndarray:
        return np.array([self.index(lab) for lab in (L000, L001, L100, L101)])


def _superop_from_unitary(U):
    return np.kron(U, U.conj())


def _basis_change(S: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Superoperator in new coordinates where ``rho_old = W rho_new W^dag``."""
    left = np.kron(W.conj().T, W.T)
    right = np.kron(W, W.conj())
    return left @ S @ right


def channel_from_pulse(
    params: DeviceParams,
    pulse: Segments,
    noise: Optional[NoiseModel] = None,
    max_excitation: int = 2,
    frame: str = "rotating",
    dt: Optional[float] = None,
    chunk: float = DEFAULT_CHUNK,
    validate: bool = True,
) -> QuantumChannel:
    """Channel of a pulse (or pulse sequence) on the dressed ``N <= max_excitation`` subspace.

    The basis is the idle-point dressed basis with labels from
    :func:`dressed_frame`.  ``frame="rotating"`` removes the free idle
    evolution (except the residual ZZ term); ``frame="lab"`` keeps it, which
    makes channels of consecutive pulses compose exactly.

    Raises:
        AccuracyError: if the result violates trace preservation or complete
            positivity by more than 1e-8 (only with ``validate``).
    """
    if frame not in ("rotating", "lab"):
        raise ValidationError(f"unknown frame {frame!r}")
    segs = _segments(pulse)
    dt = dt or min(p.sample_step for p in segs)
    sub = Subspace(params, max_excitation)
    fr = dressed_frame(params, max_excitation)
    if noise is None or noise.is_noiseless:
        S = _superop_from_unitary(_propagate_subspace(sub, segs, dt))
    else:
        cache = _DissipatorCache(params, max_excitation, noise)
        samples = _noise_samples(noise)
        S = np.zeros((sub.dim**2,) * 2, dtype=complex)
        for draw in samples:
            fn = None if draw is None else _offset_function(noise, draw)
            d = sub.dim
            acc = np.eye(d * d, dtype=complex)
            for kind, M in _lindblad_steps(sub, segs, dt, chunk, noise, fn, cache):
                if kind == "U":
                    # columns of acc are vectorised operators X -> U X U^dag
                    X = acc.T.reshape(d * d, d, d)
                    acc = (M @ X @ M.conj().T).reshape(d * d, d * d).T
                else:
                    acc = cache.apply(M, acc)
            S += acc
        S /= len(samples)
    S = _basis_change(S, fr.vectors)
    if frame == "rotating":
        f = fr.rotation(total_duration(segs))
        S = np.kron(f, f.conj())[:, None] * S
    ch = QuantumChannel(S, fr.labels, frame)
    return ch.validate() if validate else ch


def virtual_z(labels: Sequence[Label], phi1: float, phi2: float, frame: str = "rotating") -> QuantumChannel:
    """Frame update multiplying each label by ``exp(-i (phi1 n1 + phi2 n2))``."""
    phases = np.array([np.exp(-1j * (phi1 * lab[0] + phi2 * lab[2])) for lab in labels])
    return QuantumChannel.from_unitary(np.diag(phases), labels, frame)


def embed_computational(U4: np.ndarray, labels: Sequence[Label]) -> np.ndarray:
    """Lift a 4x4 operator on (|00>, |01>, |10>, |11>) to the labelled basis,
    acting as identity on every non-computational label."""
    labels = list(labels)
    comp = [labels.index(lab) for lab in (L000, L001, L100, L101)]
    U = np.eye(len(labels), dtype=complex)
    U[np.ix_(comp, comp)] = U4
    return U
