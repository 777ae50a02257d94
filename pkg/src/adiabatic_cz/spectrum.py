"""Dressed spectrum, state labelling and the effective ZZ coupling.

Dressed eigenstates are labelled by the bare state ``(n1, nc, n2)`` they
evolve from.  At the idle point the coupler is far detuned and labels are
assigned by maximum overlap with the bare basis; away from idle the labels
are carried along a fine frequency path by continuity, so that the |101>
label follows its adiabatic branch through bare-level crossings.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .device import (
    DeviceParams,
    FluxMap,
    Label,
    basis_labels,
    hamiltonian_parts,
    manifolds,
)
from .errors import DegenerateLabelError, RangeError, ToolkitError, ValidationError

L000, L100, L001, L101 = (0, 0, 0), (1, 0, 0), (0, 0, 1), (1, 0, 1)
TIE_TOLERANCE = 1e-6
DEFAULT_PATH_STEP = 0.005  # GHz between continuity-labelling points
DEGENERACY_SHIFT = 1e-6  # GHz, 1 kHz nudge off exact bare crossings


def eigensolve(H: np.ndarray, check: bool = True):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.

    Raises:
        ValidationError: if ``H`` is not Hermitian to 1e-12 relative tolerance.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError("eigensolve needs a square matrix")
    scale = max(np.abs(H).max(), 1e-300)
    if np.abs(H - H.conj().T).max() > 1e-12 * scale:
        raise ValidationError("matrix is not Hermitian")
    energies, states = np.linalg.eigh(H)
    if check:
        residual = np.linalg.norm(H @ states - states * energies, axis=0).max()
        if residual > 1e-9 * max(np.linalg.norm(H, 2), 1e-300):
            raise ToolkitError(f"eigen-residual {residual:.3g} exceeds bound")
    return energies, states


def flux_to_frequency(flux_map: FluxMap, flux):
    return flux_map.frequency(flux)


def frequency_to_flux(flux_map: FluxMap, frequency):
    return flux_map.flux(frequency)


@dataclasses.dataclass(frozen=True)
class LabeledSpectrum:
    """Dressed levels at one coupler frequency.

    ``states[:, k]`` is the eigenvector (full tensor space) whose label is
    ``labels[k]`` and energy ``energies[k]``.  Entries are ordered by
    excitation manifold and ascending energy inside each manifold.
    ``overlaps[k]`` is the squared overlap with the reference vector the
    label was inherited from.
    """

    coupler_frequency: float
    labels: Tuple[Label, ...]
    energies: np.ndarray
    states: np.ndarray
    overlaps: np.ndarray
    manifold: np.ndarray

    def index(self, label: Label) -> int:
        try:
            return self._lookup[tuple(label)]
        except KeyError:
            raise KeyError(f"label {label} not present in this spectrum") from None

    @property
    def _lookup(self) -> Dict[Label, int]:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {lab: k for k, lab in enumerate(self.labels)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def energy(self, label: Label) -> float:
        return float(self.energies[self.index(label)])

    def state(self, label: Label) -> np.ndarray:
        return self.states[:, self.index(label)]

    def levels_in(self, n: int):
        """``(labels, energies)`` of the ``n``-excitation manifold."""
        sel = np.flatnonzero(self.manifold == n)
        return [self.labels[k] for k in sel], self.energies[sel]

    @property
    def chi12(self) -> float:
        return (
            self.energy(L101) + self.energy(L000) - self.energy(L100) - self.energy(L001)
        )


def _greedy_assign(overlap: np.ndarray, tie_tolerance: float, ref_labels):
    """Assign each reference (row) to one eigenvector (column).

    Pairs are taken in descending order of squared overlap.  Returns the
    column chosen for every row and the overlap it was chosen with.
    """
    n_ref, n_eig = overlap.shape
    order = np.argsort(-overlap, axis=None, kind="stable")
    row_done = np.zeros(n_ref, bool)
    col_done = np.zeros(n_eig, bool)
    choice = np.full(n_ref, -1)
    value = np.zeros(n_ref)
    remaining = n_ref
    for flat in order:
        r, c = divmod(int(flat), n_eig)
        if row_done[r] or col_done[c]:
            continue
        o = overlap[r, c]
        if o > tie_tolerance:
            rivals = [j for j in np.flatnonzero(~col_done) if j != c and abs(overlap[r, j] - o) < tie_tolerance]
            if rivals:
                raise DegenerateLabelError(ref_labels[r], [c, *rivals], [o, *overlap[r, rivals]])
            rivals = [i for i in np.flatnonzero(~row_done) if i != r and abs(overlap[i, c] - o) < tie_tolerance]
            if rivals:
                raise DegenerateLabelError(
                    ref_labels[r], [ref_labels[i] for i in (r, *rivals)], [o, *overlap[rivals, c]]
                )
        choice[r], value[r] = c, o
        row_done[r] = col_done[c] = True
        remaining -= 1
        if remaining == 0:
            break
    return choice, value


def diagonalize(params: DeviceParams, coupler_frequency: float, max_excitation: Optional[int] = None):
    """Block-diagonalise H(w_c) by excitation number.

    Returns ``(energies, states, manifold)`` with ``states`` in the full
    tensor space; within each manifold the energies are ascending.
    """
    h0, nc = hamiltonian_parts(params)
    energies, columns, manifold = [], [], []
    for n, idx in manifolds(params, max_excitation):
        block = h0[np.ix_(idx, idx)] + coupler_frequency * nc[np.ix_(idx, idx)]
        e, v = eigensolve(block)
        full = np.zeros((params.dimension, len(idx)))
        full[idx] = v
        energies.append(e)
        columns.append(full)
        manifold.append(np.full(len(idx), n))
    return np.concatenate(energies), np.hstack(columns), np.concatenate(manifold)


def label_states(
    params: DeviceParams,
    energies: np.ndarray,
    states: np.ndarray,
    manifold: np.ndarray,
    reference: Optional[LabeledSpectrum] = None,
    coupler_frequency: float = float("nan"),
    tie_tolerance: float = TIE_TOLERANCE,
) -> LabeledSpectrum:
    """Attach bare-state labels to eigenvectors.

    With ``reference=None`` the reference is the bare basis; otherwise the
    labelled states of a neighbouring sweep point are used, which makes the
    labels follow adiabatic branches.

    Raises:
        DegenerateLabelError: when two candidates tie within ``tie_tolerance``.
    """
    bare = basis_labels(params)
    labels: List[Label] = [None] * len(energies)
    overlaps = np.zeros(len(energies))
    for n in np.unique(manifold):
        cols = np.flatnonzero(manifold == n)
        if reference is None:
            rows = np.flatnonzero(np.array([sum(b) for b in bare]) == n)
            ref_labels = [bare[i] for i in rows]
            ov = np.abs(states[rows][:, cols].T).T ** 2
        else:
            ref_cols = np.flatnonzero(reference.manifold == n)
            ref_labels = [reference.labels[k] for k in ref_cols]
            ov = np.abs(reference.states[:, ref_cols].conj().T @ states[:, cols]) ** 2
        choice, value = _greedy_assign(ov, tie_tolerance, ref_labels)
        for r, c in enumerate(choice):
            labels[cols[c]] = ref_labels[r]
            overlaps[cols[c]] = value[r]
    return LabeledSpectrum(
        float(coupler_frequency), tuple(labels), energies, states, overlaps, manifold
    )


def _walk(idle: float, targets: np.ndarray, max_step: float):
    """Path from idle through every target, split into a descending and an
    ascending leg, with consecutive points at most ``max_step`` apart."""
    legs = []
    for leg in (np.sort(targets[targets < idle])[::-1], np.sort(targets[targets >= idle])):
        pts = [idle]
        for t in leg:
            gap = abs(t - pts[-1])
            if gap > max_step:
                n = int(np.ceil(gap / max_step))
                pts.extend(np.linspace(pts[-1], t, n + 1)[1:-1])
            pts.append(t)
        legs.append(np.array(pts))
    return legs


def track_spectra(
    params: DeviceParams,
    frequencies: Sequence[float],
    max_excitation: Optional[int] = 2,
    max_step: float = DEFAULT_PATH_STEP,
) -> List[LabeledSpectrum]:
    """Labelled spectra at ``frequencies`` with labels carried from the idle point."""
    targets = np.asarray(frequencies, dtype=float).ravel()
    if targets.size == 0:
        return []
    if np.any(targets <= 0):
        raise RangeError("coupler frequencies must be positive")
    idle = params.idle_frequency
    e, v, m = diagonalize(params, idle, max_excitation)
    start = label_states(params, e, v, m, None, idle)
    found: Dict[float, LabeledSpectrum] = {}
    for path in _walk(idle, targets, max_step):
        current = start
        if path[0] in set(targets):
            found[float(path[0])] = start
        for w in path[1:]:
            e, v, m = diagonalize(params, w, max_excitation)
            current = label_states(params, e, v, m, current, w)
            found[float(w)] = current
    return [found[float(t)] for t in targets]


def labeled_spectrum(params: DeviceParams, coupler_frequency: float, max_excitation=2, max_step=DEFAULT_PATH_STEP):
    return track_spectra(params, [coupler_frequency], max_excitation, max_step)[0]


def chi12_spectral(params: DeviceParams, coupler_frequency: float, max_step: float = DEFAULT_PATH_STEP) -> float:
    """Effective ZZ coupling E(101) + E(000) - E(100) - E(001) in GHz."""
    return labeled_spectrum(params, coupler_frequency, 2, max_step).chi12


def chi12_from_hamiltonian(params: DeviceParams, H: np.ndarray) -> float:
    """chi12 of an arbitrary Hamiltonian on the device space, labelled from the bare basis."""
    spec = label_states(params, *_blocks_of(params, H))
    return spec.chi12


def _blocks_of(params, H):
    energies, columns, manifold = [], [], []
    for n, idx in manifolds(params, 2):
        e, v = eigensolve(H[np.ix_(idx, idx)])
        full = np.zeros((params.dimension, len(idx)), dtype=v.dtype)
        full[idx] = v
        energies.append(e)
        columns.append(full)
        manifold.append(np.full(len(idx), n))
    return np.concatenate(energies), np.hstack(columns), np.concatenate(manifold)


@dataclasses.dataclass
class ChiSweep:
    """chi12 along a list of coupler frequencies.

    ``label_overlap`` is the squared overlap of the tracked |101> branch with
    the bare |101> state.  Plotting ``-chi12`` reproduces the usual
    convention for this device, where chi12 is negative.
    """

    frequencies: np.ndarray
    chi12: np.ndarray
    label_overlap: np.ndarray
    flags: List[str]

    @property
    def dynamic_range(self) -> float:
        mag = np.abs(self.chi12[np.isfinite(self.chi12)])
        return float(mag.max() / mag.min())

    def rows(self):
        for w, c, o, f in zip(self.frequencies, self.chi12, self.label_overlap, self.flags):
            yield (w, c, o, f)

    def to_csv(self, path, meta=None):
        from .io import write_csv

        return write_csv(
            path, ("coupler_frequency_GHz", "chi12_GHz", "label_overlap", "flags"), self.rows(), meta
        )


def _sweep_chunk(params, freqs, max_step):
    out = []
    for w in freqs:
        flag = ""
        try:
            try:
                spec = labeled_spectrum(params, w, 2, max_step)
            except DegenerateLabelError:
                spec = labeled_spectrum(params, w + DEGENERACY_SHIFT, 2, max_step)
                flag = "perturbed_1kHz"
            bare = spec.state(L101)[np.ravel_multi_index(L101, params.dims)]
            out.append((spec.chi12, float(abs(bare) ** 2), flag))
        except ToolkitError as exc:
            out.append((float("nan"), float("nan"), f"error:{type(exc).__name__}"))
    return out


def sweep_chi(
    params: DeviceParams,
    coupler_frequencies: Sequence[float],
    workers: int = 1,
    max_step: float = DEFAULT_PATH_STEP,
) -> ChiSweep:
    """chi12 at every grid point; point failures are flagged, not raised.

    Each point is tracked from the idle point independently, so the result
    does not depend on ``workers`` or on the order of the grid.
    """
    freqs = np.asarray(coupler_frequencies, dtype=float).ravel()
    chunks = np.array_split(np.arange(freqs.size), max(1, workers))
    chunks = [c for c in chunks if c.size]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _sweep_chunk(params, freqs[c], max_step), chunks))
    else:
        parts = [_sweep_chunk(params, freqs[c], max_step) for c in chunks]
    results = [r for part in parts for r in part]
    chi = np.array([r[0] for r in results])
    ov = np.array([r[1] for r in results])
    return ChiSweep(freqs, chi, ov, [r[2] for r in results])


# -- minimum gap -------------------------------------------------------------


def _gap_at(spec: LabeledSpectrum) -> Tuple[float, Label]:
    labels, energies = spec.levels_in(2)
    e101 = spec.energy(L101)
    best, partner = np.inf, None
    for lab, e in zip(labels, energies):
        if lab != L101 and abs(e - e101) < best:
            best, partner = abs(e - e101), lab
    return best, partner


def gap_profile(params: DeviceParams, frequencies: Sequence[float], max_step: float = 0.002):
    """Gap between the |101> branch and its nearest two-excitation neighbour."""
    spectra = track_spectra(params, frequencies, 2, max_step)
    gaps = np.array([_gap_at(s)[0] for s in spectra])
    return np.asarray(frequencies, dtype=float), gaps, spectra


def _trajectory_band(params: DeviceParams, trajectory) -> Tuple[float, float]:
    if hasattr(trajectory, "frequency_range"):
        return trajectory.frequency_range()
    w = np.asarray(trajectory, dtype=float)
    if w.size == 0:
        raise ValidationError("empty trajectory")
    return float(w.min()), float(w.max())


def min_gap_detail(params: DeviceParams, trajectory, coarse_step: float = 0.002):
    """``(gap, coupler_frequency, partner_label)`` at the smallest gap along a trajectory.

    A coarse grid (step ``coarse_step``) is refined by golden-section search
    around every interior local minimum.
    """
    lo, hi = _trajectory_band(params, trajectory)
    n = max(2, int(np.ceil((hi - lo) / coarse_step)) + 1)
    grid = np.linspace(lo, hi, n)
    _, gaps, spectra = gap_profile(params, grid, coarse_step)
    k = int(np.argmin(gaps))
    best = (float(gaps[k]), float(grid[k]), _gap_at(spectra[k])[1])
    # strict local minima only; a flat stretch is already exact on the grid
    minima = [i for i in range(1, n - 1) if gaps[i] < gaps[i - 1] and gaps[i] < gaps[i + 1]]
    for i in minima:
        anchor = spectra[i]

        def local_gap(w, anchor=anchor):
            e, v, m = diagonalize(params, w, 2)
            return _gap_at(label_states(params, e, v, m, anchor, w))[0]

        res = minimize_scalar(
            local_gap, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden", tol=1e-10
        )
        if res.fun < best[0]:
            e, v, m = diagonalize(params, res.x, 2)
            best = (float(res.fun), float(res.x), _gap_at(label_states(params, e, v, m, anchor, res.x))[1])
    return best


def min_gap(params: DeviceParams, trajectory, coarse_step: float = 0.002) -> float:
    """Smallest |101>-branch gap (GHz) within the two-excitation manifold.

    ``trajectory`` is either a pulse (anything with ``frequency_range()``) or
    an array of coupler frequencies visited continuously.
    """
    return min_gap_detail(params, trajectory, coarse_step)[0]


# -- crosstalk ---------------------------------------------------------------


def crosstalk_sensitivity(
    params: DeviceParams,
    aggressor_amplitude: float,
    fraction: float,
    victim_idle_flux: Optional[float] = None,
) -> float:
    """|chi12| change (GHz) when a fraction of a neighbour's flux pulse leaks onto an idling coupler."""
    fmap = params.flux_map
    phi0 = fmap.flux(params.idle_frequency) if victim_idle_flux is None else victim_idle_flux
    if fraction == 0:
        return 0.0
    w0 = float(fmap.frequency(phi0))
    w1 = float(fmap.frequency(phi0 + fraction * aggressor_amplitude))
    chi0, chi1 = (s.chi12 for s in track_spectra(params, [w0, w1], 2))
    return abs(chi1 - chi0)
