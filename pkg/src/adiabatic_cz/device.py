"""Three-mode circuit model: qubit 1, tunable coupler, qubit 2.

Every mode is a Duffing oscillator truncated to ``levels`` states, and the
modes exchange excitations through beam-splitter couplings.  All
frequencies are stored as linear frequencies in GHz (energy divided by h);
factors of 2*pi only appear inside the time integrators.

The tensor-product ordering is fixed to (Q1, C, Q2), so the basis state with
index ``(n1 * L + nc) * L + n2`` is the ket ``|n1, nc, n2>``.
"""
from __future__ import annotations

import dataclasses
import enum
import json
from functools import lru_cache, reduce
from pathlib import Path
from typing import Iterator, Mapping, Tuple

import numpy as np

from .errors import InvalidDimensionError, RangeError, ValidationError

Label = Tuple[int, int, int]


class ModeLabel(str, enum.Enum):
    Q1 = "Q1"
    COUPLER = "Coupler"
    Q2 = "Q2"


@dataclasses.dataclass(frozen=True)
class ModeSpec:
    """One anharmonic mode.

    Args:
        label: which of the three circuit elements this is.
        frequency: bare 0-1 transition frequency in GHz.
        anharmonicity: alpha in GHz, negative for transmons.
        levels: truncation dimension, at least 3 so that the doubly excited
            states that generate the ZZ interaction are present.
    """

    label: ModeLabel
    frequency: float
    anharmonicity: float
    levels: int = 5

    def __post_init__(self):
        object.__setattr__(self, "label", ModeLabel(self.label))
        if int(self.levels) != self.levels or self.levels < 3:
            raise InvalidDimensionError(f"{self.label.value}: levels must be an integer >= 3, got {self.levels}")
        if not self.frequency > 0:
            raise ValidationError(f"{self.label.value}: frequency must be positive")
        if not self.anharmonicity < 0:
            raise ValidationError(f"{self.label.value}: anharmonicity must be negative")


@dataclasses.dataclass(frozen=True)
class CouplingGraph:
    """Exchange couplings g/2pi in GHz."""

    g12: float
    g1c: float
    g2c: float

    def __post_init__(self):
        for name in ("g12", "g1c", "g2c"):
            if getattr(self, name) < 0:
                raise ValidationError(f"coupling {name} must be non-negative")

    def scaled(self, factor: float) -> "CouplingGraph":
        return CouplingGraph(self.g12 * factor, self.g1c * factor, self.g2c * factor)


@dataclasses.dataclass(frozen=True)
class FluxMap:
    r"""Coupler frequency versus flux for a (possibly asymmetric) SQUID transmon.

    .. math::

        \omega_c(\Phi) = (\omega_{max} + |\alpha|)
            \left(\cos^2\pi\Phi + d^2 \sin^2\pi\Phi\right)^{1/4} - |\alpha|

    Flux is in units of the flux quantum.  The map is monotonically
    decreasing on ``[0, 0.5]`` and that branch is the one inverted.
    """

    omega_max: float = 6.74
    anharmonicity: float = -0.370
    asymmetry: float = 0.0

    def __post_init__(self):
        if not self.omega_max > 0:
            raise ValidationError("omega_max must be positive")
        if not 0 <= self.asymmetry < 1:
            raise ValidationError("asymmetry must lie in [0, 1)")

    @property
    def _plasma_scale(self) -> float:
        return self.omega_max + abs(self.anharmonicity)

    @property
    def omega_min(self) -> float:
        """Frequency at half a flux quantum (may be <= 0 for a symmetric SQUID)."""
        return self._plasma_scale * np.sqrt(self.asymmetry) - abs(self.anharmonicity)

    def frequency(self, flux):
        c = np.cos(np.pi * np.asarray(flux, dtype=float))
        s2 = 1.0 - c * c
        q = c * c + self.asymmetry**2 * s2
        return self._plasma_scale * q**0.25 - abs(self.anharmonicity)

    def derivative(self, flux):
        """d omega_c / d Phi in GHz per flux quantum."""
        phi = np.asarray(flux, dtype=float)
        c, s = np.cos(np.pi * phi), np.sin(np.pi * phi)
        q = c * c + self.asymmetry**2 * s * s
        dq = -2 * np.pi * c * s * (1 - self.asymmetry**2)
        return self._plasma_scale * 0.25 * q ** (-0.75) * dq

    def flux(self, frequency):
        """Inverse map on the branch ``[0, 0.5]``."""
        w = np.asarray(frequency, dtype=float)
        lo = max(self.omega_min, 0.0)
        if np.any(w > self.omega_max * (1 + 1e-12)) or np.any(w <= lo):
            raise RangeError(
                f"frequency outside achievable band ({lo:.6g}, {self.omega_max:.6g}] GHz"
            )
        q = ((w + abs(self.anharmonicity)) / self._plasma_scale) ** 4
        d2 = self.asymmetry**2
        cos2 = np.clip((q - d2) / (1 - d2), 0.0, 1.0)
        return np.arccos(np.sqrt(cos2)) / np.pi


def nominal_q1() -> ModeSpec:
    return ModeSpec(ModeLabel.Q1, 5.27, -0.210)


def nominal_coupler() -> ModeSpec:
    return ModeSpec(ModeLabel.COUPLER, 6.74, -0.370)


def nominal_q2() -> ModeSpec:
    return ModeSpec(ModeLabel.Q2, 4.62, -0.240)


@dataclasses.dataclass(frozen=True)
class DeviceParams:
    """Full device description.

    ``coupler.frequency`` is the idle coupler frequency.  The default instance
    carries the published device values.
    """

    q1: ModeSpec = dataclasses.field(default_factory=nominal_q1)
    coupler: ModeSpec = dataclasses.field(default_factory=nominal_coupler)
    q2: ModeSpec = dataclasses.field(default_factory=nominal_q2)
    couplings: CouplingGraph = dataclasses.field(
        default_factory=lambda: CouplingGraph(g12=0.012, g1c=0.122, g2c=0.105)
    )
    flux_map: FluxMap = dataclasses.field(default_factory=FluxMap)

    def __post_init__(self):
        labels = [self.q1.label, self.coupler.label, self.q2.label]
        if labels != [ModeLabel.Q1, ModeLabel.COUPLER, ModeLabel.Q2]:
            raise ValidationError(f"modes must be labelled (Q1, Coupler, Q2), got {labels}")

    @property
    def modes(self) -> Tuple[ModeSpec, ModeSpec, ModeSpec]:
        return (self.q1, self.coupler, self.q2)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(m.levels for m in self.modes)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    @property
    def idle_frequency(self) -> float:
        return self.coupler.frequency

    def with_levels(self, levels: int) -> "DeviceParams":
        return dataclasses.replace(
            self,
            q1=dataclasses.replace(self.q1, levels=levels),
            coupler=dataclasses.replace(self.coupler, levels=levels),
            q2=dataclasses.replace(self.q2, levels=levels),
        )

    def with_couplings(self, **kwargs) -> "DeviceParams":
        return dataclasses.replace(self, couplings=dataclasses.replace(self.couplings, **kwargs))

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        def mode(m: ModeSpec):
            return {
                "frequency_ghz": m.frequency,
                "anharmonicity_ghz": m.anharmonicity,
                "levels": m.levels,
            }

        return {
            "q1": mode(self.q1),
            "coupler": mode(self.coupler),
            "q2": mode(self.q2),
            "couplings": {
                "g12_ghz": self.couplings.g12,
                "g1c_ghz": self.couplings.g1c,
                "g2c_ghz": self.couplings.g2c,
            },
            "flux_map": {
                "omega_max_ghz": self.flux_map.omega_max,
                "anharmonicity_ghz": self.flux_map.anharmonicity,
                "asymmetry": self.flux_map.asymmetry,
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DeviceParams":
        default = cls()
        known = default.to_dict()
        if not isinstance(data, Mapping):
            raise ValidationError("device document must be an object")
        for key, block in data.items():
            if key not in known:
                raise ValidationError(f"unknown device key {key!r}")
            if not isinstance(block, Mapping):
                raise ValidationError(f"device key {key!r} must be an object")
            extra = set(block) - set(known[key])
            if extra:
                raise ValidationError(f"unknown keys in device {key!r}: {sorted(extra)}")
        try:
            def mode(key, base: ModeSpec):
                block = data.get(key, {})
                return ModeSpec(
                    base.label,
                    float(block.get("frequency_ghz", base.frequency)),
                    float(block.get("anharmonicity_ghz", base.anharmonicity)),
                    int(block.get("levels", base.levels)),
                )

            c = data.get("couplings", {})
            couplings = CouplingGraph(
                float(c.get("g12_ghz", default.couplings.g12)),
                float(c.get("g1c_ghz", default.couplings.g1c)),
                float(c.get("g2c_ghz", default.couplings.g2c)),
            )
            f = data.get("flux_map", {})
            q1, coupler, q2 = mode("q1", default.q1), mode("coupler", default.coupler), mode("q2", default.q2)
            flux_map = FluxMap(
                float(f.get("omega_max_ghz", coupler.frequency)),
                float(f.get("anharmonicity_ghz", coupler.anharmonicity)),
                float(f.get("asymmetry", 0.0)),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed device document: {exc}") from exc
        return cls(q1, coupler, q2, couplings, flux_map)

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def annihilation_operator(levels: int) -> np.ndarray:
    """Truncated lowering operator with ``a[n, n+1] = sqrt(n+1)``."""
    if int(levels) != levels or levels < 2:
        raise InvalidDimensionError(f"levels must be an integer >= 2, got {levels}")
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1)


@lru_cache(maxsize=32)
def _mode_operators(dims: Tuple[int, int, int]):
    ops = []
    for i, d in enumerate(dims):
        factors = [annihilation_operator(d) if k == i else np.eye(dims[k]) for k in range(3)]
        a = reduce(np.kron, factors)
        a.setflags(write=False)
        ops.append(a)
    return tuple(ops)


def mode_operators(params: DeviceParams):
    """Lowering operators (a1, ac, a2) on the full tensor space (read-only)."""
    return _mode_operators(params.dims)


@lru_cache(maxsize=32)
def _labels(dims):
    return tuple(tuple(int(v) for v in idx) for idx in np.ndindex(*dims))


def basis_labels(params: DeviceParams):
    """Bare-state labels ``(n1, nc, n2)`` in basis order."""
    return _labels(params.dims)


def state_index(params: DeviceParams, label: Label) -> int:
    return int(np.ravel_multi_index(label, params.dims))


def excitation_numbers(params: DeviceParams) -> np.ndarray:
    return np.array([sum(lab) for lab in basis_labels(params)])


def manifolds(params: DeviceParams, max_excitation=None) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(N, indices)`` for each total-excitation block, ascending in N."""
    n = excitation_numbers(params)
    top = n.max() if max_excitation is None else min(max_excitation, n.max())
    for k in range(top + 1):
        yield k, np.flatnonzero(n == k)


@lru_cache(maxsize=64)
def hamiltonian_parts(params: DeviceParams):
    """Return ``(H_static, n_c)`` with ``H(w_c) = H_static + w_c * n_c`` (GHz).

    Both arrays are cached and read-only.
    """
    a1, ac, a2 = mode_operators(params)
    h = np.zeros((params.dimension,) * 2)
    for a, mode in zip((a1, ac, a2), params.modes):
        n = a.T @ a
        if mode.label is not ModeLabel.COUPLER:
            h += mode.frequency * n
        h += 0.5 * mode.anharmonicity * (n @ n - n)
    g = params.couplings
    for (a, b), gij in (((a1, ac), g.g1c), ((ac, a2), g.g2c), ((a1, a2), g.g12)):
        hop = a.T @ b
        h += gij * (hop + hop.T)
    nc = ac.T @ ac
    h.setflags(write=False)
    nc.setflags(write=False)
    return h, nc


def build_hamiltonian(params: DeviceParams, coupler_frequency: float) -> np.ndarray:
    """H/h in GHz on the (Q1, C, Q2) tensor space with the coupler at ``coupler_frequency``."""
    if not coupler_frequency > 0:
        raise ValidationError("coupler_frequency must be positive")
    h0, nc = hamiltonian_parts(params)
    return h0 + coupler_frequency * nc


def number_operator_total(params: DeviceParams) -> np.ndarray:
    return np.diag(excitation_numbers(params).astype(float))
