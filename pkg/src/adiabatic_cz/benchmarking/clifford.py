"""Two-qubit Clifford group as GF(2) tableaux with phases.

A Pauli is stored as bits ``v = (x1, x2, z1, z2)`` and a phase exponent
``e`` (mod 4), meaning ``i^e X1^x1 X2^x2 Z1^z1 Z2^z2``.  A Clifford is
stored as the images of the generators X1, X2, Z1, Z2 under conjugation.

Group elements are enumerated once through the class construction of
the standard CZ-based compilation: a layer of single-qubit Cliffords
followed by one of 20 two-qubit tails (identity, SWAP-like with three CZs,
nine CNOT-like and nine iSWAP-like tails).  That gives 24 * 24 * 20 = 11520
distinct elements and also supplies each element's gate decomposition.
"""
from __future__ import annotations

import dataclasses
from functools import lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np

GROUP_ORDER = 11520
N_TAILS = 20

# physical single-qubit gates, named as rotations about x/y
_I2 = np.eye(2, dtype=complex)
_PX = np.array([[0, 1], [1, 0]], dtype=complex)
_PY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _rot(axis, angle):
    return np.cos(angle / 2) * _I2 - 1j * np.sin(angle / 2) * axis


GATES: Dict[str, np.ndarray] = {
    "X": _rot(_PX, np.pi),
    "Y": _rot(_PY, np.pi),
    "X/2": _rot(_PX, np.pi / 2),
    "-X/2": _rot(_PX, -np.pi / 2),
    "Y/2": _rot(_PY, np.pi / 2),
    "-Y/2": _rot(_PY, -np.pi / 2),
}

# the 24 single-qubit Cliffords, gates listed in time order
C1: Tuple[Tuple[str, ...], ...] = (
    (), ("X",), ("Y",), ("Y", "X"),
    ("X/2", "Y/2"), ("X/2", "-Y/2"), ("-X/2", "Y/2"), ("-X/2", "-Y/2"),
    ("Y/2", "X/2"), ("Y/2", "-X/2"), ("-Y/2", "X/2"), ("-Y/2", "-X/2"),
    ("X/2",), ("-X/2",), ("Y/2",), ("-Y/2",),
    ("-X/2", "Y/2", "X/2"), ("-X/2", "-Y/2", "X/2"),
    ("X", "Y/2"), ("X", "-Y/2"), ("Y", "X/2"), ("Y", "-X/2"),
    ("X/2", "Y/2", "X/2"), ("-X/2", "Y/2", "-X/2"),
)
S1 = ((), ("Y/2", "X/2"), ("-X/2", "-Y/2"))
S1_X = (("X/2",), ("X/2", "Y/2", "X/2"), ("-Y/2",))
S1_Y = (("Y/2",), ("-X/2", "-Y/2", "X/2"), ("Y", "X/2"))

# decomposition ops: ("CZ",) or (qubit, gate_name); qubit 0 is Q1
Op = Tuple


def _single(qubit: int, gates: Sequence[str]):
    return tuple((qubit, g) for g in gates)


def tail_ops(k: int) -> Tuple[Op, ...]:
    """Two-qubit part of class index ``k`` in 0..19."""
    cz = (("CZ",),)
    if k == 0:
        return ()
    if k == 1:
        return (
            cz + ((0, "-Y/2"), (1, "Y/2")) + cz + ((0, "Y/2"), (1, "-Y/2")) + cz + ((1, "Y/2"),)
        )
    if k <= 10:
        a, b = divmod(k - 2, 3)
        return cz + _single(0, S1[a]) + _single(1, S1_Y[b])
    a, b = divmod(k - 11, 3)
    return cz + ((0, "Y/2"), (1, "-X/2")) + cz + _single(0, S1_Y[a]) + _single(1, S1_X[b])


def decomposition(index: int) -> Tuple[Op, ...]:
    i0, rest = divmod(index, 24 * N_TAILS)
    i1, k = divmod(rest, N_TAILS)
    return _single(0, C1[i0]) + _single(1, C1[i1]) + tail_ops(k)


def class_of(index: int) -> str:
    k = index % N_TAILS
    return "single_qubit" if k == 0 else "swap_like" if k == 1 else "cnot_like" if k <= 10 else "iswap_like"


CZ_MATRIX = np.diag([1, 1, 1, -1]).astype(complex)


def op_unitary(op: Op) -> np.ndarray:
    if op[0] == "CZ":
        return CZ_MATRIX
    q, name = op
    return np.kron(GATES[name], _I2) if q == 0 else np.kron(_I2, GATES[name])


def ops_unitary(ops: Sequence[Op]) -> np.ndarray:
    U = np.eye(4, dtype=complex)
    for op in ops:
        U = op_unitary(op) @ U
    return U


# -- Pauli algebra ---------------------------------------------------------------

_X = [np.kron(_PX, _I2), np.kron(_I2, _PX)]
_Z = [np.kron(_PZ, _I2), np.kron(_I2, _PZ)]
GENERATORS = (_X[0], _X[1], _Z[0], _Z[1])


def pauli_matrix(v, e: int = 0) -> np.ndarray:
    M = (1j) ** (e % 4) * np.eye(4, dtype=complex)
    for q in range(2):
        if v[q]:
            M = M @ _X[q]
    for q in range(2):
        if v[2 + q]:
            M = M @ _Z[q]
    return M


_ALL_BITS = np.array([[(k >> j) & 1 for j in range(4)] for k in range(16)], dtype=np.uint8)
_ALL_PAULIS = np.stack([pauli_matrix(b) for b in _ALL_BITS])


def pauli_product(v1, e1, v2, e2):
    """``(i^e1 P_v1)(i^e2 P_v2)`` as ``(v, e)``."""
    v1 = np.asarray(v1, dtype=np.uint8)
    v2 = np.asarray(v2, dtype=np.uint8)
    e = (e1 + e2 + 2 * int(v1[2:] @ v2[:2])) % 4
    return v1 ^ v2, e


def _decompose_paulis(M: np.ndarray):
    """Write Pauli-proportional matrices ``M[..., 4, 4]`` as ``(bits, e)``."""
    t = np.einsum("kji,...ji->...k", _ALL_PAULIS.conj(), M) / 4
    k = np.abs(t).argmax(axis=-1)
    coef = np.take_along_axis(t, k[..., None], axis=-1)[..., 0]
    if np.any(np.abs(np.abs(coef) - 1) > 1e-8):
        raise ValueError("matrix is not a Pauli operator up to phase")
    e = np.mod(np.round(np.angle(coef) / (np.pi / 2)), 4).astype(np.int64)
    return _ALL_BITS[k], e


# -- tableau ---------------------------------------------------------------------


def _gf2_inverse(S: np.ndarray) -> np.ndarray:
    n = S.shape[0]
    A = np.concatenate([S.copy() % 2, np.eye(n, dtype=np.uint8)], axis=1)
    for c in range(n):
        pivot = next(r for r in range(c, n) if A[r, c])
        A[[c, pivot]] = A[[pivot, c]]
        for r in range(n):
            if r != c and A[r, c]:
                A[r] ^= A[c]
    return A[:, n:]


@dataclasses.dataclass(frozen=True, eq=False)
class CliffordElement:
    """Clifford ``C`` given by ``C g C^dag`` for g = X1, X2, Z1, Z2.

    ``images[g]`` are the Pauli bits of the image and ``phases[g]`` its
    phase exponent.  Equality and hashing use the tableau only, so
    elements differing by a global phase compare equal.
    """

    images: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "images", np.asarray(self.images, dtype=np.uint8).reshape(4, 4) % 2)
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=np.int64).reshape(4) % 4)
        self.images.setflags(write=False)
        self.phases.setflags(write=False)

    @classmethod
    def identity(cls) -> "CliffordElement":
        return cls(np.eye(4, dtype=np.uint8), np.zeros(4))

    @classmethod
    def from_unitary(cls, U: np.ndarray) -> "CliffordElement":
        U = np.asarray(U, dtype=complex)
        conj = np.stack([U @ g @ U.conj().T for g in GENERATORS])
        bits, e = _decompose_paulis(conj)
        return cls(bits, e)

    @classmethod
    def from_index(cls, index: int) -> "CliffordElement":
        table = clifford_table()
        return cls(table.images[index], table.phases[index])

    @property
    def key(self) -> bytes:
        return self.images.tobytes() + self.phases.astype(np.uint8).tobytes()

    def __eq__(self, other):
        return isinstance(other, CliffordElement) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def apply(self, v, e: int = 0):
        """Conjugate the Pauli ``i^e P_v``."""
        out_v, out_e = np.zeros(4, dtype=np.uint8), e % 4
        for g in range(4):
            if v[g]:
                out_v, out_e = pauli_product(out_v, out_e, self.images[g], self.phases[g])
        return out_v, out_e

    def __matmul__(self, other: "CliffordElement") -> "CliffordElement":
        """Operator product: ``(self @ other)`` applies ``other`` first."""
        imgs, phs = [], []
        for g in range(4):
            v, e = self.apply(other.images[g], other.phases[g])
            imgs.append(v)
            phs.append(e)
        return CliffordElement(np.array(imgs), np.array(phs))

    def inverse(self) -> "CliffordElement":
        inv_bits = _gf2_inverse(self.images)  # rows: preimages of generators
        phs = []
        for g in range(4):
            _, e = self.apply(inv_bits[g], 0)
            phs.append(-e)
        return CliffordElement(inv_bits, np.array(phs))

    def is_identity(self) -> bool:
        return self == CliffordElement.identity()

    @property
    def index(self) -> int:
        return clifford_table().lookup[self.key]

    @property
    def decomposition(self) -> Tuple[Op, ...]:
        return decomposition(self.index)

    def unitary(self) -> np.ndarray:
        return ops_unitary(self.decomposition)

    @property
    def cz_count(self) -> int:
        return sum(op[0] == "CZ" for op in self.decomposition)

    @property
    def single_qubit_gate_count(self) -> int:
        return sum(op[0] != "CZ" for op in self.decomposition)


@dataclasses.dataclass(frozen=True)
class CliffordTable:
    images: np.ndarray  # (11520, 4, 4)
    phases: np.ndarray  # (11520, 4)
    lookup: Dict[bytes, int]


@lru_cache(maxsize=1)
def clifford_table() -> CliffordTable:
    """Tableaux of all group elements, built from their decompositions."""
    c1 = np.stack([_c1_unitary(g) for g in C1])
    layers = np.einsum("aij,bkl->abikjl", c1, c1).reshape(24 * 24, 4, 4)
    tails = np.stack([ops_unitary(tail_ops(k)) for k in range(N_TAILS)])
    U = np.einsum("kij,ajl->akil", tails, layers).reshape(GROUP_ORDER, 4, 4)
    conj = np.einsum("nij,gjk,nlk->ngil", U, np.stack(GENERATORS), U.conj())
    bits, e = _decompose_paulis(conj)
    images = bits.astype(np.uint8)
    phases = e.astype(np.int64)
    lookup = {}
    for n in range(GROUP_ORDER):
        lookup[images[n].tobytes() + phases[n].astype(np.uint8).tobytes()] = n
    images.setflags(write=False)
    phases.setflags(write=False)
    return CliffordTable(images, phases, lookup)


def _c1_unitary(gates: Sequence[str]) -> np.ndarray:
    U = _I2.copy()
    for g in gates:
        U = GATES[g] @ U
    return U


def sample_clifford(rng: np.random.Generator) -> CliffordElement:
    """Uniform random element of the two-qubit Clifford group."""
    return CliffordElement.from_index(int(rng.integers(GROUP_ORDER)))


def inverse_clifford(elements: Sequence[CliffordElement]) -> CliffordElement:
    """Recovery element undoing the time-ordered product of ``elements``."""
    total = CliffordElement.identity()
    for el in elements:
        total = el @ total
    return total.inverse()


CZ_ELEMENT = CliffordElement.from_unitary(CZ_MATRIX)


def equal_up_to_phase(A: np.ndarray, B: np.ndarray, atol: float = 1e-9) -> bool:
    k = np.unravel_index(np.abs(B).argmax(), B.shape)
    if abs(A[k]) < 1e-12:
        return False
    phase = A[k] / B[k]
    return abs(abs(phase) - 1) < atol and np.allclose(A, phase * B, atol=atol)


def gate_count_means() -> Tuple[float, float]:
    """Mean (CZ, single-qubit physical gate) counts per group element."""
    cz = one = 0
    for k in range(N_TAILS):
        tail = tail_ops(k)
        cz += sum(op[0] == "CZ" for op in tail) * 576
        one += sum(op[0] != "CZ" for op in tail) * 576
    one += 2 * N_TAILS * 24 * sum(len(g) for g in C1)
    return cz / GROUP_ORDER, one / GROUP_ORDER
