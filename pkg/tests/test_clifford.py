from collections import Counter

import numpy as np
import pytest

from adiabatic_cz.benchmarking.clifford import (
    CZ_ELEMENT,
    CZ_MATRIX,
    GROUP_ORDER,
    CliffordElement,
    class_of,
    clifford_table,
    equal_up_to_phase,
    gate_count_means,
    inverse_clifford,
    sample_clifford,
)


def test_group_order_and_classes():
    assert GROUP_ORDER == 11520
    counts = Counter(class_of(i) for i in range(GROUP_ORDER))
    assert sorted(counts.values()) == [576, 576, 5184, 5184]


def test_table_entries_are_distinct():
    table = clifford_table()
    assert len(table.lookup) == GROUP_ORDER


def test_identity_uses_no_cz():
    e = CliffordElement.identity()
    assert e.cz_count == 0
    assert equal_up_to_phase(e.unitary(), np.eye(4))


def test_cz_element_matches_matrix():
    assert equal_up_to_phase(CZ_ELEMENT.unitary(), CZ_MATRIX)
    assert CZ_ELEMENT @ CZ_ELEMENT == CliffordElement.identity()


def test_gate_count_means():
    cz, one = gate_count_means()
    assert cz == pytest.approx(1.5, abs=1e-12)
    assert one == pytest.approx(7.967, abs=1e-3)


def test_decomposition_reproduces_element():
    for i in range(0, GROUP_ORDER, 97):
        e = CliffordElement.from_index(i)
        assert CliffordElement.from_unitary(e.unitary()) == e
        assert e.index == i


def test_composition_and_inverse(rng):
    for _ in range(200):
        a, b = sample_clifford(rng), sample_clifford(rng)
        assert equal_up_to_phase((a @ b).unitary(), a.unitary() @ b.unitary())
        assert (a @ a.inverse()).is_identity()
        assert equal_up_to_phase(a.inverse().unitary() @ a.unitary(), np.eye(4))


def test_recovery_undoes_sequence(rng):
    els = [sample_clifford(rng) for _ in range(25)]
    U = np.eye(4)
    for e in els:
        U = e.unitary() @ U
    assert equal_up_to_phase(inverse_clifford(els).unitary() @ U, np.eye(4))


def test_sampling_is_roughly_uniform_over_classes(rng):
    counts = Counter(class_of(sample_clifford(rng).index) for _ in range(4000))
    freqs = sorted(v / 4000 for v in counts.values())
    assert freqs == pytest.approx([0.05, 0.05, 0.45, 0.45], abs=0.03)
