from itertools import product

import numpy as np
import pytest

from radqec.surface_code import (
    LOGICAL_X_SUPPORT,
    LOGICAL_Z_SUPPORT,
    N_QUBITS,
    build_cycle_circuit,
    build_layout,
    circuit_from_text,
    parity_matrices,
    qubit_labels,
)


def _rowspace(H):
    rows = set()
    for coeffs in product((0, 1), repeat=H.shape[0]):
        rows.add(tuple((np.array(coeffs) @ H) % 2))
    return rows


def _min_logical_weight(H_detect, H_other):
    """Smallest weight of a vector commuting with ``H_detect`` that is not a stabilizer."""
    stabs = _rowspace(H_other)
    best = None
    for bits in product((0, 1), repeat=9):
        v = np.array(bits)
        if np.any((H_detect @ v) % 2) or tuple(v) in stabs:
            continue
        w = int(v.sum())
        best = w if best is None else min(best, w)
    return best


def test_checks_commute():
    pm = parity_matrices()
    assert not np.any((pm.H_Z.astype(int) @ pm.H_X.T.astype(int)) % 2)
    assert pm.commute()


def test_minimum_logical_weight_is_three():
    pm = parity_matrices()
    assert _min_logical_weight(pm.H_Z, pm.H_X) == 3  # X-type logicals
    assert _min_logical_weight(pm.H_X, pm.H_Z) == 3  # Z-type logicals


def test_logical_supports_are_logicals():
    pm = parity_matrices()
    zl = np.zeros(9, int)
    zl[list(LOGICAL_Z_SUPPORT)] = 1
    xl = np.zeros(9, int)
    xl[list(LOGICAL_X_SUPPORT)] = 1
    assert not np.any((pm.H_X @ zl) % 2) and not np.any((pm.H_Z @ xl) % 2)
    assert zl @ xl % 2 == 1


def test_checks_have_full_rank():
    pm = parity_matrices()
    assert len(_rowspace(pm.H_Z)) == 16 and len(_rowspace(pm.H_X)) == 16


def test_circuit_text_round_trip(circuit):
    gates = circuit_from_text(circuit.to_text())
    assert tuple(gates) == circuit.gates


def test_circuit_fits_in_cycle(circuit):
    assert circuit.span_ns <= circuit.cycle_ns
    assert circuit.busy_ns().shape == (N_QUBITS,)


def test_circuit_measures_the_checks(circuit):
    pm = parity_matrices()
    for anc, row in zip(circuit.z_measure_order, pm.H_Z):
        data = sorted(q for g in circuit.gates if g.name == "CX" and anc in g.qubits for q in g.qubits if q != anc)
        assert data == sorted(np.flatnonzero(row).tolist())


def test_no_qubit_double_booked(circuit):
    for q in range(N_QUBITS):
        spans = sorted((g.start_ns, g.end_ns) for g in circuit.gates if q in g.qubits)
        assert all(a[1] <= b[0] + 1e-9 for a, b in zip(spans, spans[1:]))


def test_layout_scaling():
    a = build_layout(1.0)
    b = build_layout(2.0)
    assert a.positions.shape == (N_QUBITS, 2)
    assert b.pitch == pytest.approx(2 * a.pitch)
    assert len(qubit_labels()) == N_QUBITS
    with pytest.raises(ValueError):
        build_layout(0.0)


def test_circuit_digest_is_stable():
    assert build_cycle_circuit().digest() == build_cycle_circuit().digest()
