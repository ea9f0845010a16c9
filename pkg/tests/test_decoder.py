import numpy as np
import pytest

from radqec.decoder import (
    BatchDecoder,
    DetectorGraph,
    build_detector_graph,
    circuit_cell,
    decode_graph_with_dp,
    decode_mwpm,
    enumerate_single_faults,
    final_layer,
    logical_verdict,
    phenomenological_cell,
    syndrome_differences,
)
from radqec.surface_code import LOGICAL_Z_SUPPORT, parity_matrices

from oracles import brute_force_pairing, nx_distances, single_fault_record


@pytest.mark.parametrize("n_cycles", [1, 3])
def test_every_single_fault_is_corrected(n_cycles):
    rec = single_fault_record(n_cycles)
    corrected, raw = rec.decode()
    assert raw.any(), "some single faults must flip the raw logical readout"
    assert not corrected.any()


def test_single_faults_corrected_by_matching():
    rec = single_fault_record(2)
    graph = build_detector_graph(3)
    D = rec.detector_layers()
    F = rec.final_layers()[:, 0]
    raw = rec.raw_logical()[:, 0]
    for s in range(rec.shots):
        det = np.array([[(v >> j) & 1 for j in range(4)] for v in (*D[s], F[s])])
        res = decode_mwpm(graph, det)
        assert raw[s] ^ logical_verdict(res.correction_bits()) == 0


def test_single_faults_fire_at_most_two_detectors():
    for sig in enumerate_single_faults(n_cycles=2):
        assert len(sig.detectors) <= 2


def test_blossom_matches_brute_force():
    rng = np.random.default_rng(2024)
    cell = circuit_cell()
    for trial in range(500):
        n_layers = int(rng.integers(1, 6))
        base = build_detector_graph(n_layers, cell)
        # random positive weights make ties unlikely and exercise the metric
        edges = [(u, v, float(rng.uniform(0.5, 2.0)), m) for u, v, _, m in base.edges]
        graph = DetectorGraph(cell, n_layers, edges)
        k = int(rng.integers(1, 9))
        k = min(k, graph.boundary)
        fired = rng.choice(graph.boundary, size=k, replace=False)
        det = np.zeros(graph.boundary, np.uint8)
        det[fired] = 1
        res = decode_mwpm(graph, det)
        dist = nx_distances(graph)
        oracle = brute_force_pairing(tuple(int(f) for f in fired), dist, graph.boundary)
        assert res.total_weight == pytest.approx(oracle, rel=1e-12), f"trial {trial}"


def test_matching_correction_clears_syndrome():
    rng = np.random.default_rng(9)
    graph = build_detector_graph(1, phenomenological_cell("Z"))
    H = parity_matrices().H_Z
    for _ in range(50):
        syn = rng.integers(0, 2, 4).astype(np.uint8)
        res = decode_mwpm(graph, syn[None])
        assert np.array_equal((H @ res.correction_bits()) % 2, syn)


def test_dp_agrees_with_blossom():
    # both are minimum-weight decoders; on exact ties they may pick different
    # logical classes, so the invariant is the optimal weight
    rng = np.random.default_rng(77)
    cell = circuit_cell()
    for _ in range(300):
        n_layers = int(rng.integers(1, 7))
        graph = build_detector_graph(n_layers, cell)
        det = (rng.random((n_layers, 4)) < 0.15).astype(np.uint8)
        res = decode_mwpm(graph, det)
        _, wt = decode_graph_with_dp(graph, det)
        assert wt == pytest.approx(res.total_weight)


def test_batch_decoder_nested_terminals_match_separate_runs():
    rng = np.random.default_rng(4)
    dec = BatchDecoder()
    D = (rng.random((200, 6)) < 0.3) * rng.integers(0, 16, (200, 6))
    D = D.astype(np.uint8)
    F = rng.integers(0, 16, (200, 3)).astype(np.uint8)
    terms = [2, 4, 6]
    par, wt = dec.decode(D, F, terms)
    for i, n in enumerate(terms):
        p1, w1 = dec.decode(D[:, :n], F[:, i : i + 1], [n])
        assert np.array_equal(p1[:, 0], par[:, i])
        np.testing.assert_allclose(w1[:, 0], wt[:, i])


def test_batch_decoder_rejects_bad_shapes():
    dec = BatchDecoder()
    with pytest.raises(ValueError):
        dec.decode(np.zeros((3, 2), np.uint8), np.zeros((3, 1), np.uint8), [3])
    with pytest.raises(ValueError):
        dec.decode(np.zeros((3, 2), np.uint8), np.zeros((2, 1), np.uint8), [1])


def test_syndrome_differences_and_final_layer():
    s = np.array([[1, 0], [1, 1], [0, 1]], np.uint8)
    np.testing.assert_array_equal(syndrome_differences(s), [[1, 0], [0, 1], [1, 0]])
    H = parity_matrices().H_Z
    data = np.zeros(9, np.uint8)
    data[0] = 1
    np.testing.assert_array_equal(final_layer(data, np.zeros(4, np.uint8)), H[:, 0])


def test_logical_verdict():
    bits = np.zeros(9, np.uint8)
    bits[list(LOGICAL_Z_SUPPORT)[0]] = 1
    assert logical_verdict(bits) == 1
    assert logical_verdict(bits, encoded=1) == 0
