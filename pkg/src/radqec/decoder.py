"""Matching decoder over syndrome differences.

Detectors live on ``(layer, stabilizer)`` sites.  Layer ``k < n_cycles`` is the
difference between consecutive syndrome rounds; the optional final layer
compares the stabilizers recomputed from the Z-basis data readout with the last
measured round.  Node ``k*n_stab + j`` is detector ``(k, j)``; the last node is
the virtual boundary.

Two decoders share the graph:

* :func:`decode_mwpm` pairs fired detectors with a blossom matching on the
  shortest-path metric (reference implementation, one shot at a time).
* :class:`BatchDecoder` finds the same minimum-weight correction class with a
  dynamic program over the layered graph (the graph is a strip four detectors
  wide), compiled with numba and run over many shots and terminal lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import frames
from .surface_code import (
    DATA_QUBITS,
    LOGICAL_X_SUPPORT,
    LOGICAL_Z_SUPPORT,
    StabilizerCircuit,
    build_cycle_circuit,
    mask_of,
    parity_matrices,
)

BOUNDARY = -1


class DecodingError(RuntimeError):
    pass


@dataclass(frozen=True)
class UnitCell:
    """Edge pattern repeated in every layer.

    ``space``: ``(a, b, weight, flip_mask)`` inside one layer, ``b = BOUNDARY``
    for boundary edges.  ``cross``: ``(a, b, weight, flip_mask)`` from ``a`` in
    layer ``k`` to ``b`` in layer ``k + 1``.
    """

    n_stab: int
    space: tuple[tuple[int, int, float, int], ...]
    cross: tuple[tuple[int, int, float, int], ...]
    logical_mask: int

    def parity(self, flip_mask: int) -> int:
        return bin(flip_mask & self.logical_mask).count("1") & 1


def column_edges(H: np.ndarray, weight: float = 1.0) -> list[tuple[int, int, float, int]]:
    """One space-like edge per column of ``H`` (boundary edge for weight-1 columns)."""
    edges = []
    for q in range(H.shape[1]):
        rows = np.flatnonzero(H[:, q])
        if len(rows) == 1:
            edges.append((int(rows[0]), BOUNDARY, weight, 1 << q))
        elif len(rows) == 2:
            edges.append((int(rows[0]), int(rows[1]), weight, 1 << q))
        elif len(rows) > 2:
            raise DecodingError(f"column {q} touches {len(rows)} checks; not a graph-like code")
    return edges


def _dedupe(edges, logical_mask: int, directed: bool = False):
    seen: dict[tuple[int, int], tuple[int, int, float, int]] = {}
    for a, b, w, m in edges:
        key = (a, b) if directed or b == BOUNDARY or a <= b else (b, a)
        if key in seen:
            prev = seen[key]
            if bin(prev[3] & logical_mask).count("1") % 2 != bin(m & logical_mask).count("1") % 2:
                raise DecodingError(f"parallel edges {key} disagree on logical parity")
            if w < prev[2]:
                seen[key] = (key[0], key[1], w, m)
            continue
        seen[key] = (key[0], key[1], w, m)
    return tuple(seen[k] for k in sorted(seen))


def phenomenological_cell(basis: str = "Z", weight: float = 1.0) -> UnitCell:
    """Parity-matrix space edges plus vertical time edges only."""
    pm = parity_matrices()
    H = pm.H_Z if basis == "Z" else pm.H_X
    logical = mask_of(LOGICAL_Z_SUPPORT if basis == "Z" else LOGICAL_X_SUPPORT)
    space = _dedupe(column_edges(H, weight), logical)
    cross = tuple((j, j, weight, 0) for j in range(H.shape[0]))
    return UnitCell(H.shape[0], space, cross, logical)


@dataclass(frozen=True)
class FaultSignature:
    location: int
    pauli: str
    cycle: int
    detectors: tuple[tuple[int, int], ...]
    data_flip: int
    logical_flip: int


def enumerate_single_faults(
    circuit: StabilizerCircuit | None = None, n_cycles: int = 3, idle_noise: bool = False
) -> list[FaultSignature]:
    """Propagate every single X/Y/Z fault at every noise location of every noisy
    cycle, plus every final data-readout flip, through an otherwise ideal run.

    Returns Z-detector signatures (layers ``0..n_cycles``, the last one being
    the data-readout layer) and the induced logical flip of the Z readout.
    """
    circuit = circuit or build_cycle_circuit()
    cc = frames.compile_cycle(circuit, idle_noise=idle_noise)
    H = parity_matrices().H_Z
    L = cc.n_locations
    faults = [(c, l, p) for c in range(n_cycles) for l in range(L) for p in "XYZ"]
    S = len(faults) + 9
    fb = frames.FrameBatch(cc.n_qubits, S)
    fb.run_cycle(cc)  # noise-free preparation round
    prev = np.zeros((4, S), dtype=bool)
    layers = []
    for c in range(n_cycles):
        xe = np.zeros((L, S), dtype=bool)
        ze = np.zeros((L, S), dtype=bool)
        for f, (fc, l, p) in enumerate(faults):
            if fc == c:
                xe[l, f] = p in "XY"
                ze[l, f] = p in "YZ"
        meas = fb.run_cycle(cc, xe, ze)
        cur = meas[cc.z_slots]
        layers.append(cur ^ prev)
        prev = cur
    data = fb.data_flips().copy()
    for q in range(9):
        data[q, len(faults) + q] ^= True
    final = ((H.astype(np.int64) @ data.astype(np.int64)) % 2).astype(bool) ^ prev
    layers.append(final)
    det = np.stack(layers)  # (n_layers, 4, S)
    zl = list(LOGICAL_Z_SUPPORT)
    logical = np.bitwise_xor.reduce(data[zl], axis=0)
    masks = frames.pack_rows(data)
    out = []
    labels = faults + [(n_cycles, -1, f"M{q}") for q in range(9)]
    for f, (c, l, p) in enumerate(labels):
        fired = tuple((int(k), int(j)) for k, j in zip(*np.nonzero(det[:, :, f])))
        out.append(FaultSignature(l, p, c, fired, int(masks[f]), int(logical[f])))
    return out


@lru_cache(maxsize=8)
def circuit_cell(diagonal_edges: bool = True, weight: float = 1.0, idle_noise: bool = False) -> UnitCell:
    """Z-basis unit cell: parity-matrix edges plus, optionally, the space-time
    edges produced by single circuit faults (data errors between the CX layers
    of the two checks that share the qubit)."""
    base = phenomenological_cell("Z", weight)
    if not diagonal_edges:
        return base
    space = list(base.space)
    cross = list(base.cross)
    known_space = {(a, b) for a, b, _, _ in base.space}
    for sig in enumerate_single_faults(build_cycle_circuit(), n_cycles=3, idle_noise=idle_noise):
        d = sig.detectors
        if len(d) == 2 and d[1][0] == d[0][0] + 1 and d[0][1] != d[1][1]:
            cross.append((d[0][1], d[1][1], weight, sig.data_flip))
        elif len(d) == 2 and d[0][0] == d[1][0]:
            key = (d[0][1], d[1][1])
            if key not in known_space:
                space.append((key[0], key[1], weight, sig.data_flip))
        elif len(d) > 2:
            raise DecodingError(f"fault {sig} fires {len(d)} detectors")
    return UnitCell(base.n_stab, _dedupe(space, base.logical_mask), _dedupe(cross, base.logical_mask, directed=True), base.logical_mask)


@dataclass
class DetectorGraph:
    """Layered detector graph.

    ``edges`` rows are ``(u, v, weight, flip_mask)`` with node ids as in the
    module docstring.
    """

    cell: UnitCell
    n_layers: int
    edges: list[tuple[int, int, float, int]] = field(repr=False)

    @property
    def n_stab(self) -> int:
        return self.cell.n_stab

    @property
    def boundary(self) -> int:
        return self.n_layers * self.n_stab

    @property
    def n_nodes(self) -> int:
        return self.boundary + 1

    def node(self, layer: int, stab: int) -> int:
        return layer * self.n_stab + stab

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=int)
        for u, v, _, _ in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


def build_detector_graph(n_layers: int, cell: UnitCell | None = None) -> DetectorGraph:
    """Repeat ``cell`` over ``n_layers`` layers (cross edges between neighbours)."""
    cell = cell or circuit_cell()
    if n_layers < 1:
        raise ValueError("need at least one detector layer")
    ns = cell.n_stab
    B = n_layers * ns
    edges = []
    for k in range(n_layers):
        for a, b, w, m in cell.space:
            edges.append((k * ns + a, B if b == BOUNDARY else k * ns + b, w, m))
        if k + 1 < n_layers:
            for a, b, w, m in cell.cross:
                edges.append((k * ns + a, (k + 1) * ns + b, w, m))
    return DetectorGraph(cell, n_layers, edges)


def syndrome_differences(syndromes: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """``D_i = S_{i-1} xor S_i`` along axis 0, with ``S_{-1}`` = ``reference``.

    ``syndromes`` has shape ``(n_cycles, ...)``; ``reference`` (the noise-free
    preparation round) defaults to all zeros.
    """
    s = np.asarray(syndromes)
    if reference is None:
        reference = np.zeros_like(s[0])
    reference = np.asarray(reference)
    if reference.shape != s.shape[1:]:
        raise ValueError(f"reference shape {reference.shape} does not match rounds {s.shape[1:]}")
    prev = np.concatenate([reference[None], s[:-1]], axis=0)
    return s ^ prev


def final_layer(readout: np.ndarray, last_syndrome: np.ndarray, H: np.ndarray | None = None) -> np.ndarray:
    """Stabilizers recomputed from the Z-basis data bits, xor the last round."""
    H = parity_matrices().H_Z if H is None else H
    readout = np.asarray(readout, dtype=np.int64)
    return ((readout @ H.T.astype(np.int64)) % 2).astype(np.uint8) ^ np.asarray(last_syndrome, dtype=np.uint8)


@dataclass(frozen=True)
class DecodeResult:
    correction: int
    pairs: tuple[tuple[int, int], ...]
    total_weight: float

    def correction_bits(self, n: int = 9) -> np.ndarray:
        return ((self.correction >> np.arange(n)) & 1).astype(np.uint8)


def _graph_matrices(graph: DetectorGraph):
    best: dict[tuple[int, int], tuple[float, int]] = {}
    for u, v, w, m in graph.edges:
        key = (min(u, v), max(u, v))
        if key not in best or w < best[key][0]:
            best[key] = (w, m)
    keys = sorted(best)
    rows = [k[0] for k in keys] + [k[1] for k in keys]
    cols = [k[1] for k in keys] + [k[0] for k in keys]
    vals = [best[k][0] for k in keys] * 2
    # zero weights would be dropped by csr; csgraph treats explicit zeros as edges
    # only if stored, so nudge them to the smallest positive float
    vals = [v if v > 0 else np.finfo(float).tiny for v in vals]
    mat = csr_matrix((vals, (rows, cols)), shape=(graph.n_nodes, graph.n_nodes))
    flips = {k: best[k][1] for k in keys}
    return mat, flips


def decode_mwpm(graph: DetectorGraph, detectors: np.ndarray) -> DecodeResult:
    """Minimum-weight matching of fired detectors.

    Parameters
    ----------
    detectors : array, shape ``(n_layers, n_stab)``
        Detection events (syndrome differences, final layer last).
    """
    det = np.asarray(detectors).reshape(graph.n_layers, graph.n_stab)
    fired = [graph.node(k, j) for k, j in zip(*np.nonzero(det))]
    if not fired:
        return DecodeResult(0, (), 0.0)
    mat, flips = _graph_matrices(graph)
    dist, pred = dijkstra(mat, directed=False, indices=fired, return_predecessors=True)
    B = graph.boundary
    m = len(fired)
    if not np.all(np.isfinite(dist[:, fired])) and not np.all(np.isfinite(dist[:, B])):
        raise DecodingError("a fired detector cannot reach any partner or the boundary")

    G = nx.Graph()
    finite = dist[np.isfinite(dist)]
    big = float(finite.max()) + 1.0 if finite.size else 1.0
    G.add_nodes_from(range(2 * m))
    for i in range(m):
        for j in range(i + 1, m):
            d = dist[i, fired[j]]
            if np.isfinite(d):
                G.add_edge(i, j, weight=big - d)
            G.add_edge(m + i, m + j, weight=big)
        if np.isfinite(dist[i, B]):
            G.add_edge(i, m + i, weight=big - dist[i, B])
    matching = nx.max_weight_matching(G, maxcardinality=True)
    if len(matching) != m:
        raise DecodingError("no perfect matching on the defect graph")

    correction = 0
    pairs = []
    total = 0.0
    for a, b in sorted(tuple(sorted(p)) for p in matching):
        if a >= m:
            continue
        if b >= m:
            target, partner = B, BOUNDARY
        else:
            target, partner = fired[b], fired[b]
        total += dist[a, target]
        node = target
        while node != fired[a]:
            prev = pred[a, node]
            correction ^= flips[(min(prev, node), max(prev, node))]
            node = prev
        pairs.append((fired[a], partner))
    return DecodeResult(correction, tuple(pairs), float(total))


def logical_verdict(corrected_bits: np.ndarray, encoded: int = 0, support: Sequence[int] = LOGICAL_Z_SUPPORT) -> int:
    """1 if the logical parity of the corrected Z-basis data differs from ``encoded``."""
    bits = np.asarray(corrected_bits, dtype=np.int64)
    return int((bits[..., list(support)].sum(axis=-1) + encoded) % 2) if bits.ndim == 1 else (
        (bits[..., list(support)].sum(axis=-1) + encoded) % 2
    ).astype(np.uint8)


# --- layered dynamic-programming decoder -------------------------------------------------

_INF = np.inf


def _transition_tables(cell: UnitCell) -> tuple[np.ndarray, np.ndarray]:
    """Cheapest edge subsets per (local parity demand, crossing pattern, logical parity).

    ``step[e, s_out, q]``: min cost of space edges in a layer plus cross edges
    to the next one such that the layer's node parities equal ``e``, the
    crossing edges leave parity pattern ``s_out`` on the next layer and the
    chosen edges flip the logical ``q`` times (mod 2).  ``close[e, q]`` is the
    same for the last layer (no crossing edges).
    """
    ns = cell.n_stab
    nstate = 1 << ns
    best_space = np.full((nstate, 2), _INF)
    for choice in product((0, 1), repeat=len(cell.space)):
        pat, cost, par = 0, 0.0, 0
        for on, (a, b, w, m) in zip(choice, cell.space):
            if on:
                pat ^= 1 << a
                if b != BOUNDARY:
                    pat ^= 1 << b
                cost += w
                par ^= cell.parity(m)
        best_space[pat, par] = min(best_space[pat, par], cost)
    best_cross = np.full((nstate, nstate, 2), _INF)
    for choice in product((0, 1), repeat=len(cell.cross)):
        lo, hi, cost, par = 0, 0, 0.0, 0
        for on, (a, b, w, m) in zip(choice, cell.cross):
            if on:
                lo ^= 1 << a
                hi ^= 1 << b
                cost += w
                par ^= cell.parity(m)
        best_cross[lo, hi, par] = min(best_cross[lo, hi, par], cost)
    step = np.full((nstate, nstate, 2), _INF)
    for e in range(nstate):
        for lo in range(nstate):
            pa = e ^ lo
            for qa in (0, 1):
                ca = best_space[pa, qa]
                if not np.isfinite(ca):
                    continue
                for qc in (0, 1):
                    tot = ca + best_cross[lo, :, qc]
                    q = qa ^ qc
                    step[e, :, q] = np.minimum(step[e, :, q], tot)
    return step, best_space.copy()


@njit(cache=True)
def _advance(cost, d, step, out):
    ns = step.shape[0]
    for i in range(out.shape[0]):
        out[i] = np.inf
    for sin in range(ns):
        for p in range(2):
            c = cost[2 * sin + p]
            if c == np.inf:
                continue
            e = d ^ sin
            for u in range(ns):
                for q in range(2):
                    v = c + step[e, u, q]
                    k = 2 * u + (p ^ q)
                    if v < out[k]:
                        out[k] = v
    m = np.inf
    for i in range(out.shape[0]):
        if out[i] < m:
            m = out[i]
    for i in range(out.shape[0]):
        out[i] -= m
    return m


@njit(cache=True)
def _close(cost, f, close):
    ns = close.shape[0]
    b0 = np.inf
    b1 = np.inf
    for sin in range(ns):
        for p in range(2):
            c = cost[2 * sin + p]
            if c == np.inf:
                continue
            e = f ^ sin
            for q in range(2):
                v = c + close[e, q]
                if (p ^ q) == 0:
                    if v < b0:
                        b0 = v
                else:
                    if v < b1:
                        b1 = v
    return b0, b1


@njit(cache=True)
def _dp_batch(D, F, terminals, step, close, fixed, out_parity, out_weight):
    S = D.shape[0]
    C = D.shape[1]
    T = terminals.shape[0]
    nst = 2 * step.shape[0]
    cost = np.empty(nst)
    tmp = np.empty(nst)
    for s in range(S):
        for i in range(nst):
            cost[i] = np.inf
        cost[0] = 0.0
        offset = 0.0
        at_fixed = False
        ti = 0
        for layer in range(C + 1):
            while ti < T and terminals[ti] == layer:
                b0, b1 = _close(cost, F[s, ti], close)
                if b0 <= b1:
                    out_parity[s, ti] = 0
                    out_weight[s, ti] = b0 + offset
                else:
                    out_parity[s, ti] = 1
                    out_weight[s, ti] = b1 + offset
                ti += 1
            if layer == C or ti == T:
                break
            d = D[s, layer]
            if d == 0 and at_fixed:
                continue
            offset += _advance(cost, d, step, tmp)
            same = True
            for i in range(nst):
                cost[i] = tmp[i]
                if cost[i] != fixed[i]:
                    same = False
            at_fixed = same


class BatchDecoder:
    """Minimum-weight decoder for many shots and nested terminal lengths.

    ``decode(D, F, terminals)``:

    * ``D`` ``(shots, n_cycles)`` packed detector layers (bit j = stabilizer j)
    * ``F`` ``(shots, n_terminals)`` packed final layers, one per terminal length
    * ``terminals`` increasing terminal lengths ``n`` (number of noisy cycles
      preceding the data readout)

    Returns the parity of the correction on the logical support for each shot
    and terminal length; xor it with the raw readout parity to get the verdict.
    """

    def __init__(self, cell: UnitCell | None = None):
        self.cell = cell or circuit_cell()
        self.step, self.close = _transition_tables(self.cell)
        self.fixed = self._fixed_point()

    def _fixed_point(self) -> np.ndarray:
        nst = 2 * self.step.shape[0]
        cost = np.full(nst, np.inf)
        cost[0] = 0.0
        tmp = np.empty(nst)
        for _ in range(1000):
            _advance(cost, 0, self.step, tmp)
            if np.array_equal(tmp, cost):
                return cost
            cost[:] = tmp
        raise DecodingError("quiescent cost vector did not converge")

    def decode(self, D: np.ndarray, F: np.ndarray, terminals: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        D = np.ascontiguousarray(D, dtype=np.uint8)
        F = np.ascontiguousarray(F, dtype=np.uint8)
        terminals = np.asarray(list(terminals), dtype=np.int64)
        if D.ndim != 2 or F.shape != (D.shape[0], len(terminals)):
            raise ValueError("shape mismatch between detectors, final layers and terminals")
        if len(terminals) and (np.any(np.diff(terminals) <= 0) or terminals[0] < 0 or terminals[-1] > D.shape[1]):
            raise ValueError("terminal lengths must be increasing and within the record")
        par = np.zeros(F.shape, dtype=np.uint8)
        wt = np.zeros(F.shape, dtype=np.float64)
        _dp_batch(D, F, terminals, self.step, self.close, self.fixed, par, wt)
        return par, wt


def decode_graph_with_dp(graph: DetectorGraph, detectors: np.ndarray) -> tuple[int, float]:
    """Single-shot DP decode of a full graph (last layer closed with no crossings)."""
    det = np.asarray(detectors).reshape(graph.n_layers, graph.n_stab).astype(np.uint8)
    packed = (det << np.arange(graph.n_stab, dtype=np.uint8)).sum(axis=1).astype(np.uint8)
    dec = BatchDecoder(graph.cell)
    par, wt = dec.decode(packed[None, :-1], packed[None, -1:], [graph.n_layers - 1])
    return int(par[0, 0]), float(wt[0, 0])


DATA_MASK = mask_of(DATA_QUBITS)
