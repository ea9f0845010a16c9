"""Independent reference computations shared by the unit and acceptance tests."""

from functools import lru_cache

import networkx as nx
import numpy as np

from radqec import frames
from radqec.decoder import DetectorGraph
from radqec.records import SyndromeRecord
from radqec.surface_code import build_cycle_circuit


def single_fault_record(n_cycles: int, idle_noise: bool = False) -> SyndromeRecord:
    """One shot per single fault: every X/Y/Z at every location of every cycle,
    plus every single data-readout flip, each run through the frame simulator."""
    cc = frames.compile_cycle(build_cycle_circuit(), idle_noise=idle_noise)
    L = cc.n_locations
    faults = [(c, l, p) for c in range(n_cycles) for l in range(L) for p in "XYZ"]
    S = len(faults) + 9
    fb = frames.FrameBatch(cc.n_qubits, S)
    meas = fb.run_cycle(cc)
    prep_z = frames.pack_rows(meas[cc.z_slots])
    prep_x = frames.pack_rows(meas[cc.x_slots])
    zs = np.empty((S, n_cycles), np.uint8)
    xs = np.empty((S, n_cycles), np.uint8)
    for c in range(n_cycles):
        xe = np.zeros((L, S), bool)
        ze = np.zeros((L, S), bool)
        for f, (fc, l, p) in enumerate(faults):
            if fc == c:
                xe[l, f] = p in "XY"
                ze[l, f] = p in "YZ"
        meas = fb.run_cycle(cc, xe, ze)
        zs[:, c] = frames.pack_rows(meas[cc.z_slots])
        xs[:, c] = frames.pack_rows(meas[cc.x_slots])
    data = fb.data_flips().copy()
    for q in range(9):
        data[q, len(faults) + q] ^= True
    term = frames.pack_rows(data)[:, None].astype(np.uint16)
    return SyndromeRecord("I", zs, xs, prep_z, prep_x, [n_cycles], term)


def nx_distances(graph: DetectorGraph) -> dict:
    G = nx.Graph()
    for u, v, w, _ in graph.edges:
        if not G.has_edge(u, v) or G[u][v]["weight"] > w:
            G.add_edge(u, v, weight=w)
    return dict(nx.all_pairs_dijkstra_path_length(G))


def brute_force_pairing(nodes: tuple[int, ...], dist: dict, boundary: int) -> float:
    """Minimum total distance pairing each defect with another defect or the boundary."""

    @lru_cache(maxsize=None)
    def best(rest: frozenset) -> float:
        if not rest:
            return 0.0
        items = sorted(rest)
        a = items[0]
        others = frozenset(items[1:])
        out = dist[a].get(boundary, np.inf) + best(others)
        for b in items[1:]:
            out = min(out, dist[a].get(b, np.inf) + best(others - {b}))
        return out

    return best(frozenset(nodes))
