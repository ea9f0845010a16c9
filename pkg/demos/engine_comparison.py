"""Corrected and uncorrected logical error curves from both noise engines at
baseline coherence: GAD trajectories and the twirled Pauli-frame sampler.

    python demos/engine_comparison.py --shots 1024 --cycles 50
"""

import argparse

import numpy as np

from radqec import pauli_sim, trajectory
from radqec.coherence import baseline_schedule
from radqec.surface_code import build_cycle_circuit


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=1024)
    ap.add_argument("--cycles", type=int, default=50)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    circuit = build_cycle_circuit()
    sched = baseline_schedule(args.cycles)
    gad = trajectory.run_gad_protocol_I(circuit, sched, args.cycles, args.shots, args.seed).decode()
    pt = pauli_sim.run_protocol_I(circuit, sched, args.cycles, args.shots, args.seed).decode()
    print("cycle  GAD_corrected  GAD_raw  PTGAD_corrected  PTGAD_raw")
    for n in np.unique(np.geomspace(1, args.cycles, 10).astype(int)):
        i = n - 1
        print(f"{n:5d}  {gad[0][:, i].mean():13.4f}  {gad[1][:, i].mean():7.4f}  "
              f"{pt[0][:, i].mean():15.4f}  {pt[1][:, i].mean():9.4f}")


if __name__ == "__main__":
    main()
