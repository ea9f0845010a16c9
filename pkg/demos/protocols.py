"""Chained multi-cycle decoding against composed single-round estimates
under the same baseline noise.

    python demos/protocols.py --shots 4096 --cycles 50
"""

import argparse

from radqec.coherence import baseline_schedule
from radqec.experiments import RunConfig, run_curve


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=4096)
    ap.add_argument("--cycles", type=int, default=50)
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()

    sched = baseline_schedule(args.cycles)
    curves = {}
    for protocol in (1, 2):
        cfg = RunConfig(seed=args.seed, shots=args.shots, cycles=args.cycles, protocol=protocol)
        _, p, _, _ = run_curve(cfg, sched)
        curves[protocol] = p
    print("cycle  protocol_I  protocol_II")
    for n in range(0, args.cycles, max(1, args.cycles // 10)):
        print(f"{n + 1:5d}  {curves[1][n]:10.4f}  {curves[2][n]:11.4f}")


if __name__ == "__main__":
    main()
