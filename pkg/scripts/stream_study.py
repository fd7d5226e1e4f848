"""Drifting-stream study for several seeds: phase-2 box fractions per method."""

import argparse
import os

import numpy as np

from ecmem.analysis import METHODS, final_phase2_fractions, run_stream_study
from ecmem.envs import StreamSpec


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--memory-size", type=int, default=100)
    p.add_argument("--out-dir", default="results/stream")
    args = p.parse_args()

    rows = []
    for seed in range(args.seeds):
        snaps = run_stream_study(os.path.join(args.out_dir, f"seed{seed}"), args.memory_size, seed)
        fr = final_phase2_fractions(snaps, StreamSpec(seed=seed))
        rows.append([fr[m] for m in METHODS])
        print(f"seed {seed}: " + "  ".join(f"{m} {fr[m]:.2f}" for m in METHODS))
    mean = np.mean(rows, axis=0)
    print("mean:   " + "  ".join(f"{m} {v:.2f}" for m, v in zip(METHODS, mean)))


if __name__ == "__main__":
    main()
