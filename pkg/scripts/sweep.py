"""Grid of (env, strategy, memory_size) runs, written to one CSV plus a summary table.

    python3 scripts/sweep.py --env cartpole --strategies lru rew sur km dkm \
        --sizes 50 100 1000 10000 --out results/cartpole.csv
"""

import argparse
import os

from ecmem import harness
from ecmem.memory import STRATEGIES


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--env", required=True)
    p.add_argument("--strategies", nargs="+", default=list(STRATEGIES), choices=STRATEGIES)
    p.add_argument("--sizes", nargs="+", type=int, required=True)
    p.add_argument("--seeds", default="5")
    p.add_argument("--steps", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--last", type=int, default=10, help="evaluations averaged per seed")
    p.add_argument("--out", required=True)
    args = p.parse_args()

    records = []
    for size in args.sizes:
        for strategy in args.strategies:
            cfg = harness.make_config(
                {"env": args.env, "strategy": strategy, "memory_size": size, "seeds": args.seeds, "total_steps": args.steps}
            )
            records += harness.run_experiment(cfg, threads=args.threads)
            print(harness.format_table(harness.aggregate_final([r for r in records if r.memory_size == size and r.strategy == strategy], args.last)).splitlines()[-1], flush=True)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    harness.write_csv(records, args.out)
    print(harness.format_table(harness.aggregate_final(records, args.last)))


if __name__ == "__main__":
    main()
