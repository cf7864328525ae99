#!/usr/bin/env python3
"""Scaling experiments: preprocessing linearity, enumeration delay, update cost.

Writes a JSON report to stdout (or --out).  Sizes are database size measures,
i.e. sum over relations of (arity+1) * tuples plus one per constant.
"""

import argparse
import gc
import json
import random
import statistics
import sys
import time

from deltaenum.dynamic_engine import dyn_preprocess, dyn_update
from deltaenum.generators import scaling_db, scaling_dynamic_query, scaling_static_query
from deltaenum.kdata import SingleTupleUpdate, db_size
from deltaenum.semiring import builtin_semiring
from deltaenum.static_engine import delay_gaps, enumerate_state, timed_preprocess


def static_experiment(sizes, runs, seed):
    semiring = builtin_semiring("natural")
    q = scaling_static_query()
    rng = random.Random(seed)
    out = []
    for size in sizes:
        db = scaling_db(rng, semiring, size, head_domain=150)
        state, seconds = timed_preprocess(q, db)
        list(enumerate_state(state))  # warm-up
        gc.disable()
        maxima = []
        means = []
        for _ in range(runs):
            gaps = delay_gaps(state)
            maxima.append(max(gaps) if gaps else 0.0)
            means.append(sum(gaps) / len(gaps) if gaps else 0.0)
        gc.enable()
        out.append(
            {
                "size": db_size(db),
                "preprocess_s": seconds,
                "median_max_gap_s": statistics.median(maxima),
                "median_mean_gap_s": statistics.median(means),
            }
        )
    return out


def dynamic_experiment(sizes, updates, runs, seed):
    semiring = builtin_semiring("natural")
    q = scaling_dynamic_query()
    rng = random.Random(seed)
    out = []
    for size in sizes:
        db = scaling_db(rng, semiring, size, dynamic=True)
        x_domain = min(1000, max(4, size // 4))
        y_domain = max(4, size // 4)
        state = dyn_preprocess(q, db)
        per_run = []
        for _ in range(runs):
            batch = []
            for _ in range(updates):
                t = (rng.randrange(1, x_domain + 1), rng.randrange(1, y_domain + 1))
                if rng.random() < 0.5:
                    batch.append(SingleTupleUpdate("insert", "A", t, semiring.one))
                else:
                    batch.append(SingleTupleUpdate("delete", "A", t))
            gc.disable()
            start = time.perf_counter()
            for u in batch:
                dyn_update(state, u)
            elapsed = time.perf_counter() - start
            gc.enable()
            per_run.append(elapsed / len(batch))
        out.append({"size": db_size(state.db), "median_mean_update_s": statistics.median(per_run)})
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1e3,1e4,1e5,1e6")
    parser.add_argument("--runs", type=int, default=5)
    parser.add_argument("--updates", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=24)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    report = {
        "sizes": sizes,
        "static": static_experiment(sizes, args.runs, args.seed),
        "dynamic": dynamic_experiment([sizes[0], sizes[-1]], args.updates, args.runs, args.seed),
    }
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)


if __name__ == "__main__":
    sys.exit(main())
