"""Desk-preset calibration: full-length runs for trend checks.

Dev utility, not part of the package.
"""

import argparse
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from fedra.experiment import desk_preset, run_evaluation, run_training


def one_run(args):
    scheme, n_a, seed, lr, discount, anneal = args
    base = desk_preset()
    cfg = replace(
        base,
        scheme=scheme,
        averaging_times=n_a,
        train=replace(base.train, lr=lr, discount=discount, anneal_epochs=anneal),
    )
    t0 = time.time()
    res = run_training(cfg, seed=seed)
    policies = [ag.eval_weights for ag in res.agents]
    report = run_evaluation(policies, cfg, seed=1_000_003, eval_distributions=100)
    rw = np.array([m.mean_reward for m in res.metrics])
    k = len(rw)
    first = rw[: k // 10].mean()
    last = rw[-k // 10 :].mean()
    # time to reach 90% of final smoothed reward
    smooth = np.convolve(rw, np.ones(101) / 101, mode="valid")
    target = 0.9 * smooth[-1]
    t90 = int(np.argmax(smooth >= target)) if (smooth >= target).any() else -1
    final_loss = res.final_loss()
    etas = [round(x, 3) for x in res.metrics[-1].etas]
    return (
        f"{scheme:8s} n_a={n_a} seed={seed} lr={lr:g}: "
        f"first10%={first:.3f} last10%={last:.3f} t90={t90} "
        f"loss={final_loss:.3f} evalEE={report.mean_system_ee:.4e} "
        f"oracleEE={report.mean_oracle_ee:.3e} "
        f"viol={report.total_bound_violations} etas={etas} ({time.time() - t0:.0f}s)"
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--discount", type=float, default=0.95)
    ap.add_argument("--anneal", type=int, default=1333)
    ap.add_argument("--seeds", type=str, default="1")
    ap.add_argument("--jobs", type=str, default="marl:0,frl:8,frl_suc:8,frl_suc:1")
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    jobs = []
    for tok in args.jobs.split(","):
        scheme, n_a = tok.split(":")
        for seed in seeds:
            jobs.append((scheme, int(n_a), seed, args.lr, args.discount, args.anneal))

    with ProcessPoolExecutor(max_workers=2) as pool:
        for line in pool.map(one_run, jobs):
            print(line, flush=True)


if __name__ == "__main__":
    main()
