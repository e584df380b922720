"""Command-line front end: train, eval, sweep, gradcheck, oracle-bench, comm-cost."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment, mlp, oracle
from .env import ConfigError
from .experiment import PRESETS, ExperimentConfig, load_config


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI config file (sections: experiment/network/train)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper",
                   help="base parameter profile the config file and flags override")
    p.add_argument("--scheme", choices=experiment.SCHEMES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--averaging-times", type=int)
    p.add_argument("--seeds", type=_int_list, help="comma-separated training seeds")
    p.add_argument("--eval-distributions", type=int)
    p.add_argument("--hidden-sizes", type=_int_list, help="comma-separated hidden layer widths")
    p.add_argument("--noise-dbm", type=float)
    p.add_argument("--steps-per-epoch", type=int)


def _build_config(args) -> ExperimentConfig:
    config = load_config(args.config, base=PRESETS[args.preset]())
    overrides = {}
    for name in ("scheme", "epochs", "averaging_times", "eval_distributions"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.seeds is not None:
        overrides["seeds"] = tuple(args.seeds)
    if args.hidden_sizes is not None:
        overrides["hidden_sizes"] = tuple(args.hidden_sizes)
    if args.scheme == "marl" and args.averaging_times is None:
        overrides["averaging_times"] = 0
    network = config.network
    if args.noise_dbm is not None:
        network = replace(network, noise_dbm=args.noise_dbm)
    if args.steps_per_epoch is not None:
        network = replace(network, steps_per_epoch=args.steps_per_epoch)
    return replace(config, network=network, **overrides)


def _cmd_train(args) -> int:
    config = _build_config(args)
    seed = args.seed if args.seed is not None else config.seeds[0]
    out = Path(args.out)
    result = experiment.run_training(config, seed, out_dir=out)
    last = result.metrics[-1]
    print(f"trained scheme={config.scheme} seed={seed} epochs={config.epochs}")
    print(f"final mean reward {last.mean_reward:.4f}, system EE {last.system_ee:.4e} bits/J")
    print(f"averaging events: {len(result.events)}; outputs in {out}")
    return 0


def _cmd_eval(args) -> int:
    config = _build_config(args)
    policies = experiment.load_policies(args.checkpoints, config.network.num_ues)
    report = experiment.run_evaluation(
        policies, config, args.seed,
        noise_dbm=args.noise_dbm,
        eval_distributions=args.eval_distributions,
    )
    if args.out:
        experiment.write_eval_csv(args.out, report)
    print(f"evaluated {len(report.rows)} distributions")
    print(f"mean system EE {report.mean_system_ee:.4e} bits/J, "
          f"oracle bound {report.mean_oracle_ee:.4e} bits/J")
    print(f"bound violations: {report.total_bound_violations}")
    return 0


def _cmd_sweep(args) -> int:
    config = _build_config(args)
    rows = experiment.run_sweep(
        config, args.na_values, eval_seed=args.eval_seed,
        eval_distributions=args.eval_distributions or 100, out_dir=args.out,
    )
    print(f"{'n_a':>5} {'seed':>6} {'final_loss':>12} {'mean_ee':>14}")
    for r in rows:
        print(f"{r.averaging_times:>5} {r.seed:>6} {r.final_loss:>12.5f} {r.mean_system_ee:>14.5e}")
    print(f"sweep outputs in {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    spec = mlp.MlpSpec(tuple(args.layers))
    dtype = np.float32 if args.bits == 32 else np.float64
    tol = 1e-3 if args.bits == 32 else 1e-4
    err = mlp.gradient_check(spec, args.seed, dtype=dtype)
    ok = err < tol
    print(f"layers {args.layers} ({args.bits}-bit): max relative error {err:.3e} "
          f"({'OK' if ok else 'FAIL'}, tolerance {tol:g})")
    return 0 if ok else 1


def _cmd_oracle_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    mismatches = 0
    for _ in range(args.instances):
        u = rng.uniform(0.0, args.scale, size=(args.rows, args.cols))
        hung, _ = oracle.assign_hungarian(u)
        brute, _ = oracle.assign_brute_force(u)
        if oracle.scaled_total(u, hung) != oracle.scaled_total(u, brute) or hung != brute:
            mismatches += 1
    print(f"{args.instances} random {args.rows}x{args.cols} instances: "
          f"{mismatches} mismatches vs brute force")
    return 0 if mismatches == 0 else 1


def _cmd_comm_cost(args) -> int:
    config = _build_config(args)
    net = config.network
    obs_dims = [net.obs_dim] * net.num_ues
    model_sizes = [config.mlp_spec.num_params] * net.num_ues
    c_crl = oracle.comm_cost_crl(config.epochs, net.steps_per_epoch, obs_dims)
    n_a = args.averaging_times if args.averaging_times is not None else config.averaging_times
    c_frl = oracle.comm_cost_frl(n_a, model_sizes)
    print(f"per-UE observation dim {net.obs_dim}, model size {config.mlp_spec.num_params}")
    print(f"C_CRL = {c_crl} scalars (K={config.epochs}, T={net.steps_per_epoch})")
    print(f"C_FRL = {c_frl} scalars (M={n_a})")
    if c_frl < c_crl:
        print(f"federated costs {c_frl / c_crl:.3f}x the centralized upload")
    else:
        print("federated upload exceeds centralized at this averaging frequency")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedra",
        description="Federated multi-agent DQN for energy-efficient OFDMA resource allocation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one scheme for one seed")
    _add_config_args(p)
    p.add_argument("--seed", type=int, help="training seed (default: first config seed)")
    p.add_argument("--out", required=True, help="output directory for metrics and checkpoints")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of saved checkpoints")
    _add_config_args(p)
    p.add_argument("--checkpoints", required=True, help="run directory holding agent_*.fwv")
    p.add_argument("--seed", type=int, default=1_000_003, help="evaluation distribution seed")
    p.add_argument("--out", help="optional CSV path for the per-distribution report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate over a list of averaging counts")
    _add_config_args(p)
    p.add_argument("--na-values", type=_int_list, required=True,
                   help="comma-separated averaging counts (0 = MARL baseline)")
    p.add_argument("--eval-seed", type=int, default=1_000_003)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p.add_argument("--layers", type=_int_list, default=[3, 8, 4])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bits", type=int, choices=(32, 64), default=64)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("oracle-bench", help="cross-check the assignment solver against brute force")
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--scale", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle_bench)

    p = sub.add_parser("comm-cost", help="centralized vs federated upload accounting")
    _add_config_args(p)
    p.set_defaults(func=_cmd_comm_cost)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
