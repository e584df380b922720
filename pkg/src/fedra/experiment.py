"""Experiment orchestration: training runs, greedy evaluation, averaging sweeps.

A run is fully determined by (config, seed): the seed feeds a SeedSequence
whose children seed the environment and each agent, so identical inputs
reproduce byte-identical metrics files. Metrics go to CSV with a fixed
column order; the run manifest and the averaging audit log ride alongside.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mlp
from .agent import DqnAgent, TrainConfig, Transition
from .env import Action, ConfigError, NetworkConfig, ResourceAllocationEnv
from .fed import AveragingEvent, run_averaging_round
from .mlp import MlpSpec, Weights
from .oracle import assign_hungarian, build_utility_matrix, comm_cost_crl, comm_cost_frl
from .radio import SubChannel

SCHEMES = ("marl", "frl", "frl_suc")
AVERAGING_RULES = {"frl": "memory", "frl_suc": "success"}

# slack for float summation order when comparing policy EE to the oracle bound
BOUND_RTOL = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "frl_suc"
    epochs: int = 6000
    averaging_times: int = 8
    seeds: tuple[int, ...] = (1, 2, 3)
    eval_distributions: int = 5
    hidden_sizes: tuple[int, ...] = (512, 256, 128)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.scheme == "marl" and self.averaging_times != 0:
            raise ConfigError("marl is the no-averaging baseline; averaging_times must be 0")
        if self.scheme != "marl" and self.averaging_times < 1:
            raise ConfigError(f"{self.scheme} needs averaging_times >= 1")
        if self.averaging_times > self.epochs:
            raise ConfigError("cannot average more often than once per epoch")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.eval_distributions < 1:
            raise ConfigError("eval_distributions must be positive")
        if self.averaging_times > 0:
            period_steps = (self.epochs // self.averaging_times) * self.network.steps_per_epoch
            if period_steps % self.train.target_sync_period != 0:
                raise ConfigError(
                    "averaging period must be an integer multiple of the "
                    f"target-sync period: {period_steps} steps vs {self.train.target_sync_period}"
                )

    @property
    def mlp_spec(self) -> MlpSpec:
        net = self.network
        return MlpSpec((net.obs_dim, *self.hidden_sizes, net.num_actions))

    def averaging_epochs(self) -> set[int]:
        """1-based epoch counts after which a fusion event fires."""
        if self.averaging_times == 0:
            return set()
        period = self.epochs // self.averaging_times
        return {m * period for m in range(1, self.averaging_times + 1)}


def paper_preset() -> ExperimentConfig:
    return ExperimentConfig()


def desk_preset() -> ExperimentConfig:
    """Small-network short-run profile so full comparisons finish in minutes.

    The anneal window keeps the paper's 2/3-of-run proportion, and the
    learning rate is raised to suit the much smaller network.
    """
    return ExperimentConfig(
        epochs=2000,
        hidden_sizes=(64, 32),
        seeds=(1, 2, 3),
        train=TrainConfig(lr=1e-3, anneal_epochs=1333),
    )


PRESETS = {"paper": paper_preset, "desk": desk_preset}


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    mean_reward: float
    losses: tuple[float, ...]
    etas: tuple[float, ...]
    system_ee: float
    oracle_ee: float
    c_crl_cum: int
    c_frl_cum: int


def metrics_header(num_ues: int) -> list[str]:
    return (
        ["epoch", "mean_reward"]
        + [f"loss_ue{i}" for i in range(num_ues)]
        + [f"eta_ue{i}" for i in range(num_ues)]
        + ["system_ee", "oracle_ee", "c_crl_cum", "c_frl_cum"]
    )


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


@dataclass
class TrainingResult:
    config: ExperimentConfig
    seed: int
    metrics: list[MetricsRecord]
    agents: list[DqnAgent]
    events: list[AveragingEvent]

    def final_loss(self, tail_frac: float = 0.1) -> float:
        """Mean per-agent loss over the last fraction of epochs."""
        tail = max(1, int(len(self.metrics) * tail_frac))
        rows = self.metrics[-tail:]
        return float(np.mean([r.losses for r in rows]))


def run_training(config: ExperimentConfig, seed: int, out_dir=None) -> TrainingResult:
    """Train one seed of one scheme for the configured number of epochs."""
    net, tr = config.network, config.train
    spec = config.mlp_spec
    steps = net.steps_per_epoch

    root = np.random.SeedSequence(seed)
    env_seed, *agent_seeds = root.spawn(1 + net.num_ues)
    env = ResourceAllocationEnv(net)
    agents = [DqnAgent(spec, tr, s) for s in agent_seeds]

    epsilon = tr.epsilon_for_epoch(0)
    obs = [o.as_array() for o in env.reset(env_seed, epoch_frac=0.0, epsilon=epsilon)]

    rule = AVERAGING_RULES.get(config.scheme)
    fusion_epochs = config.averaging_epochs()
    obs_upload_per_epoch = steps * net.obs_dim * net.num_ues
    model_upload = sum(spec.num_params + 1 for _ in agents)

    events: list[AveragingEvent] = []
    metrics: list[MetricsRecord] = []
    for epoch in range(config.epochs):
        epsilon = tr.epsilon_for_epoch(epoch)
        epoch_frac = epoch / config.epochs
        reward_sum = 0.0
        loss_sums = np.zeros(net.num_ues)
        loss_counts = np.zeros(net.num_ues, dtype=np.int64)
        oracle_bound = 0.0
        for t in range(steps):
            if t == steps - 1:
                _, oracle_bound = assign_hungarian(build_utility_matrix(env.gains, net).u_star)
            actions = [ag.select_action(o, epsilon) for ag, o in zip(agents, obs)]
            outcome = env.step(actions, epoch_frac, epsilon)
            next_obs = [o.as_array() for o in outcome.next_observations]
            for i, ag in enumerate(agents):
                ag.store(Transition(obs[i], actions[i].flat_index, outcome.reward, next_obs[i]))
                loss = ag.train_step()
                if loss is not None:
                    loss_sums[i] += loss
                    loss_counts[i] += 1
            reward_sum += outcome.reward
            obs = next_obs

        env.advance_epoch()
        if (epoch + 1) in fusion_epochs and rule is not None:
            events.append(
                run_averaging_round(agents, rule, env.tracker, event_index=len(events) + 1)
            )
        next_epsilon = tr.epsilon_for_epoch(epoch + 1)
        obs = [
            o.as_array()
            for o in env.observations((epoch + 1) / config.epochs, next_epsilon)
        ]

        mean_losses = np.where(loss_counts > 0, loss_sums / np.maximum(loss_counts, 1), 0.0)
        mean_reward = reward_sum / steps
        metrics.append(
            MetricsRecord(
                epoch=epoch,
                mean_reward=mean_reward,
                losses=tuple(float(x) for x in mean_losses),
                etas=tuple(float(x) for x in env.success_rates()),
                system_ee=mean_reward / net.reward_scale,
                oracle_ee=oracle_bound,
                c_crl_cum=(epoch + 1) * obs_upload_per_epoch,
                c_frl_cum=len(events) * model_upload,
            )
        )

    result = TrainingResult(config=config, seed=seed, metrics=metrics, agents=agents, events=events)
    if out_dir is not None:
        write_run_outputs(result, Path(out_dir))
    return result


def write_run_outputs(result: TrainingResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    config = result.config
    write_metrics_csv(out_dir / "metrics.csv", result.metrics, config.network.num_ues)
    manifest = {
        "scheme": config.scheme,
        "seed": result.seed,
        "config": dataclasses.asdict(config),
        "averaging_events": len(result.events),
        "package_version": _package_version(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(out_dir / "averaging_log.jsonl", "w") as fh:
        for ev in result.events:
            fh.write(json.dumps(ev.to_record(), sort_keys=True) + "\n")
    spec = config.mlp_spec
    for i, ag in enumerate(result.agents):
        mlp.save_weights(out_dir / f"agent_{i}.fwv", spec, ag.eval_weights)
    if result.events:
        # after the last broadcast every agent carries the fused model
        mlp.save_weights(out_dir / "fused_final.fwv", spec, result.agents[0].eval_weights)


def write_metrics_csv(path, metrics: list[MetricsRecord], num_ues: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics_header(num_ues))
        for r in metrics:
            writer.writerow(
                [r.epoch, _fmt(r.mean_reward)]
                + [_fmt(x) for x in r.losses]
                + [_fmt(x) for x in r.etas]
                + [_fmt(r.system_ee), _fmt(r.oracle_ee), str(r.c_crl_cum), str(r.c_frl_cum)]
            )


def load_policies(checkpoint_dir, num_ues: int) -> list[Weights]:
    """Per-agent evaluation weights from a run directory's snapshots."""
    policies = []
    for i in range(num_ues):
        path = Path(checkpoint_dir) / f"agent_{i}.fwv"
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}")
        _, weights = mlp.load_weights(path)
        policies.append(weights)
    return policies


@dataclass(frozen=True)
class EvalRow:
    distribution: int
    mean_system_ee: float
    mean_success_rate: float
    mean_oracle_ee: float
    bound_violations: int


@dataclass
class EvalReport:
    rows: list[EvalRow]

    @property
    def mean_system_ee(self) -> float:
        return float(np.mean([r.mean_system_ee for r in self.rows]))

    @property
    def mean_oracle_ee(self) -> float:
        return float(np.mean([r.mean_oracle_ee for r in self.rows]))

    @property
    def total_bound_violations(self) -> int:
        return sum(r.bound_violations for r in self.rows)


def run_evaluation(policies: list[Weights], config: ExperimentConfig, seed: int,
                   noise_dbm: float | None = None,
                   eval_distributions: int | None = None) -> EvalReport:
    """Greedy rollouts of trained policies over fresh random UE placements.

    Each distribution runs for one epoch; per step the Hungarian upper bound
    is computed on the same channel realization the policies acted on. The
    observation fingerprints are pinned to their end-of-training values while
    action selection itself is fully greedy.
    """
    net = config.network
    if noise_dbm is not None:
        net = replace(net, noise_dbm=noise_dbm)
    if len(policies) != net.num_ues:
        raise ValueError(f"need {net.num_ues} policies, got {len(policies)}")
    n_dist = eval_distributions if eval_distributions is not None else config.eval_distributions

    env = ResourceAllocationEnv(net)
    ep_frac = 1.0
    epsilon = config.train.epsilon_for_epoch(config.epochs)
    dist_seeds = np.random.SeedSequence(seed).spawn(n_dist)

    rows = []
    for d in range(n_dist):
        obs = [o.as_array() for o in env.reset(dist_seeds[d], ep_frac, epsilon)]
        ee_sum = 0.0
        bound_sum = 0.0
        violations = 0
        success_sum = 0.0
        for _ in range(net.steps_per_epoch):
            _, bound = assign_hungarian(build_utility_matrix(env.gains, net).u_star)
            actions = [
                greedy_action(w, o) for w, o in zip(policies, obs)
            ]
            outcome = env.step(actions, ep_frac, epsilon)
            ee = outcome.reward / net.reward_scale
            ee_sum += ee
            bound_sum += bound
            if ee > bound * (1.0 + BOUND_RTOL):
                violations += 1
            success_sum += float(outcome.per_ue_success.mean())
            obs = [o.as_array() for o in outcome.next_observations]
        steps = net.steps_per_epoch
        rows.append(
            EvalRow(
                distribution=d,
                mean_system_ee=ee_sum / steps,
                mean_success_rate=success_sum / steps,
                mean_oracle_ee=bound_sum / steps,
                bound_violations=violations,
            )
        )
    return EvalReport(rows)


def greedy_action(weights: Weights, obs: np.ndarray) -> Action:
    return Action(int(np.argmax(mlp.forward(weights, obs))))


def write_eval_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["distribution", "mean_system_ee", "mean_success_rate", "mean_oracle_ee",
             "bound_violations"]
        )
        for r in report.rows:
            writer.writerow(
                [r.distribution, _fmt(r.mean_system_ee), _fmt(r.mean_success_rate),
                 _fmt(r.mean_oracle_ee), r.bound_violations]
            )


@dataclass(frozen=True)
class SweepRow:
    averaging_times: int
    seed: int
    final_loss: float
    mean_system_ee: float
    bound_violations: int


def sweep_variant(config: ExperimentConfig, n_a: int) -> ExperimentConfig:
    """The config for one sweep point; n_a = 0 degenerates to the MARL baseline."""
    if n_a == 0:
        return replace(config, scheme="marl", averaging_times=0)
    return replace(config, averaging_times=n_a)


def run_sweep(config: ExperimentConfig, n_a_values: list[int], eval_seed: int = 1_000_003,
              eval_distributions: int = 100, out_dir=None) -> list[SweepRow]:
    """Train and evaluate every (averaging count, seed) pair on shared test sets."""
    out_dir = Path(out_dir) if out_dir is not None else None
    rows = []
    for n_a in n_a_values:
        variant = sweep_variant(config, n_a)
        for seed in config.seeds:
            run_out = out_dir / f"na{n_a}_seed{seed}" if out_dir is not None else None
            result = run_training(variant, seed, out_dir=run_out)
            policies = [ag.eval_weights for ag in result.agents]
            report = run_evaluation(
                policies, variant, eval_seed, eval_distributions=eval_distributions
            )
            rows.append(
                SweepRow(
                    averaging_times=n_a,
                    seed=seed,
                    final_loss=result.final_loss(),
                    mean_system_ee=report.mean_system_ee,
                    bound_violations=report.total_bound_violations,
                )
            )
    if out_dir is not None:
        write_sweep_csv(out_dir / "sweep.csv", rows)
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["averaging_times", "seed", "final_loss", "mean_system_ee",
                         "bound_violations"])
        for r in rows:
            writer.writerow([r.averaging_times, r.seed, _fmt(r.final_loss),
                             _fmt(r.mean_system_ee), r.bound_violations])


def _package_version() -> str:
    from . import __version__

    return __version__


# -- config file handling ----------------------------------------------------

_EXPERIMENT_KEYS = {"scheme", "epochs", "averaging_times", "seeds", "eval_distributions",
                    "hidden_sizes"}
_NETWORK_LIST_KEYS = {"subcarrier_spacings_khz", "power_levels_dbm"}
_NETWORK_SCALAR_KEYS = {
    "num_ues": int, "subcarriers": int, "carrier_freq_ghz": float, "noise_dbm": float,
    "gamma_min": float, "area_m": float, "speed_max": float, "reward_scale": float,
    "steps_per_epoch": int, "bs_height_m": float, "ue_height_m": float,
    "shadowing_sigma_db": float, "epoch_duration_s": float, "obs_gain_offset_db": float,
    "obs_gain_scale_db": float, "obs_clip": float,
}
_TRAIN_KEYS = {
    "discount": float, "batch_size": int, "lr": float, "target_sync_period": int,
    "replay_capacity": int, "eps_start": float, "eps_final": float, "anneal_epochs": int,
    "momentum": float,
}


def _parse_list(text: str, cast):
    return tuple(cast(tok.strip()) for tok in text.split(",") if tok.strip())


def load_config(path=None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from an INI file layered over ``base``.

    Sections are [experiment], [network] and [train]; keys mirror the
    dataclass field names. Unknown keys are rejected to catch typos.
    """
    config = base if base is not None else ExperimentConfig()
    if path is None:
        return config
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    exp_kwargs: dict = {}
    if parser.has_section("experiment"):
        for key, value in parser.items("experiment"):
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError(f"unknown [experiment] key {key!r}")
            if key == "scheme":
                exp_kwargs[key] = value.strip()
            elif key in ("seeds", "hidden_sizes"):
                exp_kwargs[key] = _parse_list(value, int)
            else:
                exp_kwargs[key] = int(value)

    net_kwargs: dict = {}
    spacings = None
    subcarriers = None
    carrier = None
    if parser.has_section("network"):
        for key, value in parser.items("network"):
            if key == "subcarrier_spacings_khz":
                spacings = _parse_list(value, float)
            elif key == "power_levels_dbm":
                net_kwargs["power_levels_dbm"] = _parse_list(value, float)
            elif key in _NETWORK_SCALAR_KEYS:
                parsed = _NETWORK_SCALAR_KEYS[key](value)
                if key == "subcarriers":
                    subcarriers = parsed
                elif key == "carrier_freq_ghz":
                    carrier = parsed
                else:
                    net_kwargs[key] = parsed
            else:
                raise ConfigError(f"unknown [network] key {key!r}")

    base_net = config.network
    if spacings is not None or subcarriers is not None or carrier is not None:
        spacings = spacings if spacings is not None else tuple(
            ch.subcarrier_spacing_hz / 1e3 for ch in base_net.sub_channels
        )
        subcarriers = subcarriers if subcarriers is not None else base_net.sub_channels[0].subcarriers
        carrier = carrier if carrier is not None else base_net.sub_channels[0].carrier_freq_ghz
        net_kwargs["sub_channels"] = tuple(
            SubChannel(index=n, carrier_freq_ghz=carrier,
                       subcarrier_spacing_hz=s * 1e3, subcarriers=subcarriers)
            for n, s in enumerate(spacings)
        )
    network = replace(base_net, **net_kwargs) if net_kwargs else base_net

    train_kwargs = {}
    if parser.has_section("train"):
        for key, value in parser.items("train"):
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"unknown [train] key {key!r}")
            train_kwargs[key] = _TRAIN_KEYS[key](value)
    train = replace(config.train, **train_kwargs) if train_kwargs else config.train

    known_sections = {"experiment", "network", "train"}
    extra = set(parser.sections()) - known_sections
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")

    return replace(config, network=network, train=train, **exp_kwargs)
