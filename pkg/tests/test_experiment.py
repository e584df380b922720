"""Training orchestration: schedules, metrics files, determinism, CLI plumbing."""

import json
from dataclasses import replace

import numpy as np
import pytest

from fedra import oracle
from fedra.agent import TrainConfig
from fedra.env import ConfigError, NetworkConfig
from fedra.experiment import (
    ExperimentConfig,
    desk_preset,
    load_config,
    load_policies,
    metrics_header,
    paper_preset,
    run_evaluation,
    run_sweep,
    run_training,
    sweep_variant,
)


def tiny_config(scheme="frl_suc", epochs=6, averaging_times=2, **kw):
    """A seconds-scale configuration for orchestration tests."""
    return ExperimentConfig(
        scheme=scheme,
        epochs=epochs,
        averaging_times=averaging_times,
        seeds=(1, 2),
        eval_distributions=2,
        hidden_sizes=(8,),
        network=NetworkConfig(steps_per_epoch=10),
        train=TrainConfig(batch_size=8, replay_capacity=64, target_sync_period=10,
                          anneal_epochs=4, lr=1e-3),
        **kw,
    )


class TestConfig:
    def test_presets_are_valid(self):
        paper = paper_preset()
        assert paper.epochs == 6000
        assert paper.hidden_sizes == (512, 256, 128)
        assert paper.mlp_spec.layer_sizes == (6, 512, 256, 128, 36)
        assert paper.mlp_spec.num_params == 172_452
        desk = desk_preset()
        assert desk.epochs == 2000
        assert desk.hidden_sizes == (64, 32)
        assert len(desk.seeds) == 3

    def test_marl_requires_zero_averaging(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scheme="marl", averaging_times=8)
        ExperimentConfig(scheme="marl", averaging_times=0)

    def test_federated_schemes_require_averaging(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scheme="frl", averaging_times=0)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scheme="ppo")

    def test_averaging_period_must_align_with_target_sync(self):
        # period = (6 // 2) * 10 = 30 steps; sync of 7 does not divide it
        with pytest.raises(ConfigError):
            ExperimentConfig(
                scheme="frl_suc", epochs=6, averaging_times=2,
                network=NetworkConfig(steps_per_epoch=10),
                train=TrainConfig(batch_size=8, replay_capacity=64, target_sync_period=7),
            )
        # sync of 10 divides 30: accepted
        tiny_config(epochs=6, averaging_times=2)

    def test_averaging_schedule_evenly_spaced(self):
        cfg = desk_preset()
        assert cfg.averaging_epochs() == {250, 500, 750, 1000, 1250, 1500, 1750, 2000}
        assert tiny_config().averaging_epochs() == {3, 6}
        assert ExperimentConfig(scheme="marl", averaging_times=0).averaging_epochs() == set()


class TestRunTraining:
    def test_metrics_rows_and_event_count(self):
        cfg = tiny_config()
        result = run_training(cfg, seed=1)
        assert len(result.metrics) == cfg.epochs
        assert len(result.events) == 2
        assert [e.event_index for e in result.events] == [1, 2]

    def test_marl_has_no_events(self):
        result = run_training(tiny_config(scheme="marl", averaging_times=0), seed=1)
        assert result.events == []
        assert result.metrics[-1].c_frl_cum == 0

    def test_comm_cost_counters_match_oracle(self):
        cfg = tiny_config()
        result = run_training(cfg, seed=1)
        net = cfg.network
        dims = [net.obs_dim] * net.num_ues
        sizes = [cfg.mlp_spec.num_params] * net.num_ues
        last = result.metrics[-1]
        assert last.c_crl_cum == oracle.comm_cost_crl(cfg.epochs, net.steps_per_epoch, dims)
        assert last.c_frl_cum == oracle.comm_cost_frl(len(result.events), sizes)
        # counters are cumulative and non-decreasing
        crl = [m.c_crl_cum for m in result.metrics]
        assert crl == sorted(crl)

    def test_success_coefficients_snapshot_into_events(self):
        cfg = tiny_config()
        result = run_training(cfg, seed=3)
        for event in result.events:
            assert event.rule == "success"
            assert len(event.coefficients) == 4
            assert sum(event.coefficients) == pytest.approx(1.0)

    def test_system_ee_consistent_with_reward(self):
        cfg = tiny_config()
        result = run_training(cfg, seed=1)
        for m in result.metrics:
            assert m.system_ee == pytest.approx(m.mean_reward / cfg.network.reward_scale)
            assert m.oracle_ee >= 0.0

    def test_scheme_isolation_prefix_equality(self):
        marl = run_training(tiny_config(scheme="marl", averaging_times=0), seed=5)
        frl = run_training(tiny_config(scheme="frl", averaging_times=2), seed=5)
        # first fusion happens after epoch 3 (1-based), so epochs 0..2 agree
        for a, b in zip(marl.metrics[:3], frl.metrics[:3]):
            assert a.mean_reward == b.mean_reward
            assert a.losses == b.losses
            assert a.etas == b.etas
        assert marl.metrics[3:] != frl.metrics[3:]


class TestRunOutputs:
    def test_output_files_written(self, tmp_path):
        cfg = tiny_config()
        run_training(cfg, seed=1, out_dir=tmp_path)
        assert (tmp_path / "metrics.csv").exists()
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "averaging_log.jsonl").exists()
        for i in range(4):
            assert (tmp_path / f"agent_{i}.fwv").exists()
        assert (tmp_path / "fused_final.fwv").exists()

    def test_metrics_csv_header_and_rows(self, tmp_path):
        cfg = tiny_config()
        run_training(cfg, seed=1, out_dir=tmp_path)
        lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == ",".join(metrics_header(4))
        assert lines[0].split(",") == [
            "epoch", "mean_reward",
            "loss_ue0", "loss_ue1", "loss_ue2", "loss_ue3",
            "eta_ue0", "eta_ue1", "eta_ue2", "eta_ue3",
            "system_ee", "oracle_ee", "c_crl_cum", "c_frl_cum",
        ]
        assert len(lines) == 1 + cfg.epochs

    def test_manifest_echoes_config(self, tmp_path):
        cfg = tiny_config()
        run_training(cfg, seed=7, out_dir=tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["scheme"] == "frl_suc"
        assert manifest["seed"] == 7
        assert manifest["config"]["epochs"] == cfg.epochs
        assert manifest["config"]["network"]["noise_dbm"] == -100.0
        assert manifest["averaging_events"] == 2

    def test_averaging_log_lines(self, tmp_path):
        run_training(tiny_config(), seed=1, out_dir=tmp_path)
        lines = (tmp_path / "averaging_log.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert set(rec) == {"event_index", "rule", "coefficients", "checksums_before",
                            "checksum_after"}

    def test_byte_identical_metrics_same_seed(self, tmp_path):
        cfg = tiny_config()
        run_training(cfg, seed=11, out_dir=tmp_path / "a")
        run_training(cfg, seed=11, out_dir=tmp_path / "b")
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
        run_training(cfg, seed=12, out_dir=tmp_path / "c")
        assert (tmp_path / "a/metrics.csv").read_bytes() != (tmp_path / "c/metrics.csv").read_bytes()

    def test_marl_run_writes_no_fused_model(self, tmp_path):
        run_training(tiny_config(scheme="marl", averaging_times=0), seed=1, out_dir=tmp_path)
        assert not (tmp_path / "fused_final.fwv").exists()


class TestEvaluation:
    def test_policy_ee_bounded_by_oracle_everywhere(self, tmp_path):
        cfg = tiny_config()
        result = run_training(cfg, seed=1, out_dir=tmp_path)
        policies = load_policies(tmp_path, 4)
        report = run_evaluation(policies, cfg, seed=99, eval_distributions=3)
        assert len(report.rows) == 3
        assert report.total_bound_violations == 0
        for row in report.rows:
            assert 0.0 <= row.mean_system_ee <= row.mean_oracle_ee * (1 + 1e-9)
            assert 0.0 <= row.mean_success_rate <= 1.0

    def test_loaded_policies_match_in_memory_agents(self, tmp_path):
        cfg = tiny_config()
        result = run_training(cfg, seed=2, out_dir=tmp_path)
        in_memory = run_evaluation([a.eval_weights for a in result.agents], cfg, seed=5)
        from_disk = run_evaluation(load_policies(tmp_path, 4), cfg, seed=5)
        assert in_memory.mean_system_ee == from_disk.mean_system_ee

    def test_low_noise_override(self):
        cfg = tiny_config()
        result = run_training(cfg, seed=1)
        policies = [a.eval_weights for a in result.agents]
        base = run_evaluation(policies, cfg, seed=42, eval_distributions=2)
        low = run_evaluation(policies, cfg, seed=42, eval_distributions=2, noise_dbm=-110.0)
        # same distributions, quieter channel: the oracle bound can only move up
        assert low.mean_oracle_ee >= base.mean_oracle_ee

    def test_missing_checkpoint_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_policies(tmp_path, 4)

    def test_evaluation_deterministic(self):
        cfg = tiny_config()
        result = run_training(cfg, seed=1)
        policies = [a.eval_weights for a in result.agents]
        a = run_evaluation(policies, cfg, seed=7)
        b = run_evaluation(policies, cfg, seed=7)
        assert [r.mean_system_ee for r in a.rows] == [r.mean_system_ee for r in b.rows]


class TestSweep:
    def test_row_bookkeeping_and_marl_degeneration(self, tmp_path):
        cfg = tiny_config()
        rows = run_sweep(cfg, [0, 2], eval_seed=3, eval_distributions=2, out_dir=tmp_path)
        assert len(rows) == 2 * len(cfg.seeds)
        assert (tmp_path / "sweep.csv").exists()
        assert (tmp_path / "na0_seed1" / "metrics.csv").exists()
        marl_manifest = json.loads((tmp_path / "na0_seed1" / "manifest.json").read_text())
        assert marl_manifest["scheme"] == "marl"
        assert marl_manifest["averaging_events"] == 0

    def test_sweep_variant_contract(self):
        cfg = tiny_config()
        assert sweep_variant(cfg, 0).scheme == "marl"
        assert sweep_variant(cfg, 0).averaging_times == 0
        assert sweep_variant(cfg, 3).scheme == "frl_suc"
        assert sweep_variant(cfg, 3).averaging_times == 3


class TestConfigFile:
    def test_load_config_layers_over_base(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[experiment]\n"
            "scheme = frl\n"
            "epochs = 10\n"
            "averaging_times = 2\n"
            "seeds = 4, 5\n"
            "hidden_sizes = 16, 8\n"
            "[network]\n"
            "noise_dbm = -110\n"
            "steps_per_epoch = 20\n"
            "subcarrier_spacings_khz = 15, 15\n"
            "num_ues = 2\n"
            "[train]\n"
            "lr = 0.01\n"
            "target_sync_period = 40\n"
            "batch_size = 4\n"
        )
        cfg = load_config(path)
        assert cfg.scheme == "frl"
        assert cfg.epochs == 10
        assert cfg.seeds == (4, 5)
        assert cfg.hidden_sizes == (16, 8)
        assert cfg.network.noise_dbm == -110.0
        assert cfg.network.num_ues == 2
        assert cfg.network.num_channels == 2
        assert cfg.train.lr == 0.01

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[swarm]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_no_file_returns_base(self):
        base = desk_preset()
        assert load_config(None, base=base) is base
