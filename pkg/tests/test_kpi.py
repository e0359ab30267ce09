import dataclasses

import numpy as np
import pytest

from ranopt import kpi
from ranopt.kpi import (KpiConfig, compose_kpis, manifest_sha256, manifest_text,
                        reward_throughput, reward_ue_gap)
from ranopt.sim import SchedulerOption, TickObservables


def make_obs(n=4, **overrides):
    base = dict(
        demand_mb=np.zeros(n),
        served_mb=np.zeros(n),
        queue_after_mb=np.zeros(n),
        ue_throughput_mbps=np.zeros(n),
        cell_throughput_mbps=0.0,
        spectral_eff=np.zeros(n),
        rsrp_dbm=np.full(n, -100.0),
        prb_allocation=np.zeros(n, dtype=np.int64),
        prb_utilization=0.0,
        active_mask=np.zeros(n, dtype=bool),
        active_ue_count=0,
    )
    base.update(overrides)
    return TickObservables(**base)


def random_obs(rng, n=4):
    served = rng.uniform(0, 2000, n)
    active = rng.random(n) < 0.8
    tput = np.where(active, served / 60.0, 0.0)
    alloc = rng.integers(0, 40, n)
    return make_obs(
        n,
        demand_mb=rng.uniform(0, 8000, n),
        served_mb=np.where(active, served, 0.0),
        queue_after_mb=rng.uniform(0, 50000, n),
        ue_throughput_mbps=tput,
        cell_throughput_mbps=float(tput.sum()),
        spectral_eff=rng.uniform(0.19, 4.4, n),
        rsrp_dbm=rng.uniform(-140, -40, n),
        prb_allocation=alloc,
        prb_utilization=float(min(alloc.sum(), 100)) / 100.0,
        active_mask=active,
        active_ue_count=int(active.sum()),
    )


class TestManifest:
    def test_58_rows(self):
        rows = kpi.build_manifest()
        assert len(rows) == 58
        assert [r[0] for r in rows] == list(range(58))

    def test_group_sizes(self):
        rows = kpi.build_manifest()
        groups = {}
        for _, _, g, _, _ in rows:
            groups[g] = groups.get(g, 0) + 1
        assert groups == {"cell_scalar": 12, "cqi_hist": 15, "rsrp_hist": 8,
                          "rsrq_hist": 8, "ta_hist": 8, "prev_action": 5, "phase": 2}

    def test_shipped_file_matches(self):
        import importlib.resources as resources
        shipped = (resources.files("ranopt") / "data" / "kpi_manifest_v1.csv").read_text()
        assert shipped == manifest_text()

    def test_hash_mismatch_refused(self):
        with pytest.raises(ValueError, match="manifest hash"):
            KpiConfig(manifest_sha256="0" * 64)

    def test_hash_stable(self):
        assert manifest_sha256() == kpi.MANIFEST_SHA256


class TestComposeKpis:
    def test_length_58(self):
        cfg = KpiConfig()
        v = compose_kpis(make_obs(), SchedulerOption.EQUAL_RATE, 0, cfg)
        assert v.values.shape == (58,)
        assert v.manifest_version == "v1"

    def test_zero_tick(self):
        cfg = KpiConfig()
        v = compose_kpis(make_obs(), SchedulerOption.EQUAL_RATE, 0, cfg).values
        assert np.all(v[:12] == 0.0)
        assert np.all(v[12:51] == 0.0)          # all histograms empty
        assert np.array_equal(v[51:56], [1, 0, 0, 0, 0])  # one-hot EQUAL_RATE
        assert v[56] == 0.0 and v[57] == 0.0

    def test_clip_at_bound(self):
        cfg = KpiConfig()
        obs = make_obs(cell_throughput_mbps=cfg.cell_throughput_bound_mbps * 3)
        v = compose_kpis(obs, SchedulerOption.EQUAL_RATE, 0, cfg).values
        assert v[0] == 1.0

    def test_pure_function(self):
        cfg = KpiConfig()
        obs = random_obs(np.random.default_rng(5))
        a = compose_kpis(obs, SchedulerOption.MAXIMUM_C_OVER_I, 17, cfg).values
        b = compose_kpis(obs, SchedulerOption.MAXIMUM_C_OVER_I, 17, cfg).values
        assert np.array_equal(a, b)

    def test_histograms_sum_to_active_count(self):
        cfg = KpiConfig()
        rng = np.random.default_rng(1)
        for _ in range(200):
            obs = random_obs(rng)
            v = compose_kpis(obs, SchedulerOption.EQUAL_RATE, 3, cfg).values
            for sl in (slice(12, 27), slice(27, 35), slice(35, 43), slice(43, 51)):
                assert v[sl].sum() * cfg.n_ues == pytest.approx(obs.active_ue_count)

    def test_prev_action_one_hot(self):
        cfg = KpiConfig()
        for opt in SchedulerOption:
            v = compose_kpis(make_obs(), opt, 0, cfg).values
            expected = np.zeros(5)
            expected[int(opt)] = 1.0
            assert np.array_equal(v[51:56], expected)

    def test_phase_entries(self):
        cfg = KpiConfig()
        v = compose_kpis(make_obs(), SchedulerOption.EQUAL_RATE, 45, cfg).values
        assert v[56] == pytest.approx(0.5)
        assert v[57] == 0.0
        v = compose_kpis(make_obs(), SchedulerOption.EQUAL_RATE, 85, cfg).values
        assert v[57] == 1.0

    def test_fuzzed_range_and_length(self):
        # acceptance-scale fuzz lives in test_acceptance; a fast slice here
        cfg = KpiConfig()
        rng = np.random.default_rng(2)
        for _ in range(500):
            v = compose_kpis(random_obs(rng), SchedulerOption(int(rng.integers(5))),
                             int(rng.integers(0, 91)), cfg).values
            assert v.shape == (58,)
            assert np.all(v >= 0.0) and np.all(v <= 1.0)


class TestRewardThroughput:
    def test_zero_traffic(self):
        cfg = KpiConfig()
        assert reward_throughput(make_obs(), "cell_throughput", cfg) == 0.0

    def test_bound_hits_one(self):
        cfg = KpiConfig()
        obs = make_obs(cell_throughput_mbps=cfg.reward_throughput_bound_mbps)
        assert reward_throughput(obs, "cell_throughput", cfg) == 1.0

    def test_clipped_above_bound(self):
        cfg = KpiConfig()
        obs = make_obs(cell_throughput_mbps=cfg.reward_throughput_bound_mbps * 2)
        assert reward_throughput(obs, "cell_throughput", cfg) == 1.0

    def test_modes_proportional(self):
        cfg = KpiConfig()
        obs = make_obs(cell_throughput_mbps=30.0)
        assert reward_throughput(obs, "cell_throughput", cfg) == pytest.approx(
            reward_throughput(obs, "spectrum_efficiency", cfg))

    def test_unknown_mode_raises(self):
        with pytest.raises(ValueError):
            reward_throughput(make_obs(), "bitrate", KpiConfig())


class TestRewardUeGap:
    def test_equal_throughputs_zero(self):
        cfg = KpiConfig()
        obs = make_obs(ue_throughput_mbps=np.full(4, 7.5),
                       active_mask=np.ones(4, dtype=bool), active_ue_count=4)
        assert reward_ue_gap(obs, cfg) == 0.0

    def test_direct_substitution(self):
        cfg = KpiConfig(reward_gap_bound_mbps=10.0)
        obs = make_obs(ue_throughput_mbps=np.array([2.0, 5.0, 3.0, 4.0]),
                       active_mask=np.ones(4, dtype=bool), active_ue_count=4)
        assert reward_ue_gap(obs, cfg) == pytest.approx(-0.3)

    def test_no_active_ues(self):
        assert reward_ue_gap(make_obs(), KpiConfig()) == 0.0

    def test_inactive_ues_excluded(self):
        cfg = KpiConfig()
        obs = make_obs(ue_throughput_mbps=np.array([0.0, 6.0, 6.0, 6.0]),
                       active_mask=np.array([False, True, True, True]), active_ue_count=3)
        assert reward_ue_gap(obs, cfg) == 0.0

    def test_never_positive_and_zero_iff_equal(self):
        cfg = KpiConfig()
        rng = np.random.default_rng(3)
        for _ in range(500):
            obs = random_obs(rng)
            r = reward_ue_gap(obs, cfg)
            assert r <= 0.0
            act = obs.ue_throughput_mbps[obs.active_mask]
            if act.size and not np.isclose(act.max(), act.min()):
                assert r < 0.0

    def test_clipped_at_minus_one(self):
        cfg = KpiConfig(reward_gap_bound_mbps=1.0)
        obs = make_obs(ue_throughput_mbps=np.array([0.0, 50.0, 0.0, 0.0]),
                       active_mask=np.ones(4, dtype=bool), active_ue_count=4)
        assert reward_ue_gap(obs, cfg) == -1.0


class TestSeededRunOrdering:
    def test_throughput_and_gap_reward_ordering(self):
        # same seeded 80-tick run under the two extreme constants
        from ranopt.harness import ExperimentConfig, run_episode
        cfg = ExperimentConfig()
        maxci = run_episode(cfg, 0, constant_action=SchedulerOption.MAXIMUM_C_OVER_I)
        eq = run_episode(cfg, 0, constant_action=SchedulerOption.EQUAL_RATE)
        assert maxci.mean_reward > eq.mean_reward
        gap_cfg = ExperimentConfig(reward_mode="ue_gap")
        maxci_g = run_episode(gap_cfg, 0, constant_action=SchedulerOption.MAXIMUM_C_OVER_I)
        eq_g = run_episode(gap_cfg, 0, constant_action=SchedulerOption.EQUAL_RATE)
        assert eq_g.mean_reward > maxci_g.mean_reward
