"""Ensembles: streams, trajectory accounting, aggregation, dichotomy."""

import math

import numpy as np
import pytest

from critgrowth import (GwiModel, Model, OffspringLaw, SimConfig,
                        dichotomy_probe, perron, run_ensemble,
                        simulate_trajectory, substream, wilson_interval)
from critgrowth.config import canonical_json
from critgrowth.errors import ConfigError


class SeesawModel(Model):
    """Deterministic oscillator for exact accounting tests: alternates
    between x0 and x0 // 10 regardless of randomness."""

    dim = 1
    absorbing = False

    def __init__(self, high=100):
        self.high = high

    def mean_matrix(self):
        return np.array([[1.0]])

    def drift(self, x):
        return np.zeros(1)

    def step(self, x, rng):
        return (np.array([self.high // 10]) if x[0] == self.high
                else np.array([self.high]))

    def describe(self):
        return {"kind": "seesaw", "high": self.high}


def deterministic_one_type():
    return GwiModel(offspring=(OffspringLaw.deterministic([1]),),
                    immigration=OffspringLaw.deterministic([0]))


class TestSimConfig:
    def test_defaults_and_burn_in(self):
        cfg = SimConfig(horizon=1000, n_traj=10, seed=1)
        assert cfg.burn_in == 100
        assert cfg.s == 50.0 and cfg.R == 1e4

    def test_validation(self):
        with pytest.raises(ConfigError):
            SimConfig(horizon=0, n_traj=1, seed=1)
        with pytest.raises(ConfigError):
            SimConfig(horizon=10, n_traj=0, seed=1)
        with pytest.raises(ConfigError):
            SimConfig(horizon=10, n_traj=1, seed=1, s=100.0, R=50.0)
        with pytest.raises(ConfigError):
            SimConfig(horizon=10, n_traj=1, seed=1, burn_in=10)


class TestWilson:
    def test_contains_point_estimate(self):
        for k, n in ((0, 50), (3, 50), (50, 50)):
            lo, hi = wilson_interval(k, n)
            assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_known_value(self):
        lo, hi = wilson_interval(0, 100)
        assert lo == 0.0
        assert hi == pytest.approx(1.96**2 / (100 + 1.96**2), abs=1e-12)


class TestSubstreams:
    def test_streams_are_deterministic_and_distinct(self):
        a = substream(99, 0, 1).random(4)
        b = substream(99, 0, 1).random(4)
        c = substream(99, 0, 2).random(4)
        d = substream(99, 1, 1).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)


class TestSimulateTrajectory:
    def test_deterministic_critical_model_preserves_projection(self):
        model = deterministic_one_type()
        cfg = SimConfig(horizon=200, n_traj=1, seed=5)
        summary = simulate_trajectory(model, np.array([40]), cfg, 0)
        assert summary.final_u == pytest.approx(40.0)
        assert summary.min_u_post == summary.max_u_post == pytest.approx(40.0)
        assert summary.returns_below_s == 0
        assert summary.absorption_time is None

    def test_seesaw_return_counting_is_exact(self):
        # alternates 100, 10, 100, 10, ...; each visit to 10 after burn-in
        # is one crossing into {x.u <= 50}
        model = SeesawModel(high=100)
        cfg = SimConfig(horizon=20, n_traj=1, seed=1, burn_in=4, s=50.0,
                        R=1e4)
        summary = simulate_trajectory(model, np.array([100]), cfg, 0)
        # t=1..20 states: 10,100,10,... (odd t gives 10); crossings into
        # <= 50 at odd t > 4: t = 5,7,...,19
        assert summary.returns_below_s == 8
        assert summary.min_u_post == 10.0
        assert summary.max_u_post == 100.0

    def test_absorption_is_permanent_and_recorded(self, cd_extinct, cd_pd):
        cfg = SimConfig(horizon=4000, n_traj=1, seed=17)
        rng = np.random.default_rng(0)
        assert np.array_equal(cd_extinct.step(np.zeros(2, dtype=np.int64),
                                              rng), np.zeros(2))
        for idx in range(6):
            summary = simulate_trajectory(cd_extinct, np.array([5, 5]), cfg,
                                          idx, pd=cd_pd)
            if summary.absorption_time is not None:
                assert summary.final_u == 0.0
                assert summary.min_u_post == 0.0
                assert all(c == 0 for c in summary.final_state)

    def test_absorbing_model_rejects_zero_start(self, cd_extinct):
        cfg = SimConfig(horizon=10, n_traj=1, seed=1)
        with pytest.raises(ConfigError):
            simulate_trajectory(cd_extinct, np.zeros(2, dtype=np.int64),
                                cfg, 0)

    def test_ceiling_crossing_truncates_and_flags(self, gwi_transient,
                                                  example_pd):
        cfg = SimConfig(horizon=5000, n_traj=1, seed=3, ceiling=200)
        summary = simulate_trajectory(gwi_transient, np.array([60, 60]),
                                      cfg, 0, pd=example_pd)
        assert summary.ceiling_crossed
        assert summary.truncated_at is not None
        assert summary.classify(cfg.s, cfg.R) == "growth"

    def test_overflow_is_flagged_not_silent(self, gwi_recurrent, example_pd):
        cfg = SimConfig(horizon=10, n_traj=1, seed=3, ceiling=2**63 - 1)
        huge = np.array([25 * 10**17, 25 * 10**17], dtype=np.int64)
        model = gwi_recurrent.with_ceiling(2**63 - 1)
        summary = simulate_trajectory(model, huge, cfg, 0, pd=example_pd)
        assert summary.overflowed
        assert summary.truncated_at == 1


class TestRunEnsemble:
    def test_reports_are_bit_identical_across_reruns(self, gwi_recurrent,
                                                     example_pd):
        cfg = SimConfig(horizon=300, n_traj=50, seed=424242)
        a = run_ensemble(gwi_recurrent, np.array([20, 20]), cfg, pd=example_pd)
        b = run_ensemble(gwi_recurrent, np.array([20, 20]), cfg, pd=example_pd)
        assert canonical_json(a.to_dict()) == canonical_json(b.to_dict())

    def test_lockstep_engine_is_also_deterministic(self, cd_survive, cd_pd):
        cfg = SimConfig(horizon=400, n_traj=64, seed=8, engine="lockstep")
        a = run_ensemble(cd_survive, np.array([40, 40]), cfg, pd=cd_pd)
        b = run_ensemble(cd_survive, np.array([40, 40]), cfg, pd=cd_pd)
        assert canonical_json(a.to_dict()) == canonical_json(b.to_dict())

    def test_single_trajectory_reduces_to_simulate_trajectory(
            self, gwi_recurrent, example_pd):
        cfg = SimConfig(horizon=500, n_traj=1, seed=99)
        report, summaries = run_ensemble(gwi_recurrent, np.array([30, 30]),
                                         cfg, pd=example_pd,
                                         keep_summaries=True)
        lone = simulate_trajectory(gwi_recurrent, np.array([30, 30]), cfg, 0,
                                   pd=example_pd)
        assert summaries[0].to_dict() == lone.to_dict()
        assert report.mean_final_u == lone.final_u
        assert report.returns_below_s_median == lone.returns_below_s

    def test_engines_agree_statistically(self, cd_survive, cd_pd):
        x0 = np.array([40, 40])
        frac = {}
        for engine in ("per_trajectory", "lockstep"):
            cfg = SimConfig(horizon=400, n_traj=400, seed=31415,
                            engine=engine)
            frac[engine] = run_ensemble(cd_survive, x0, cfg,
                                        pd=cd_pd).survival_fraction
        p = (frac["per_trajectory"] + frac["lockstep"]) / 2
        se = math.sqrt(max(p * (1 - p), 1e-4) * 2 / 400)
        assert abs(frac["per_trajectory"] - frac["lockstep"]) < 4 * se

    def test_martingale_surface_at_three_horizons(self, gwi_recurrent,
                                                  example_pd):
        # ensemble mean of X_t.u tracks X_0.u + t a.u at t = T/4, T/2, T
        au = float(gwi_recurrent.imm_mean @ example_pd.u)
        x0 = np.array([30, 30])
        for horizon in (100, 200, 400):
            cfg = SimConfig(horizon=horizon, n_traj=2000, seed=2718,
                            engine="lockstep")
            report = run_ensemble(gwi_recurrent, x0, cfg, pd=example_pd)
            predicted = float(x0 @ example_pd.u) + horizon * au
            assert report.mean_final_u_predicted == pytest.approx(predicted)
            assert abs(report.mean_final_u - predicted) \
                < 5 * report.se_final_u

    def test_subcritical_ensemble_dies_out(self):
        # offspring means scaled to 0.9 of critical, no immigration
        def scaled_cell(m1, m2, b):
            return OffspringLaw([[1, 1], [1, 0], [0, 1], [0, 0]],
                                [b, m1 - b, m2 - b, 1 - m1 - m2 + b])
        model = GwiModel(
            offspring=(scaled_cell(0.27, 0.63, 0.1),
                       scaled_cell(0.54, 0.36, 0.15)),
            immigration=OffspringLaw.deterministic([0, 0]))
        assert model.absorbing
        cfg = SimConfig(horizon=2000, n_traj=500, seed=555,
                        engine="lockstep")
        report = run_ensemble(model, np.array([10, 10]), cfg)
        assert report.survival_fraction < 0.01

    def test_absorbing_fractions_sum_to_one(self, cd_extinct, cd_pd):
        cfg = SimConfig(horizon=800, n_traj=300, seed=77, engine="lockstep")
        report, summaries = run_ensemble(cd_extinct, np.array([10, 10]), cfg,
                                         pd=cd_pd, keep_summaries=True)
        extinct = sum(t.absorption_time is not None for t in summaries)
        assert report.survival_fraction == pytest.approx(
            1.0 - extinct / cfg.n_traj)
        lo, hi = report.survival_wilson
        assert lo <= report.survival_fraction <= hi


class TestDichotomyProbe:
    def test_deterministic_model_is_classified_by_its_level(self):
        model = deterministic_one_type()
        cfg = SimConfig(horizon=100, n_traj=20, seed=4, s=50.0, R=1e4)
        probe = dichotomy_probe(model, np.array([40]), cfg)
        assert probe.verdict == "extinct_or_bounded"
        assert probe.bounded_fraction == 1.0
        high = dichotomy_probe(model, np.array([20_000]), cfg)
        assert high.verdict == "growth_observed"
        assert high.growth_fraction == 1.0

    def test_mixed_when_horizon_is_too_short(self, cd_survive, cd_pd):
        # at a short horizon most survivors sit between s and R
        cfg = SimConfig(horizon=300, n_traj=200, seed=21, engine="lockstep")
        probe = dichotomy_probe(cd_survive, np.array([40, 40]), cfg, pd=cd_pd)
        assert probe.mid_fraction > 0.05
        assert probe.verdict == "mixed"

    def test_mixed_fraction_shrinks_with_the_horizon(self, cd_survive,
                                                     cd_pd):
        fractions = []
        for horizon in (500, 1500, 4500):
            cfg = SimConfig(horizon=horizon, n_traj=400, seed=606,
                            s=50.0, R=2000.0, engine="lockstep")
            probe = dichotomy_probe(cd_survive, np.array([40, 40]), cfg,
                                    pd=cd_pd)
            fractions.append(probe.mid_fraction)
        for earlier, later in zip(fractions, fractions[1:]):
            hi = wilson_interval(int(round(earlier * 400)), 400)[1]
            assert later <= hi

    def test_verdicts_stable_across_master_seeds(self, cd_extinct,
                                                 cd_survive, cd_pd):
        for model, expected in ((cd_extinct, {"extinct_or_bounded", "mixed"}),
                                (cd_survive, {"mixed", "growth_observed"})):
            verdicts = set()
            for seed in (1, 2, 3, 4, 5):
                cfg = SimConfig(horizon=1500, n_traj=300, seed=seed,
                                s=50.0, R=2000.0, engine="lockstep")
                verdicts.add(dichotomy_probe(model, np.array([40, 40]), cfg,
                                             pd=cd_pd).verdict)
            assert len(verdicts) == 1, (model.describe()["kind"], verdicts)
            assert verdicts <= expected
