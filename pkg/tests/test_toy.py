import math

import numpy as np
import pytest
from scipy import stats

from tempoloc.intervals import Event, EventList, TimeInterval
from tempoloc.metrics import MatchConfig, eb_f1, iou
from tempoloc.rewards import RewardConfig
from tempoloc.rng import derive_rng
from tempoloc.toy import (
    HELDOUT_EPISODE_BASE,
    TARGET_LABEL,
    EnvConfig,
    PolicyParams,
    TrainingDivergedError,
    _HeldoutSet,
    env_sample,
    features,
    init_policy,
    logprob_grad,
    policy_act,
    train,
)


class TestEnvSample:
    def test_deterministic(self):
        cfg = EnvConfig(seed=9)
        a, b = env_sample(cfg, 12), env_sample(cfg, 12)
        assert a.target == b.target
        assert np.array_equal(a.saliency, b.saliency)

    def test_noiseless_rectangular_bump(self):
        cfg = EnvConfig(seed=3, noise_std=0.0)
        obs = env_sample(cfg, 0)
        values = set(np.round(obs.saliency, 12))
        assert values == {1.0, 1.0 + cfg.saliency_snr}
        centers = (np.arange(obs.saliency.size) + 0.5) / cfg.frame_rate
        inside = (centers >= obs.target.onset) & (centers <= obs.target.offset)
        assert np.array_equal(obs.saliency > 2.0, inside)

    def test_target_respects_bounds(self):
        cfg = EnvConfig(seed=5)
        for episode in range(50):
            target = env_sample(cfg, episode).target
            assert 0.0 <= target.onset <= target.offset <= cfg.clip_duration
            assert cfg.min_event_len <= target.length <= cfg.max_event_len

    def test_episode_streams_differ(self):
        differing = sum(
            env_sample(EnvConfig(seed=s), 0).target != env_sample(EnvConfig(seed=s), 1).target
            for s in range(1000)
        )
        assert differing == 1000

    def test_heldout_episodes_disjoint_from_training(self):
        cfg = EnvConfig(seed=7)
        train_obs = env_sample(cfg, 0)
        heldout_obs = env_sample(cfg, HELDOUT_EPISODE_BASE)
        assert train_obs.target != heldout_obs.target


class TestFeatures:
    def test_crossings_track_boundaries_when_noiseless(self):
        cfg = EnvConfig(seed=11, noise_std=0.0)
        obs = env_sample(cfg, 4)
        centroid, first, last = features(obs) * cfg.clip_duration
        frame = 1.0 / cfg.frame_rate
        assert abs(first - obs.target.onset) <= frame
        assert abs(last - obs.target.offset) <= frame
        assert obs.target.onset - frame <= centroid <= obs.target.offset + frame

    def test_features_are_clip_fractions(self):
        obs = env_sample(EnvConfig(seed=2), 0)
        assert np.all((features(obs) >= 0.0) & (features(obs) <= 1.0))


class TestPolicyAct:
    def test_tiny_std_concentrates_at_mean(self):
        env = EnvConfig(seed=1)
        obs = env_sample(env, 0)
        feats = features(obs)
        params = PolicyParams(
            w_on=(0.0, env.clip_duration, 0.0), b_on=0.0, log_std_on=math.log(1e-3),
            w_off=(0.0, 0.0, env.clip_duration), b_off=0.0, log_std_off=math.log(1e-3),
        )
        mu_on = env.clip_duration * feats[1]
        mu_off = env.clip_duration * feats[2]
        for g in range(20):
            action = policy_act(params, obs, derive_rng(5, "act", g))
            assert abs(action.raw_onset - mu_on) <= 3e-3 * 2
            assert abs(action.raw_offset - mu_off) <= 3e-3 * 2

    def test_bias_only_policy(self):
        env = EnvConfig(seed=1)
        obs = env_sample(env, 0)
        params = PolicyParams(
            w_on=(0.0, 0.0, 0.0), b_on=2.0, log_std_on=math.log(1e-3),
            w_off=(0.0, 0.0, 0.0), b_off=5.0, log_std_off=math.log(1e-3),
        )
        action = policy_act(params, obs, derive_rng(6, "act", 0))
        assert action.interval.onset == pytest.approx(2.0, abs=0.01)
        assert action.interval.offset == pytest.approx(5.0, abs=0.01)

    def test_logprob_matches_independent_density(self):
        env = EnvConfig(seed=1)
        params = init_policy(env)
        for episode in range(10):
            obs = env_sample(env, episode)
            feats = features(obs)
            action = policy_act(params, obs, derive_rng(7, "act", episode))
            mu_on = float(np.dot(params.w_on, feats) + params.b_on)
            mu_off = float(np.dot(params.w_off, feats) + params.b_off)
            want = stats.norm.logpdf(
                action.raw_onset, mu_on, math.exp(params.log_std_on)
            ) + stats.norm.logpdf(action.raw_offset, mu_off, math.exp(params.log_std_off))
            assert action.logprob == pytest.approx(want, abs=1e-9)

    def test_clamp_and_swap(self):
        env = EnvConfig(seed=1)
        obs = env_sample(env, 0)
        params = PolicyParams(
            w_on=(0.0, 0.0, 0.0), b_on=15.0, log_std_on=math.log(1e-3),
            w_off=(0.0, 0.0, 0.0), b_off=-3.0, log_std_off=math.log(1e-3),
        )
        action = policy_act(params, obs, derive_rng(8, "act", 0))
        assert action.interval == TimeInterval(0.0, env.clip_duration)
        assert action.raw_onset > action.raw_offset


def random_params(rng):
    return PolicyParams(
        w_on=tuple(rng.normal(0, 3, 3)),
        b_on=float(rng.normal(0, 2)),
        log_std_on=float(rng.uniform(math.log(0.1), math.log(2.0))),
        w_off=tuple(rng.normal(0, 3, 3)),
        b_off=float(rng.normal(0, 2)),
        log_std_off=float(rng.uniform(math.log(0.1), math.log(2.0))),
    )


class TestLogprobGrad:
    def test_matches_central_finite_differences(self):
        env = EnvConfig(seed=13)
        rng = derive_rng(13, "gradcheck")
        h = 1e-5
        for trial in range(100):
            params = random_params(rng)
            obs = env_sample(env, int(rng.integers(0, 1000)))
            action = policy_act(params, obs, derive_rng(13, "gradact", trial))
            grad = logprob_grad(params, obs, action)
            feats = features(obs)

            def logprob_at(vec):
                p = PolicyParams.from_vector(vec, max_std=env.clip_duration)
                mu_on = float(np.dot(p.w_on, feats) + p.b_on)
                mu_off = float(np.dot(p.w_off, feats) + p.b_off)
                return stats.norm.logpdf(
                    action.raw_onset, mu_on, math.exp(p.log_std_on)
                ) + stats.norm.logpdf(action.raw_offset, mu_off, math.exp(p.log_std_off))

            vec = params.to_vector()
            for i in range(vec.size):
                step = np.zeros(vec.size)
                step[i] = h
                fd = (logprob_at(vec + step) - logprob_at(vec - step)) / (2 * h)
                assert abs(grad[i] - fd) <= 1e-4 * max(1.0, abs(grad[i]), abs(fd))

    def test_mean_gradients_vanish_at_mean_action(self):
        env = EnvConfig(seed=1)
        obs = env_sample(env, 0)
        params = init_policy(env)
        feats = features(obs)
        mu_on = float(np.dot(params.w_on, feats) + params.b_on)
        mu_off = float(np.dot(params.w_off, feats) + params.b_off)
        action_at_mean = policy_act(params, obs, derive_rng(0, "x", 0))
        object.__setattr__(action_at_mean, "raw_onset", mu_on)
        object.__setattr__(action_at_mean, "raw_offset", mu_off)
        grad = logprob_grad(params, obs, action_at_mean)
        assert np.allclose(grad[0:4], 0.0, atol=1e-12)
        assert np.allclose(grad[5:9], 0.0, atol=1e-12)
        # log-std gradient at the mean is exactly -1 per dimension
        assert grad[4] == pytest.approx(-1.0, abs=1e-12)
        assert grad[9] == pytest.approx(-1.0, abs=1e-12)


class TestHeldoutEval:
    def test_matches_metrics_module(self):
        env = EnvConfig(seed=21)
        heldout = _HeldoutSet(env, n_clips=40)
        params = init_policy(env)
        got_miou, got_ebf1 = heldout.evaluate(params, collar=0.2)

        ious, hits = [], []
        cfg = MatchConfig(collar=0.2)
        for i in range(40):
            obs = env_sample(env, HELDOUT_EPISODE_BASE + i)
            feats = features(obs)
            mu_on = float(np.dot(params.w_on, feats) + params.b_on)
            mu_off = float(np.dot(params.w_off, feats) + params.b_off)
            mu_on = min(max(mu_on, 0.0), env.clip_duration)
            mu_off = min(max(mu_off, 0.0), env.clip_duration)
            if mu_on > mu_off:
                mu_on, mu_off = mu_off, mu_on
            pred = TimeInterval(mu_on, mu_off)
            ious.append(iou(pred, obs.target))
            report = eb_f1(
                EventList("c", env.clip_duration, (Event(TARGET_LABEL, pred),)),
                EventList("c", env.clip_duration, (Event(TARGET_LABEL, obs.target),)),
                cfg,
            )
            hits.append(report.eb_f1)
        assert got_miou == pytest.approx(np.mean(ious), abs=1e-12)
        assert got_ebf1 == pytest.approx(np.mean(hits), abs=1e-12)


class TestTrain:
    def test_zero_lr_is_a_no_op(self):
        env = EnvConfig(seed=4)
        report = train(None, env, RewardConfig(), iterations=30, lr=0.0)
        assert report.final_heldout_miou == report.initial_heldout_miou
        assert report.final_heldout_ebf1 == report.initial_heldout_ebf1

    def test_deterministic_reports(self):
        env = EnvConfig(seed=4)
        a = train(None, env, RewardConfig(), iterations=40, lr=0.001)
        b = train(None, env, RewardConfig(), iterations=40, lr=0.001)
        assert a == b
        assert a.to_json() == b.to_json()
        assert a.to_csv() == b.to_csv()

    def test_fusion_fires_exactly_on_constant_main_reward(self):
        env = EnvConfig(seed=4)
        report = train(None, env, RewardConfig(), iterations=60, lr=0.001)
        group = RewardConfig().group_size
        for i in range(report.iterations):
            constant_main = (
                abs(report.mean_r_main[i] - 0.0) < 1e-12
                or abs(report.mean_r_main[i] - 1.0) < 1e-12
            )
            if constant_main:
                # mean 0 or 1 forces an all-equal binary group
                assert report.used_fusion[i] == 1.0
        assert report.used_fusion_rate == pytest.approx(
            sum(report.used_fusion) / report.iterations
        )

    def test_main_only_never_fuses_and_degenerates_more(self):
        env = EnvConfig(seed=4)
        adaptive = train(None, env, RewardConfig(), iterations=400, lr=0.001)
        main_only = train(None, env, RewardConfig(), iterations=400, lr=0.001, mode="main_only")
        assert main_only.used_fusion_rate == 0.0
        assert adaptive.used_fusion_rate > 0.0
        assert main_only.zero_advantage_fraction > adaptive.zero_advantage_fraction

    def test_main_only_degeneration_accounting(self):
        # Single-event clips make the per-rollout main reward binary, so a
        # group is constant exactly when its mean is 0 or 1; every such group
        # must be recorded as a zero-advantage (no-learning) update.
        env = EnvConfig(seed=4)
        report = train(None, env, RewardConfig(), iterations=300, lr=0.001, mode="main_only")
        constant_groups = 0
        for mean, zero in zip(report.mean_r_main, report.zero_adv):
            constant = mean in (0.0, 1.0)
            assert zero == (1.0 if constant else 0.0)
            constant_groups += constant
        assert constant_groups > 0

    def test_adaptive_recovers_constant_hit_groups(self):
        # Groups where every rollout hits the collar (mean main reward 1)
        # must recover a nonzero advantage signal through fusion whenever the
        # auxiliary IoUs differ.
        env = EnvConfig(seed=4)
        report = train(None, env, RewardConfig(), iterations=600, lr=0.001)
        recovered = sum(
            1
            for mean, zero, fused in zip(report.mean_r_main, report.zero_adv, report.used_fusion)
            if mean == 1.0 and fused == 1.0 and zero == 0.0
        )
        assert recovered > 0

    def test_absurd_learning_rates_never_yield_non_finite_params(self):
        # Zero-reward plateaus gate the updates, so even absurd rates either
        # trip the divergence guard or come back with finite parameters.
        env = EnvConfig(seed=4)
        for lr in (10.0, 1e4, 1e6):
            try:
                report = train(None, env, RewardConfig(), iterations=100, lr=lr)
            except TrainingDivergedError:
                continue
            assert all(math.isfinite(v) for v in report.final_params)

    def test_report_curves_have_run_length(self):
        env = EnvConfig(seed=4)
        report = train(None, env, RewardConfig(), iterations=25, lr=0.001)
        assert len(report.mean_r_main) == 25
        assert len(report.heldout_miou) == 25
        csv_lines = report.to_csv().splitlines()
        assert csv_lines[0] == (
            "iteration,mean_r_main,mean_r_aux,zero_adv_frac,used_fusion_rate,"
            "heldout_miou,heldout_ebf1"
        )
        assert len(csv_lines) == 26

    def test_learning_signal_windows(self):
        # Smoke-level learning signal over 500-iteration windows: window
        # means never fall by more than converged dither (0.03), and every
        # window clears the initial policy by a real margin.
        passing = 0
        for seed in range(10):
            report = train(None, EnvConfig(seed=seed), RewardConfig(), iterations=1500, lr=0.001)
            windows = [
                float(np.mean(report.heldout_miou[i : i + 500]))
                for i in range(0, 1500, 500)
            ]
            monotone = all(b >= a - 0.03 for a, b in zip(windows, windows[1:]))
            learned = min(windows) >= report.initial_heldout_miou + 0.15
            if monotone and learned:
                passing += 1
        assert passing >= 9
