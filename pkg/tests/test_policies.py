import numpy as np
import pytest

from rmbench.datastore import Dataset, Episode, to_relative
from rmbench.errors import (BadTimestep, NoSuccessfulEpisodes, NotTrained)
from rmbench.policies import (EnsembleBuffer, NoiseSchedule, PolicyConfig,
                              PolicyCore, ddpm_forward, ensemble_average,
                              infer, load_policy, make_random_model,
                              save_policy, train)
from rmbench.policies.encoding import FeatureEncoder
from rmbench.rng import make_rng

from conftest import build_small_spec, make_grid_walk

TEACHER_W = np.array([[0.6, -0.3, 0.1],
                      [0.2, 0.5, -0.4],
                      [-0.1, 0.2, 0.3]])


def make_linear_dataset(root, n_episodes=6, t=40, success=True):
    """Actions are a fixed linear map of raw proprio (joint_pos, gripper)."""
    spec = build_small_spec()
    ds = Dataset.create(root, spec)
    rng = np.random.default_rng(7)
    for i in range(n_episodes):
        joints = make_grid_walk(rng, t, 2)
        grip = rng.random((t, 1)).astype(np.float32)
        proprio = np.concatenate([joints, grip], axis=1).astype(np.float64)
        actions = (proprio @ TEACHER_W.T).astype(np.float32)
        ep = Episode(env_spec=spec,
                     channels={"joint_pos_abs": joints,
                               "joint_pos_rel": to_relative(joints),
                               "gripper": grip},
                     actions=actions, seed=i, source="scripted", success=success)
        ds.add_episode(ep)
    return ds


@pytest.fixture
def linear_ds(tmp_path):
    return make_linear_dataset(tmp_path / "lin")


PROPRIO_CFG = PolicyConfig(obs_inputs=("proprio",), hidden=(64, 64), epochs=60)


class TestEncoder:
    def test_point_permutation_invariance(self, tmp_path):
        from rmbench.collect import ScriptedSource, record_dataset
        from rmbench import make_env
        env = make_env("pick_place", max_steps=40)
        ds = record_dataset(env, tmp_path / "d", 2, 0, ScriptedSource)
        cfg = PolicyConfig()
        core = PolicyCore("bc", cfg, ds.env_spec, ds.stats())
        obs = env.reset(5)
        base = core.features_for(obs)
        rng = np.random.default_rng(0)
        for _ in range(20):
            perm = rng.permutation(obs.channels["point_cloud"].shape[0])
            shuffled = dict(obs.channels)
            shuffled["point_cloud"] = obs.channels["point_cloud"][perm]
            obs2 = type(obs)(shuffled)
            assert np.array_equal(base, core.features_for(obs2))

    def test_proprio_only_feature_dim(self, linear_ds):
        core = PolicyCore("bc", PROPRIO_CFG, linear_ds.env_spec, linear_ds.stats())
        assert core.encoder.feature_dim == 3  # joints(2) + gripper(1)

    def test_zero_init_image_branch_gives_zero_features(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("image",))
        enc = FeatureEncoder(linear_ds.env_spec, linear_ds.stats(), cfg,
                             seed=0, zero=True)
        from rmbench.policies.encoding import EncoderInputs
        batch = EncoderInputs(image=np.zeros((2, 256)))  # all-background image
        feat, _ = enc.forward(batch)
        assert feat.shape == (2, 32)
        assert np.all(feat == 0)

    def test_normalization_roundtrip(self, linear_ds):
        core = PolicyCore("bc", PROPRIO_CFG, linear_ds.env_spec, linear_ds.stats())
        rng = np.random.default_rng(0)
        for _ in range(10):
            a = rng.uniform(-2, 2, 3)
            back = core.denormalize_action(core.normalize_action(a))
            assert np.max(np.abs(back - a)) < 1e-6


class TestTraining:
    def test_bc_fits_linear_teacher(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(64, 64), epochs=300)
        model = train(linear_ds, cfg, "bc")
        assert model.loss_trace[-1] < 1e-3

    def test_loss_trace_smoothed_non_increasing(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(64, 64), epochs=200)
        model = train(linear_ds, cfg, "bc")
        trace = np.asarray(model.loss_trace)
        windows = [trace[i:i + 20].mean() for i in range(0, 200, 20)]
        for prev, cur in zip(windows, windows[1:]):
            assert cur <= prev + 1e-8

    def test_act_chunk_padding_repeats_final_action(self):
        from rmbench.policies.models import _chunk_targets
        actions = np.arange(10, dtype=np.float64).reshape(5, 2)
        chunks = _chunk_targets(actions, chunk=3)
        assert chunks.shape == (5, 6)
        # last row: [a4, a4, a4]
        assert np.array_equal(chunks[-1], np.concatenate([actions[-1]] * 3))
        # second-to-last: [a3, a4, a4]
        assert np.array_equal(chunks[-2],
                              np.concatenate([actions[-2], actions[-1], actions[-1]]))

    def test_no_successful_episodes(self, tmp_path):
        ds = make_linear_dataset(tmp_path / "bad", n_episodes=2, success=False)
        with pytest.raises(NoSuccessfulEpisodes):
            train(ds, PROPRIO_CFG, "bc")

    def test_diffusion_improves_over_init_on_held_out(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(64, 64), epochs=60,
                           chunk=4)
        spec, stats = linear_ds.env_spec, linear_ds.stats()
        from rmbench.policies.models import prepare_training_data
        init_core = PolicyCore("diffusion_lite", cfg, spec, stats)
        data = prepare_training_data(linear_ds, cfg, spec, stats, init_core)
        held = np.arange(0, data.n, 7)
        batch = data.inputs.gather(held)
        y = data.chunk_targets[held]
        rng = make_rng(99, 6)
        t = rng.integers(1, cfg.diffusion_steps + 1, size=len(held))
        eps = rng.standard_normal(y.shape)
        loss_init, _ = init_core.loss_and_grads(batch, y, t=t, eps=eps)
        model = train(linear_ds, cfg, "diffusion_lite")
        loss_trained, _ = model.core.loss_and_grads(batch, y, t=t, eps=eps)
        assert loss_trained < loss_init

    def test_training_deterministic(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(16, 16), epochs=5)
        a = train(linear_ds, cfg, "bc")
        b = train(linear_ds, cfg, "bc")
        for pa, pb in zip(a.core.params(), b.core.params()):
            assert np.array_equal(pa, pb)


class TestEnsemble:
    def test_single_chunk_passthrough(self):
        chunk = np.arange(6, dtype=np.float64).reshape(3, 2)
        avg = ensemble_average([(0, chunk)], t=1, decay=0.7)
        assert np.array_equal(avg, chunk[1])

    def test_uniform_weights_at_zero_decay(self):
        c0 = np.zeros((2, 1))
        c1 = np.ones((2, 1))
        avg = ensemble_average([(0, c0), (1, c1)], t=1, decay=0.0)
        assert np.isclose(avg[0], 0.5)

    def test_log2_decay_example(self):
        # weights {1, 0.5}/1.5 -> oldest chunk (predicting 0) dominates
        c_old = np.zeros((2, 1))
        c_new = np.ones((2, 1))
        avg = ensemble_average([(0, c_old), (1, c_new)], t=1, decay=np.log(2))
        assert np.isclose(avg[0], 1.0 / 3.0)

    def test_buffer_capacity_and_reset(self):
        buf = EnsembleBuffer(capacity=3)
        for i in range(5):
            buf.push(np.full((3, 1), float(i)))
            buf.step += 1
        assert len(buf.entries) == 3
        buf.reset()
        assert not buf.entries and buf.step == 0


class TestInference:
    def test_untrained_raises(self, linear_ds):
        core = PolicyCore("bc", PROPRIO_CFG, linear_ds.env_spec, linear_ds.stats())
        from rmbench.policies.models import PolicyModel
        model = PolicyModel("bc", PROPRIO_CFG, linear_ds.env_spec,
                            linear_ds.stats(), core, trained=False)
        with pytest.raises(NotTrained):
            infer(model, None, model.make_buffer(), make_rng(0, 3))

    def test_outputs_clamped_to_action_bounds(self, tmp_path):
        from rmbench.collect import ScriptedSource, record_dataset
        from rmbench import make_env
        env = make_env("pick_place", max_steps=30)
        ds = record_dataset(env, tmp_path / "d", 2, 0, ScriptedSource)
        model = make_random_model("bc", PolicyConfig(), ds.env_spec, ds.stats())
        for p in model.core.head.weights:
            p *= 1e4  # force wild outputs
        obs = env.reset(1)
        act = infer(model, obs, model.make_buffer(), make_rng(1, 3))
        assert np.all(np.abs(act.values[:2]) <= 0.2)
        assert 0.0 <= act.values[2] <= 1.0

    def test_diffusion_sampling_deterministic(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(16, 16), epochs=3,
                           chunk=4)
        model = train(linear_ds, cfg, "diffusion_lite")
        ep = linear_ds.read(0)
        obs_channels = {k: v[0] for k, v in ep.channels.items()}
        from rmbench.core import Observation
        obs = Observation(obs_channels)

        def run():
            buf = model.make_buffer()
            rng = make_rng(42, 3)
            return [infer(model, obs, buf, rng).values for _ in range(6)]

        a, b = run(), run()
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_act_replans_every_step_diffusion_every_chunk(self, linear_ds):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(16, 16), epochs=2,
                           chunk=4)
        ep = linear_ds.read(0)
        from rmbench.core import Observation
        obs = Observation({k: v[0] for k, v in ep.channels.items()})
        act_model = train(linear_ds, cfg, "act_lite")
        buf = act_model.make_buffer()
        rng = make_rng(0, 3)
        for i in range(3):
            infer(act_model, obs, buf, rng)
        assert len(buf.entries) == 3  # one chunk per step
        dif_model = train(linear_ds, cfg, "diffusion_lite")
        buf = dif_model.make_buffer()
        for i in range(4):
            infer(dif_model, obs, buf, rng)
        assert len(buf.entries) == 1  # a single plan covers the chunk


class TestDdpmForward:
    SCHEDULE = NoiseSchedule.from_config(PolicyConfig())

    def test_zero_noise(self):
        x0 = np.full(6, 2.0)
        for t in (1, 25, 50):
            xt = ddpm_forward(x0, t, np.zeros(6), self.SCHEDULE)
            assert np.allclose(xt, np.sqrt(self.SCHEDULE.alpha_bars[t - 1]) * x0)

    def test_monte_carlo_variance(self):
        rng = make_rng(0, 40)
        n = 10_000
        x0 = np.zeros(1)
        for t in (1, 25, 50):
            eps = rng.standard_normal((n, 1))
            xt = ddpm_forward(np.zeros((n, 1)), np.full(n, t, dtype=int), eps,
                              self.SCHEDULE)
            target_var = 1.0 - self.SCHEDULE.alpha_bars[t - 1]
            sample_var = float(np.var(xt))
            se = target_var * np.sqrt(2.0 / (n - 1))
            assert abs(sample_var - target_var) <= 3 * se

    def test_terminal_alpha_bar_is_noise_dominated(self):
        abar = self.SCHEDULE.alpha_bars[-1]
        assert abar < 0.01
        assert 1.0 - abar > 0.99

    def test_bad_timesteps(self):
        with pytest.raises(BadTimestep):
            ddpm_forward(np.zeros(2), 0, np.zeros(2), self.SCHEDULE)
        with pytest.raises(BadTimestep):
            ddpm_forward(np.zeros(2), 51, np.zeros(2), self.SCHEDULE)


class TestSerialization:
    def test_save_load_same_predictions(self, linear_ds, tmp_path):
        cfg = PolicyConfig(obs_inputs=("proprio",), hidden=(16, 16), epochs=5)
        model = train(linear_ds, cfg, "act_lite")
        path = tmp_path / "m.rmbm"
        save_policy(model, path, provenance={"note": "test"})
        loaded = load_policy(path)
        assert loaded.kind == "act_lite"
        assert loaded.trained
        assert loaded.config == cfg
        ep = linear_ds.read(0)
        from rmbench.core import Observation
        obs = Observation({k: v[0] for k, v in ep.channels.items()})
        a = infer(model, obs, model.make_buffer(), make_rng(0, 3))
        b = infer(loaded, obs, loaded.make_buffer(), make_rng(0, 3))
        assert np.array_equal(a.values, b.values)
