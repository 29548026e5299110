import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from jointcycle import config
from jointcycle.errors import TrainingDiverged
from jointcycle.models import TrainConfig
from jointcycle.nn import Parameter
from jointcycle.training import (
    LOSS_COLUMNS,
    Adam,
    AdamW,
    EmaShadow,
    build_state,
    clip_grad_norm,
    ema_update,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train_run,
    train_step,
)
from jointcycle.training.batches import DomainSampler, prefetch


def tiny_config(**overrides):
    cfg = TrainConfig(
        total_iters=4,
        warmup_iters=1,
        batch_size=2,
        image_size=16,
        denoiser_width=8,
        checkpoint_every=2,
        sample_every=100,
        log_every=1,
        seed=3,
    )
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def batches(seed=0, n=2, size=16):
    rng = np.random.default_rng(seed)
    return (
        rng.uniform(-1, 1, (n, 1, size, size)).astype(np.float32),
        rng.uniform(-1, 1, (n, 1, size, size)).astype(np.float32),
    )


def snapshot(net):
    return {k: v.copy() for k, v in net.state_dict().items()}


def changed(before, net):
    return any(not np.array_equal(before[k], v) for k, v in net.state_dict().items())


class TestTrainStep(unittest.TestCase):
    def test_warmup_trains_denoisers_only(self):
        cfg = tiny_config()
        state = build_state(cfg)
        den, g, d = snapshot(state.den_S), snapshot(state.G), snapshot(state.D_T)
        xs, xt = batches()
        report = train_step(xs, xt, state, cfg, 0)
        self.assertEqual(report["phase"], "warmup")
        self.assertGreater(report["dm"], 0.0)
        self.assertEqual(report["adv"], 0.0)
        self.assertTrue(changed(den, state.den_S))
        self.assertFalse(changed(g, state.G))
        self.assertFalse(changed(d, state.D_T))
        self.assertEqual(state.iteration, 1)

    def test_joint_step_updates_everything(self):
        cfg = tiny_config(warmup_iters=0)
        state = build_state(cfg)
        before = {name: snapshot(net) for name, net in state.nets().items()}
        report = train_step(*batches(), state, cfg, 0)
        self.assertEqual(report["phase"], "joint")
        self.assertEqual(set(report), set(LOSS_COLUMNS))
        for name, net in state.nets().items():
            with self.subTest(net=name):
                self.assertTrue(changed(before[name], net))
        for k in ("dm", "adv", "cyc", "idt", "lps", "dcl", "adv_d"):
            self.assertGreater(report[k], 0.0)

    def test_no_joint_trains_denoisers_for_the_whole_budget_first(self):
        cfg = tiny_config(ablations=("no-joint",))
        self.assertEqual((cfg.diffusion_iters, cfg.run_iters), (4, 7))
        state = build_state(cfg)
        self.assertEqual(train_step(*batches(), state, cfg, cfg.total_iters - 1)["phase"], "warmup")
        den, g = snapshot(state.den_T), snapshot(state.G)
        report = train_step(*batches(), state, cfg, cfg.total_iters)
        self.assertEqual(report["phase"], "translator")
        self.assertEqual(report["dm"], 0.0)
        self.assertFalse(changed(den, state.den_T))
        self.assertTrue(changed(g, state.G))

    def test_loss_ablations(self):
        cfg = tiny_config(warmup_iters=0, ablations=("no-lps", "no-dcl"))
        report = train_step(*batches(), build_state(cfg), cfg, 0)
        self.assertEqual(report["lps"], 0.0)
        self.assertEqual(cfg.effective_weights().dcl, 0.0)

    def test_architecture_ablations_run(self):
        for arm in ("no-time", "no-attn", "no-component"):
            with self.subTest(arm=arm):
                cfg = tiny_config(warmup_iters=0, ablations=(arm,))
                report = train_step(*batches(), build_state(cfg), cfg, 0)
                self.assertTrue(np.isfinite(report["total"]))

    def test_same_seed_same_reports(self):
        cfg = tiny_config()
        a, b = build_state(cfg), build_state(cfg)
        for i in range(2):
            xs, xt = batches(i)
            self.assertEqual(train_step(xs, xt, a, cfg, i), train_step(xs, xt, b, cfg, i))

    def test_iteration_out_of_range(self):
        cfg = tiny_config()
        with self.assertRaises(ValueError):
            train_step(*batches(), build_state(cfg), cfg, cfg.total_iters)

    def test_divergence_carries_last_report(self):
        cfg = tiny_config()
        state = build_state(cfg)
        first = train_step(*batches(), state, cfg, 0)
        w = state.den_S.conv_in.weight
        w.assign(np.full(w.shape, np.nan, dtype=w.dtype))
        with self.assertRaises(TrainingDiverged) as ctx:
            train_step(*batches(1), state, cfg, 1)
        self.assertEqual(ctx.exception.last_report, first)


class TestResume(unittest.TestCase):
    def test_checkpoint_reproduces_next_step(self):
        cfg = tiny_config()
        state = build_state(cfg)
        train_step(*batches(0), state, cfg, 0)
        train_step(*batches(1), state, cfg, 1)
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "step_2.ckpt"
            save_checkpoint(path, state)
            resumed = load_checkpoint(path)
        self.assertEqual(resumed.iteration, 2)
        self.assertEqual(resumed.cfg, cfg)
        expected = train_step(*batches(2), state, cfg, 2)
        got = train_step(*batches(2), resumed, cfg, 2)
        self.assertEqual(got, expected)
        for name, net in state.nets().items():
            for k, v in net.state_dict().items():
                assert_array_equal(resumed.nets()[name].state_dict()[k], v)
        for name, shadow in state.ema.items():
            for k, v in shadow.shadow.items():
                assert_array_equal(resumed.ema[name].shadow[k], v)


class TestSchedule(unittest.TestCase):
    def test_endpoints_are_exact(self):
        cfg = tiny_config(total_iters=100, warmup_iters=10)
        self.assertEqual(lr_at(0, cfg)[0], cfg.diffusion_lr_start)
        self.assertEqual(lr_at(100, cfg)[0], cfg.diffusion_lr_end)
        self.assertEqual(lr_at(50, cfg)[1], cfg.translator_lr)

    def test_half_way_is_mean(self):
        cfg = tiny_config(total_iters=100, warmup_iters=10)
        self.assertAlmostEqual(lr_at(50, cfg)[0], (cfg.diffusion_lr_start + cfg.diffusion_lr_end) / 2)

    def test_monotone_decreasing(self):
        cfg = tiny_config(total_iters=50, warmup_iters=10)
        lrs = [lr_at(i, cfg)[0] for i in range(51)]
        self.assertTrue(all(a >= b for a, b in zip(lrs, lrs[1:])))

    def test_out_of_range(self):
        cfg = tiny_config()
        with self.assertRaises(ValueError):
            lr_at(-1, cfg)
        with self.assertRaises(ValueError):
            lr_at(cfg.total_iters + 1, cfg)

    def test_no_joint_tail_holds_the_end_rate(self):
        cfg = tiny_config(total_iters=10, warmup_iters=4, ablations=("no-joint",))
        self.assertEqual(lr_at(cfg.run_iters, cfg)[0], cfg.diffusion_lr_end)
        self.assertEqual(lr_at(12, cfg), (cfg.diffusion_lr_end, cfg.translator_lr))
        with self.assertRaises(ValueError):
            lr_at(cfg.run_iters + 1, cfg)


class TestEma(unittest.TestCase):
    def setUp(self):
        self.state = build_state(tiny_config())

    def test_decay_one_keeps_shadow(self):
        shadow = EmaShadow(self.state.G, decay=1.0)
        before = {k: v.copy() for k, v in shadow.shadow.items()}
        ema_update(shadow, {k: v + 1.0 for k, v in self.state.G.state_dict().items()})
        for k, v in before.items():
            assert_array_equal(shadow.shadow[k], v)

    def test_decay_zero_copies_params(self):
        shadow = EmaShadow(self.state.G, decay=0.0)
        target = {k: v + 1.0 for k, v in self.state.G.state_dict().items()}
        ema_update(shadow, target)
        for k, v in target.items():
            assert_array_equal(shadow.shadow[k], v)

    def test_blend(self):
        shadow = EmaShadow(self.state.G, decay=0.9)
        base = {k: v.copy() for k, v in shadow.shadow.items()}
        ema_update(shadow, {k: v + 1.0 for k, v in base.items()})
        for k, v in base.items():
            assert_allclose(shadow.shadow[k], v + 0.1, rtol=1e-5, atol=1e-6)

    def test_misaligned_params(self):
        shadow = EmaShadow(self.state.G)
        with self.assertRaises(ValueError):
            ema_update(shadow, {"nope": np.zeros(1)})

    def test_applied_restores_weights(self):
        net = self.state.F
        shadow = EmaShadow(net, decay=0.0)
        ema_update(shadow, {k: v * 0.0 for k, v in net.state_dict().items()})
        live = snapshot(net)
        with shadow.applied(net):
            self.assertTrue(all(not np.any(v) for v in net.state_dict().values()))
        for k, v in live.items():
            assert_array_equal(net.state_dict()[k], v)


class TestOptim(unittest.TestCase):
    def test_first_adam_step_moves_by_lr(self):
        p = Parameter(np.array([1.0, -2.0]))
        p.grad = np.array([0.5, -3.0], dtype=np.float32)
        Adam([p], lr=0.1).step()
        assert_allclose(p.data, [0.9, -1.9], rtol=1e-5)

    def test_adamw_decays_weights_without_gradient_coupling(self):
        a, b = Parameter(np.array([1.0])), Parameter(np.array([1.0]))
        a.grad = b.grad = np.array([0.0], dtype=np.float32)
        Adam([a], lr=0.1, weight_decay=0.5).step()
        AdamW([b], lr=0.1, weight_decay=0.5).step()
        assert_allclose(b.data, [0.95], rtol=1e-6)
        assert_allclose(a.data, [0.9], rtol=1e-5)

    def test_skips_params_without_grad(self):
        p = Parameter(np.array([1.0]))
        Adam([p], lr=0.1).step()
        assert_array_equal(p.data, [1.0])

    def test_clip_grad_norm(self):
        a, b = Parameter(np.zeros(1)), Parameter(np.zeros(1))
        a.grad = np.array([3.0], dtype=np.float32)
        b.grad = np.array([4.0], dtype=np.float32)
        self.assertAlmostEqual(clip_grad_norm([a, b], 1.0), 5.0)
        self.assertAlmostEqual(float(np.hypot(a.grad[0], b.grad[0])), 1.0, places=5)

    def test_state_round_trip(self):
        p = Parameter(np.array([1.0, 2.0]))
        opt = Adam([p], lr=0.1)
        p.grad = np.array([1.0, 1.0], dtype=np.float32)
        opt.step()
        other = Adam([Parameter(np.array([1.0, 2.0]))], lr=0.1)
        other.load_state_dict(opt.state_dict())
        self.assertEqual(other.steps, 1)
        assert_array_equal(other.m[0], opt.m[0])


class TestBatches(unittest.TestCase):
    def test_each_epoch_covers_the_domain(self):
        s = DomainSampler(10, 5, seed=1, stream=7)
        seen = np.concatenate([s.indices(0), s.indices(1)])
        self.assertEqual(sorted(seen.tolist()), list(range(10)))

    def test_pure_function_of_iteration(self):
        a, b = DomainSampler(13, 4, 1, 7), DomainSampler(13, 4, 1, 7)
        later = a.indices(9)
        for i in range(9):
            b.indices(i)
        assert_array_equal(b.indices(9), later)

    def test_streams_differ(self):
        self.assertFalse(np.array_equal(DomainSampler(50, 8, 1, 1).indices(0), DomainSampler(50, 8, 1, 2).indices(0)))

    def test_domain_streams_are_uncorrelated(self):
        S = DomainSampler(50, 8, 1, config.SEED_STREAM_S)
        T = DomainSampler(50, 8, 1, config.SEED_STREAM_T)
        a = np.concatenate([S.indices(i) for i in range(500)])
        b = np.concatenate([T.indices(i) for i in range(500)])
        self.assertLess(abs(np.corrcoef(a, b)[0, 1]), 0.1)
        self.assertLess(np.mean(a == b), 0.1)

    def test_prefetch_in_order(self):
        self.assertEqual(list(prefetch(lambda i: i * i, 2, 7, depth=2)), [4, 9, 16, 25, 36])

    def test_prefetch_propagates_errors(self):
        def produce(i):
            if i == 3:
                raise RuntimeError("boom")
            return i

        with self.assertRaises(RuntimeError):
            list(prefetch(produce, 0, 6))


class TestTrainRun(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        rng = np.random.default_rng(0)
        self.data_S = rng.uniform(-1, 1, (5, 1, 16, 16)).astype(np.float32)
        self.data_T = rng.uniform(-1, 1, (5, 1, 16, 16)).astype(np.float32)

    def tearDown(self):
        self._tmp.cleanup()

    def test_same_seed_same_loss_log(self):
        cfg = tiny_config()
        for name in ("a", "b"):
            train_run(cfg, self.root / name, self.data_S, self.data_T, progress=False)
        a = (self.root / "a" / "losses.csv").read_bytes()
        self.assertEqual(a, (self.root / "b" / "losses.csv").read_bytes())
        self.assertEqual(len(a.decode().splitlines()), cfg.total_iters + 1)
        self.assertTrue((self.root / "a" / "checkpoints" / "latest.ckpt").exists())

    def test_resume_matches_uninterrupted_run(self):
        cfg = tiny_config()
        full = train_run(cfg, self.root / "full", self.data_S, self.data_T, progress=False)
        midway = self.root / "full" / "checkpoints" / "step_2.ckpt"
        resumed = train_run(cfg, self.root / "part", self.data_S, self.data_T, resume=midway, progress=False)
        self.assertEqual(resumed.iteration, cfg.total_iters)
        self.assertEqual(
            (self.root / "full" / "losses.csv").read_text().splitlines()[3:],
            (self.root / "part" / "losses.csv").read_text().splitlines()[1:],
        )
        for name, net in full.nets().items():
            for k, v in net.state_dict().items():
                assert_array_equal(resumed.nets()[name].state_dict()[k], v)

    def test_no_joint_gives_denoisers_the_joint_diffusion_budget(self):
        runs = {}
        for arm in ((), ("no-joint",)):
            cfg = tiny_config(ablations=arm, checkpoint_every=100)
            name = arm[0] if arm else "joint"
            state = train_run(cfg, self.root / name, self.data_S, self.data_T, progress=False)
            phases = [line.split(",")[1] for line in (self.root / name / "losses.csv").read_text().splitlines()[1:]]
            runs[name] = (state.opt_diffusion.steps, state.opt_translator.steps, phases)
        cfg = tiny_config()
        self.assertEqual(runs["joint"][:2], (cfg.total_iters, cfg.total_iters - cfg.warmup_iters))
        self.assertEqual(runs["no-joint"][:2], runs["joint"][:2])
        self.assertEqual(runs["joint"][2], ["warmup"] + ["joint"] * 3)
        self.assertEqual(runs["no-joint"][2], ["warmup"] * 4 + ["translator"] * 3)

    def test_rejects_mismatched_images(self):
        with self.assertRaises(ValueError):
            train_run(tiny_config(), self.root, self.data_S[:, :, :8, :8], self.data_T, progress=False)


if __name__ == "__main__":
    unittest.main()
