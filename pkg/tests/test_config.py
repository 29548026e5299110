import unittest
from dataclasses import replace

from jointcycle import config
from jointcycle.models import (
    DCLConfig,
    LossWeights,
    SamplerConfig,
    TrainConfig,
    TranslatorPreset,
)


class TestDefaults(unittest.TestCase):
    def test_loss_weights(self):
        self.assertEqual(LossWeights().as_tuple(), (0.05, 1.0, 10.0, 5.0, 0.5, 0.02))

    def test_contrastive_head(self):
        self.assertEqual((DCLConfig().n, DCLConfig().tau, DCLConfig().reshape), (7, 0.1, "pixel"))

    def test_sampler_steps_per_mode(self):
        self.assertEqual(SamplerConfig.for_mode("rgb-rgb").steps, 100)
        self.assertEqual(SamplerConfig.for_mode("cross-modality").steps, 200)
        self.assertEqual(SamplerConfig.for_mode("rgb-rgb", steps=7).steps, 7)
        self.assertAlmostEqual(SamplerConfig(steps=4).step_size, 0.25)
        with self.assertRaises(ValueError):
            SamplerConfig.for_mode("sketch")
        with self.assertRaises(ValueError):
            SamplerConfig.for_mode("rgb-rgb", steps=0)

    def test_full_preset(self):
        cfg = TrainConfig.preset_named("full")
        self.assertEqual(cfg.translator().depth, (3, 12, 3))
        self.assertEqual((cfg.total_iters, cfg.warmup_iters, cfg.batch_size), (100_000, 50_000, 24))
        self.assertEqual(TrainConfig.preset_named("desk"), TrainConfig())
        with self.assertRaises(ValueError):
            TrainConfig.preset_named("huge")

    def test_image_defaults(self):
        self.assertEqual(TrainConfig().image_shape, (config.IMAGE_CHANNELS, 32, 32))


class TestAblations(unittest.TestCase):
    def test_loss_arms_zero_their_weight(self):
        w = TrainConfig(ablations=("no-dcl", "no-lps")).effective_weights()
        self.assertEqual((w.dcl, w.lps), (0.0, 0.0))
        self.assertEqual(w.cyc, 10.0)

    def test_no_time_drops_attention_too(self):
        p = TrainConfig(ablations=("no-time",)).translator()
        self.assertFalse(p.time_conditioned)
        self.assertFalse(p.attention)
        p = TrainConfig(ablations=("no-attn",)).translator()
        self.assertTrue(p.time_conditioned)
        self.assertFalse(p.attention)

    def test_unknown_arm(self):
        with self.assertRaises(ValueError):
            TrainConfig(ablations=("no-gan",)).validate()


class TestFlatForm(unittest.TestCase):
    def test_round_trip(self):
        cfg = replace(
            TrainConfig(),
            seed=17,
            ablations=("no-joint", "no-dcl"),
            weights=LossWeights(cyc=3.5),
            dcl=DCLConfig(n=5, tau=0.25, reshape="column"),
        )
        flat = cfg.to_flat()
        self.assertEqual(flat["ablate"], "no-joint,no-dcl")
        self.assertEqual(flat["lambda_cyc"], "3.5")
        self.assertEqual(TrainConfig.from_flat(flat), cfg)

    def test_partial_override_keeps_base(self):
        cfg = TrainConfig.from_flat({"batch_size": "4", "lambda_adv": "2"}, base=TrainConfig.preset_named("full"))
        self.assertEqual(cfg.batch_size, 4)
        self.assertEqual(cfg.weights.adv, 2.0)
        self.assertEqual(cfg.translator_preset, "full")

    def test_rejects_unknown_and_invalid(self):
        with self.assertRaises(ValueError):
            TrainConfig.from_flat({"learning_rate": "1"})
        with self.assertRaises(ValueError):
            TrainConfig.from_flat({"batch_size": "1"})
        with self.assertRaises(ValueError):
            TrainConfig.from_flat({"warmup_iters": "9000"})
        with self.assertRaises(ValueError):
            TrainConfig.from_flat({"dcl_tau": "0"})


class TestTranslatorPreset(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            TranslatorPreset(n_down=2, n_up=3).validate()
        with self.assertRaises(ValueError):
            TranslatorPreset(time_dim=15).validate()
        with self.assertRaises(ValueError):
            TranslatorPreset(base_width=10, heads=4).validate()


if __name__ == "__main__":
    unittest.main()
