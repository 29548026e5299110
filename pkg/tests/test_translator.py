import unittest

import numpy as np
from numpy.testing import assert_allclose

from jointcycle.autodiff import Tensor, backward, no_grad
from jointcycle.autodiff import ops
from jointcycle.errors import ShapeError
from jointcycle.models import TRANSLATOR_DEPTHS, TranslatorPreset
from jointcycle.translator import PatchDiscriminator, TranslatorNet, cycle, discriminate, time_embed, translate


def _small(**overrides):
    kw = dict(base_width=8, time_dim=16, heads=2)
    kw.update(overrides)
    return TranslatorPreset.named("desk", **kw)


def _batch(seed=0, shape=(2, 1, 16, 16)):
    return np.random.default_rng(seed).uniform(-1, 1, shape).astype(np.float32)


class TestTranslator(unittest.TestCase):
    def setUp(self):
        self.G = TranslatorNet(_small(), channels=1, seed=1)
        self.F = TranslatorNet(_small(), channels=1, seed=2)

    def test_output_shape_equals_input(self):
        with no_grad():
            out = translate(self.G, _batch(), 0.5)
        self.assertEqual(out.shape, (2, 1, 16, 16))

    def test_single_component(self):
        with no_grad():
            out = translate(self.G, _batch(0, (1, 16, 16)), 0.5)
        self.assertEqual(out.shape, (1, 16, 16))

    def test_size_must_divide_by_downsampling(self):
        with self.assertRaises(ShapeError):
            translate(self.G, _batch(0, (1, 1, 18, 18)), 0.5)

    def test_channel_mismatch(self):
        with self.assertRaises(ShapeError):
            translate(self.G, _batch(0, (1, 3, 16, 16)), 0.5)

    def test_time_out_of_range(self):
        with self.assertRaises(ValueError):
            translate(self.G, _batch(), -0.5)

    def test_time_conditioning_changes_output(self):
        x = _batch(3)
        with no_grad():
            a = translate(self.G, x, 0.1).data
            b = translate(self.G, x, 0.8).data
        self.assertFalse(np.allclose(a, b))

    def test_without_time_output_ignores_t(self):
        net = TranslatorNet(_small(time_conditioned=False, attention=False), channels=1, seed=4)
        x = _batch(3)
        with no_grad():
            assert_allclose(translate(net, x, 0.1).data, translate(net, x, 0.9).data)
        self.assertIsNone(net.time_mlp)
        self.assertIsNone(net.attn)

    def test_time_embed(self):
        emb = time_embed(self.G, 0.25, batch=3)
        self.assertEqual(emb.shape, (3, 16))
        net = TranslatorNet(_small(time_conditioned=False, attention=False), channels=1, seed=4)
        with self.assertRaises(ValueError):
            time_embed(net, 0.25)

    def test_no_attn_keeps_time_mlp(self):
        net = TranslatorNet(_small(attention=False), channels=1, seed=5)
        self.assertIsNone(net.attn)
        self.assertIsNotNone(net.time_mlp)

    def test_cycle_shape(self):
        with no_grad():
            out = cycle(self.F, self.G, _batch(), 0.3)
        self.assertEqual(out.shape, (2, 1, 16, 16))

    def test_gradient_reaches_time_mlp_and_attention(self):
        out = translate(self.G, Tensor(_batch(6)), 0.6)
        backward(ops.mean(ops.square(out)))
        self.assertTrue(any(p.grad is not None for p in self.G.time_mlp.parameters()))
        self.assertTrue(any(p.grad is not None for p in self.G.attn.parameters()))

    def test_depth_presets(self):
        self.assertEqual(TRANSLATOR_DEPTHS["full"], (3, 12, 3))
        self.assertEqual(TRANSLATOR_DEPTHS["desk"], (2, 6, 2))
        for name in ("resnet6", "resnet9", "resnet12"):
            self.assertEqual(TranslatorPreset.named(name).n_res, int(name[6:]))
        net = TranslatorNet(TranslatorPreset.named("full", base_width=8, time_dim=16, heads=2), seed=0)
        self.assertEqual(len(net.trunk), 12)
        self.assertEqual(net.head.weight.shape[-1], 7)

    def test_unknown_preset(self):
        with self.assertRaises(ValueError):
            TranslatorPreset.named("resnet50")


class TestDiscriminator(unittest.TestCase):
    def test_patch_map_shape(self):
        D = PatchDiscriminator(channels=1, n_out=7, seed=0)
        with no_grad():
            out = discriminate(D, _batch(0, (3, 1, 32, 32)))
        self.assertEqual(out.shape, (3, 7, 4, 4))

    def test_too_small_input(self):
        D = PatchDiscriminator(channels=1, seed=0)
        with self.assertRaises(ShapeError):
            discriminate(D, _batch(0, (1, 1, 4, 4)))


if __name__ == "__main__":
    unittest.main()
