import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal
from scipy import ndimage

from jointcycle import config
from jointcycle.data_sources.manifests import (
    load_domain,
    load_pairs,
    make_paired_eval,
    make_unpaired_split,
    manifest_path,
    read_manifest,
    stream_seeds,
)
from jointcycle.data_sources.shapes import (
    check_inside,
    coverage,
    gen_edge,
    gen_solid,
    gen_textured,
    render,
    spec_for_seed,
)
from jointcycle.errors import ManifestError
from jointcycle.models import ShapeSpec


def _spec(**overrides):
    kw = dict(kind="rectangle", cx=0.5, cy=0.5, half_w=0.25, half_h=0.25, rotation=0.0, intensity=0.8, background=-0.8)
    kw.update(overrides)
    return ShapeSpec(**kw)


class TestShapes(unittest.TestCase):
    def test_solid_range_and_shape(self):
        for seed in range(20):
            img = gen_solid(spec_for_seed(seed), 32)
            self.assertEqual(img.shape, (1, 32, 32))
            self.assertEqual(img.dtype, np.float32)
            self.assertGreaterEqual(img.min(), -1.0)
            self.assertLessEqual(img.max(), 1.0)

    def test_axis_aligned_square_is_exact(self):
        img = gen_solid(_spec(), 16)[0]
        assert_array_equal(img[4:12, 4:12], np.full((8, 8), 0.8, dtype=np.float32))
        self.assertEqual(img[0, 0], np.float32(-0.8))
        self.assertAlmostEqual(float(coverage(_spec(), 16).sum()), 64.0)

    def test_edge_is_binary_boundary(self):
        img = gen_edge(_spec(), 16)[0]
        self.assertEqual(set(np.unique(img).tolist()), {-1.0, 1.0})
        edge = img > 0
        self.assertEqual(int(edge.sum()), 28)
        self.assertFalse(edge[5:11, 5:11].any())

    def test_edge_shares_the_solid_geometry(self):
        spec = spec_for_seed(7)
        solid = gen_solid(spec, 32)[0]
        edge = gen_edge(spec, 32)[0] > 0
        mid = (spec.intensity + spec.background) / 2
        self.assertTrue(np.all((solid[edge] - mid) * np.sign(spec.intensity - spec.background) > -1e-6))

    def test_edges_stay_sparse(self):
        for seed in range(200):
            with self.subTest(seed=seed):
                frac = float(np.mean(gen_edge(spec_for_seed(seed), 32) > 0))
                self.assertGreater(frac, 0.0)
                self.assertLess(frac, 0.3)

    def test_rectangle_edge_matches_solid_boundary(self):
        for rotation in (0.0, 0.3, 0.9):
            with self.subTest(rotation=rotation):
                spec = _spec(half_w=0.22, half_h=0.15, rotation=rotation)
                mask = gen_solid(spec, 32)[0] >= (spec.intensity + spec.background) / 2
                boundary = mask & ~ndimage.binary_erosion(mask, structure=np.ones((3, 3), dtype=bool))
                edge = gen_edge(spec, 32)[0] > 0
                iou = np.sum(edge & boundary) / np.sum(edge | boundary)
                self.assertGreaterEqual(iou, 0.8)

    def test_dark_palette_inverts_bright(self):
        spec = spec_for_seed(3)
        assert_array_equal(gen_textured(spec, 32, "dark"), -gen_textured(spec, 32, "bright"))

    def test_degenerate_shape_is_empty(self):
        img = gen_solid(_spec(half_w=0.0), 16)
        assert_array_equal(img, np.full((1, 16, 16), -0.8, dtype=np.float32))

    def test_rejects_bad_inputs(self):
        with self.assertRaises(ValueError):
            check_inside(_spec(cx=0.9))
        with self.assertRaises(ValueError):
            gen_solid(_spec(), 8)
        with self.assertRaises(ValueError):
            render("sketch", _spec(), 16)
        with self.assertRaises(ValueError):
            gen_textured(_spec(), 16, "neon")
        with self.assertRaises(ValueError):
            _spec(intensity=-0.7).validate()

    def test_same_seed_same_image(self):
        for kind in ("solid", "edge", "bright", "dark"):
            with self.subTest(domain=kind):
                assert_array_equal(render(kind, spec_for_seed(11), 32), render(kind, spec_for_seed(11), 32))


class TestManifests(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_stream_seeds_are_disjoint(self):
        a = set(stream_seeds(0, 1_000_003, 1000))
        b = set(stream_seeds(0, 2_000_003, 1000))
        c = set(stream_seeds(1, 1_000_003, 1000))
        self.assertFalse(a & b)
        self.assertFalse(a & c)
        with self.assertRaises(ValueError):
            stream_seeds(0, 1, -1)

    def test_domain_streams_are_uncorrelated(self):
        n = 1000
        fields = ("cx", "cy", "half_w", "half_h", "rotation", "intensity", "background")
        specs_S = [spec_for_seed(s) for s in stream_seeds(0, config.SEED_STREAM_S, n)]
        specs_T = [spec_for_seed(s) for s in stream_seeds(0, config.SEED_STREAM_T, n)]
        for name in fields:
            with self.subTest(field=name):
                a = np.array([getattr(s, name) for s in specs_S])
                b = np.array([getattr(s, name) for s in specs_T])
                self.assertLess(abs(np.corrcoef(a, b)[0, 1]), 0.15)

    def test_unpaired_split_round_trips(self):
        S, T = make_unpaired_split(5, 4, seed=2, data_dir=self.root, size=16)
        self.assertEqual((S.count, T.count), (5, 4))
        self.assertFalse(S.seeds & T.seeds)
        back = read_manifest(manifest_path(self.root, "solids-edges", "S"))
        self.assertEqual(back, S)
        imgs = load_domain(manifest_path(self.root, "solids-edges", "T"))
        self.assertEqual(imgs.shape, (4, 1, 16, 16))
        self.assertEqual(set(np.unique(imgs).tolist()), {-1.0, 1.0})

    def test_generation_is_deterministic(self):
        a, b = self.root / "a", self.root / "b"
        make_unpaired_split(3, 3, seed=9, task="bright-dark", data_dir=a, size=16)
        make_unpaired_split(3, 3, seed=9, task="bright-dark", data_dir=b, size=16)
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        self.assertTrue(files)
        for rel in files:
            self.assertEqual((a / rel).read_bytes(), (b / rel).read_bytes())

    def test_paired_eval(self):
        m = make_paired_eval(3, seed=1, data_dir=self.root, size=16, fmt=".raw")
        self.assertFalse(m.for_training)
        src, tgt, back = load_pairs(manifest_path(self.root, "solids-edges", "eval"))
        self.assertEqual(src.shape, (3, 1, 16, 16))
        self.assertEqual(tgt.shape, (3, 1, 16, 16))
        assert_array_equal(src[0], gen_solid(spec_for_seed(back.entries[0].seed), 16))

    def test_eval_seeds_never_overlap_training(self):
        S, T = make_unpaired_split(20, 20, seed=4, data_dir=self.root, size=16)
        E = make_paired_eval(20, seed=4, data_dir=self.root, size=16)
        self.assertFalse(E.seeds & (S.seeds | T.seeds))

    def test_training_manifest_is_not_a_pair_set(self):
        make_unpaired_split(2, 2, seed=0, data_dir=self.root, size=16)
        with self.assertRaises(ManifestError):
            load_pairs(manifest_path(self.root, "solids-edges", "S"))

    def test_missing_and_malformed(self):
        with self.assertRaises(ManifestError):
            read_manifest(self.root / "nope.txt")
        bad = self.root / "bad.txt"
        bad.write_text("# domain=S\n# task=solids-edges\n# seed=0\nonly_a_path\n")
        with self.assertRaises(ManifestError):
            read_manifest(bad)
        missing = self.root / "missing.txt"
        missing.write_text("# domain=S\n# task=solids-edges\n# seed=0\nx.pgm 1 S\n")
        with self.assertRaises(ManifestError):
            load_domain(missing)

    def test_bad_task_and_format(self):
        with self.assertRaises(ValueError):
            make_unpaired_split(1, 1, seed=0, task="cats-dogs", data_dir=self.root)
        with self.assertRaises(ValueError):
            make_unpaired_split(1, 1, seed=0, data_dir=self.root, fmt=".jpg")


if __name__ == "__main__":
    unittest.main()
