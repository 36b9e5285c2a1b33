import shutil
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np
import yaml
from numpy.testing import assert_allclose, assert_array_equal

from occlusion_ae.data import (
    AugmentFlags,
    DataConfig,
    DatasetManifest,
    ManifestEntry,
    ShapeSpec,
    augment,
    augment_with_record,
    generate_dataset,
    generate_synthetic,
    io_checkpoint,
    io_pointcloud,
    load_checkpoint,
    load_dataset,
    load_pointcloud,
    sample_surface,
    save_checkpoint,
    save_pointcloud,
    write_dataset,
)
from occlusion_ae.data.io import checksum, decode_checkpoint, encode_checkpoint
from occlusion_ae.framework.errors import ConfigError, DataError
from occlusion_ae.model import ModelWeights
from occlusion_ae.tensor import Tensor

from tests.support import random_cloud, toy_config, toy_weights


class TempDirTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


class TestShapes(unittest.TestCase):

    def test_sphere_points_lie_on_unit_sphere(self):
        for n_points in (256, 255, 101, 3, 2):
            with self.subTest(n_points=n_points):
                cloud = generate_synthetic(ShapeSpec("sphere", {"radius": 0.9}, n_points=n_points), seed=1)
                self.assertEqual(cloud.shape, (n_points, 3))
                norms = np.linalg.norm(cloud.astype(np.float64), axis=1)
                assert_allclose(norms, 1.0, atol=1e-6)

    def test_box_points_lie_on_faces(self):
        cloud = generate_synthetic(ShapeSpec("box", {"size_x": 2.0, "size_y": 2.0, "size_z": 2.0}, n_points=500),
                                   seed=2).astype(np.float64)
        lo, hi = cloud.min(axis=0), cloud.max(axis=0)
        on_face = np.any((np.abs(cloud - lo) <= 1e-6) | (np.abs(cloud - hi) <= 1e-6), axis=1)
        self.assertTrue(on_face.all())

    def test_cylinder_is_area_uniform(self):
        params = {"radius": 0.5, "height": 1.5}
        lateral = 2 * np.pi * 0.5 * 1.5
        p = lateral / (lateral + 2 * np.pi * 0.25)
        counts = [np.sum(sample_surface(ShapeSpec("cylinder", params, n_points=1000), np.random.default_rng(s))[1] == 0)
                  for s in range(10)]
        n = 10 * 1000
        self.assertLessEqual(abs(sum(counts) / n - p), 3 * np.sqrt(p * (1 - p) / n))

    def test_every_category_generates_normalized_clouds(self):
        for category in ("sphere", "box", "torus", "cylinder", "cone"):
            with self.subTest(category=category):
                cloud = generate_synthetic(ShapeSpec(category, n_points=128, jitter=0.01), seed=0)
                self.assertEqual(cloud.shape, (128, 3))
                self.assertLessEqual(np.abs(cloud.astype(np.float64).mean(axis=0)).max(), 1e-6)
                self.assertLessEqual(np.linalg.norm(cloud.astype(np.float64), axis=1).max(), 1.0)

    def test_generation_is_pure_in_seed(self):
        spec = ShapeSpec("torus", n_points=64, jitter=0.02)
        assert_array_equal(generate_synthetic(spec, seed=5), generate_synthetic(spec, seed=5))
        self.assertFalse(np.array_equal(generate_synthetic(spec, seed=5), generate_synthetic(spec, seed=6)))

    def test_invalid_specs(self):
        with self.assertRaises(ConfigError):
            ShapeSpec("pyramid")
        with self.assertRaises(ConfigError):
            ShapeSpec("sphere", {"radius": -1.0})
        with self.assertRaises(ConfigError):
            ShapeSpec("torus", {"major_radius": 0.3, "minor_radius": 0.4})
        with self.assertRaises(ConfigError):
            ShapeSpec("box", {"size_x": 1.0})


class TestAugment(unittest.TestCase):

    def setUp(self):
        self.cloud = random_cloud(50, 3, dtype=np.float64)

    def test_no_flags_is_identity(self):
        assert_array_equal(augment(self.cloud, 1, AugmentFlags()), self.cloud)

    def test_rotation_is_an_isometry(self):
        out = augment(self.cloud, 2, AugmentFlags(rotate=True))
        def pairwise(c):
            return np.linalg.norm(c[:, None] - c[None], axis=-1)
        assert_allclose(pairwise(out), pairwise(self.cloud), atol=1e-6)
        assert_allclose(out[:, 2], self.cloud[:, 2], atol=1e-12)

    def test_scaling_is_invertible_from_record(self):
        out, record = augment_with_record(self.cloud, 3, AugmentFlags(scale=True))
        assert_allclose(out / np.array(record.scale), self.cloud, atol=1e-9)
        self.assertTrue(all(0.8 <= s <= 1.25 for s in record.scale))

    def test_translation_and_jitter_ranges(self):
        out, record = augment_with_record(self.cloud, 4, AugmentFlags(translate=True))
        assert_allclose(out - self.cloud, np.tile(record.shift, (50, 1)), atol=1e-12)
        self.assertTrue(all(-0.1 <= s <= 0.1 for s in record.shift))
        jittered = augment(self.cloud, 4, AugmentFlags(jitter=True))
        self.assertLessEqual(np.abs(jittered - self.cloud).max(), 0.05)

    def test_deterministic_and_dtype_preserving(self):
        flags = AugmentFlags(rotate=True, scale=True, translate=True, jitter=True)
        cloud = random_cloud(20, 1)
        assert_array_equal(augment(cloud, 9, flags), augment(cloud, 9, flags))
        self.assertEqual(augment(cloud, 9, flags).dtype, np.float32)


class TestPointCloudFiles(TempDirTestCase):

    def test_bin_round_trip_is_bitwise(self):
        cloud = random_cloud(1024, 5)
        save_pointcloud(self.tmp / "c.bin", cloud)
        loaded = load_pointcloud(self.tmp / "c.bin")
        self.assertEqual(loaded.dtype, np.float32)
        assert_array_equal(loaded, cloud)
        self.assertEqual((self.tmp / "c.bin").read_bytes()[:4], b"OPC1")
        self.assertEqual(len((self.tmp / "c.bin").read_bytes()), 8 + 12 * 1024)

    def test_xyz_round_trip(self):
        cloud = random_cloud(100, 6)
        save_pointcloud(self.tmp / "c.xyz", cloud)
        assert_allclose(load_pointcloud(self.tmp / "c.xyz"), cloud, atol=1e-6)

    def test_xyz_parsing(self):
        path = self.tmp / "p.xyz"
        path.write_text("# header\n0 0 0\n\n1.5 -2 3e-1  # trailing\n")
        assert_allclose(load_pointcloud(path), [[0, 0, 0], [1.5, -2, 0.3]], rtol=1e-7)

    def test_xyz_errors_name_the_line(self):
        path = self.tmp / "bad.xyz"
        path.write_text("0 0 0\n1 2\n")
        with self.assertRaises(DataError) as ctx:
            load_pointcloud(path)
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn("line 2", str(ctx.exception))
        path.write_text("0 0 zero\n")
        with self.assertRaises(DataError) as ctx:
            load_pointcloud(path)
        self.assertEqual(ctx.exception.line, 1)
        path.write_text("# nothing\n")
        with self.assertRaises(DataError):
            load_pointcloud(path)

    def test_bin_errors_name_the_offset(self):
        path = self.tmp / "bad.bin"
        path.write_bytes(b"OPC1")
        with self.assertRaises(DataError) as ctx:
            load_pointcloud(path)
        self.assertEqual(ctx.exception.offset, 4)
        path.write_bytes(b"XXXX" + struct.pack("<I", 0))
        with self.assertRaises(DataError) as ctx:
            load_pointcloud(path)
        self.assertEqual(ctx.exception.offset, 0)
        path.write_bytes(b"OPC1" + struct.pack("<I", 2) + b"\0" * 12)
        with self.assertRaises(DataError) as ctx:
            load_pointcloud(path)
        self.assertEqual(ctx.exception.offset, 20)
        path.write_bytes(b"OPC1" + struct.pack("<I", 1) + b"\0" * 13)
        with self.assertRaises(DataError) as ctx:
            load_pointcloud(path)
        self.assertEqual(ctx.exception.offset, 20)

    def test_unknown_format_and_missing_file(self):
        with self.assertRaises(DataError):
            save_pointcloud(self.tmp / "c.ply", random_cloud(3))
        with self.assertRaises(DataError):
            load_pointcloud(self.tmp / "absent.bin")

    def test_io_pointcloud_modes(self):
        cloud = random_cloud(10, 7)
        self.assertIsNone(io_pointcloud(self.tmp / "c.dat", "save", fmt="bin", cloud=cloud))
        assert_array_equal(io_pointcloud(self.tmp / "c.dat", "load", fmt="bin"), cloud)
        with self.assertRaises(DataError):
            io_pointcloud(self.tmp / "c.dat", "append", fmt="bin")
        path = self.tmp / "nan.xyz"
        path.write_text("nan 0 0\n")
        with self.assertRaises(DataError):
            io_pointcloud(path, "load")


class TestCheckpoints(TempDirTestCase):

    def test_round_trip_is_bitwise(self):
        weights = toy_weights(toy_config(dtype="float32"), seed=1)
        save_checkpoint(self.tmp / "w.oae", weights)
        loaded = load_checkpoint(self.tmp / "w.oae", template=weights).weights
        self.assertEqual(loaded.names(), weights.names())
        for name in weights:
            self.assertEqual(loaded[name].dtype, np.float32)
            assert_array_equal(loaded[name].values, weights[name].values)
        self.assertEqual(encode_checkpoint(loaded), encode_checkpoint(weights))

    def test_float64_and_scalar_tensors(self):
        weights = ModelWeights({"scale": Tensor(np.array(2.5)), "w": Tensor(np.arange(6.0).reshape(2, 3))})
        loaded = decode_checkpoint(encode_checkpoint(weights))
        self.assertEqual(loaded["scale"].shape, ())
        self.assertEqual(loaded["w"].dtype, np.float64)
        assert_array_equal(loaded["w"].values, weights["w"].values)

    def test_layout(self):
        data = encode_checkpoint(ModelWeights({"a": Tensor(np.array([1.0], dtype=np.float32))}))
        self.assertEqual(data[:4], b"OAE1")
        self.assertEqual(struct.unpack_from("<II", data, 4), (1, 1))
        self.assertEqual(struct.unpack_from("<I", data, 12), (1,))
        self.assertEqual(data[16:17], b"a")
        self.assertEqual(struct.unpack_from("<IQI", data, 17), (1, 1, 0))
        self.assertEqual(struct.unpack_from("<f", data, 33), (1.0,))
        self.assertEqual(struct.unpack_from("<Q", data, 37), (checksum(data[:37]),))
        self.assertEqual(len(data), 45)

    def test_corrupt_byte_fails_checksum(self):
        path = self.tmp / "w.oae"
        save_checkpoint(path, toy_weights())
        data = bytearray(path.read_bytes())
        data[100] ^= 0xFF
        path.write_bytes(bytes(data))
        with self.assertRaises(DataError) as ctx:
            load_checkpoint(path)
        self.assertIn("checksum", str(ctx.exception))

    def test_unknown_dtype_and_truncation(self):
        body = bytearray(encode_checkpoint(ModelWeights({"a": Tensor(np.array([1.0], dtype=np.float32))}))[:-8])
        struct.pack_into("<I", body, 29, 7)
        with self.assertRaises(DataError) as ctx:
            decode_checkpoint(bytes(body) + struct.pack("<Q", checksum(bytes(body))))
        self.assertEqual(ctx.exception.offset, 29)
        short = bytes(body[:-2])
        with self.assertRaises(DataError):
            decode_checkpoint(short + struct.pack("<Q", checksum(short)))
        with self.assertRaises(DataError):
            decode_checkpoint(b"OAE1")

    def test_shape_mismatch_names_the_tensor(self):
        path = self.tmp / "w.oae"
        save_checkpoint(path, toy_weights(toy_config()))
        other = toy_weights(toy_config(encoder_dim=32))
        with self.assertRaises(DataError) as ctx:
            load_checkpoint(path, template=other)
        self.assertIn("patch_embed.fc2.weight", str(ctx.exception))

    def test_strict_and_permissive_name_sets(self):
        path = self.tmp / "w.oae"
        deep = toy_weights(toy_config(encoder_depth=3))
        save_checkpoint(path, toy_weights(toy_config()))
        with self.assertRaises(DataError):
            load_checkpoint(path, template=deep)
        loaded = load_checkpoint(path, template=deep, strict=False)
        self.assertTrue(loaded.missing)
        self.assertTrue(all(name.startswith("encoder.blocks.2.") for name in loaded.missing))
        self.assertEqual(loaded.extra, [])
        self.assertEqual(loaded.weights.names(), deep.names())
        assert_array_equal(loaded.weights["encoder.blocks.2.norm1.weight"].values,
                           deep["encoder.blocks.2.norm1.weight"].values)

        shallow = toy_weights(toy_config(encoder_depth=1))
        loaded = load_checkpoint(path, template=shallow, strict=False)
        self.assertTrue(all(name.startswith("encoder.blocks.1.") for name in loaded.extra))
        self.assertEqual(loaded.weights.names(), shallow.names())

    def test_io_checkpoint(self):
        weights = toy_weights()
        self.assertIsNone(io_checkpoint(self.tmp / "w.oae", "save", weights))
        loaded = io_checkpoint(self.tmp / "w.oae", "load", weights)
        assert_array_equal(loaded["proj.weight"].values, weights["proj.weight"].values)
        with self.assertRaises(DataError):
            io_checkpoint(self.tmp / "w.oae", "save")
        with self.assertRaises(DataError):
            io_checkpoint(self.tmp / "absent.oae", "load")


class TestDataset(TempDirTestCase):

    def setUp(self):
        super().setUp()
        self.config = DataConfig(n_train=10, n_test=5, categories="sphere,box,cone", jitter=0.01)

    def test_balanced_labels_and_sizes(self):
        splits = generate_dataset(self.config, n_points=64, seed=3)
        self.assertEqual(len(splits.train), 10)
        self.assertEqual(len(splits.test), 5)
        assert_array_equal(splits.train.labels, np.arange(10) % 3)
        self.assertEqual(splits.train.classes, ["sphere", "box", "cone"])
        self.assertEqual(splits.train.clouds[0].shape, (64, 3))

    def test_train_split_must_cover_every_class(self):
        with self.assertRaises(ConfigError):
            DataConfig(n_train=2, n_test=1, categories="sphere,box,cone")
        splits = generate_dataset(DataConfig(n_train=3, n_test=1, categories="sphere,box,cone"), n_points=32)
        write_dataset(splits, self.tmp / "small")
        self.assertEqual(len(load_dataset(self.tmp / "small" / "manifest.yaml").test), 1)

    def test_generation_is_seeded(self):
        a = generate_dataset(self.config, n_points=64, seed=3)
        b = generate_dataset(self.config, n_points=64, seed=3)
        for x, y in zip(a.train.clouds + a.test.clouds, b.train.clouds + b.test.clouds):
            assert_array_equal(x, y)
        c = generate_dataset(self.config, n_points=64, seed=4)
        self.assertFalse(np.array_equal(a.train.clouds[0], c.train.clouds[0]))

    def test_written_dataset_loads_back(self):
        splits = generate_dataset(self.config, n_points=64, seed=3)
        for fmt in ("bin", "xyz"):
            with self.subTest(fmt=fmt):
                manifest_path = write_dataset(splits, self.tmp / fmt, fmt=fmt)
                self.assertTrue((self.tmp / fmt / "clouds" / "train" / f"00000.{fmt}").exists())
                loaded = load_dataset(manifest_path)
                assert_array_equal(loaded.test.labels, splits.test.labels)
                for x, y in zip(loaded.train.clouds, splits.train.clouds):
                    assert_allclose(x, y, atol=1e-6)

    def test_seed_only_manifest_regenerates(self):
        splits = generate_dataset(self.config, n_points=64, seed=3)
        path = self.tmp / "manifest.yaml"
        splits.manifest.save(path)
        loaded = load_dataset(path)
        for x, y in zip(loaded.train.clouds, splits.train.clouds):
            assert_array_equal(x, y)

    def test_manifest_validation(self):
        with self.assertRaises(DataError):
            DatasetManifest(["a"], [ManifestEntry(0, "val", seed=1)]).validate()
        with self.assertRaises(DataError):
            DatasetManifest(["a"], [ManifestEntry(1, "train", seed=1)]).validate()
        with self.assertRaises(DataError):
            DatasetManifest(["a"], [ManifestEntry(0, "train")]).validate()
        with self.assertRaises(DataError):
            DatasetManifest(["a"], [ManifestEntry(0, "train", path="x.bin"),
                                    ManifestEntry(0, "test", path="x.bin")]).validate()
        with self.assertRaises(DataError):
            DatasetManifest(["a", "b"], [ManifestEntry(0, "train", seed=1)]).validate()
        DatasetManifest(["a"], [ManifestEntry(0, "train", seed=1), ManifestEntry(0, "test", seed=2)]).validate()

    def test_malformed_manifest_files(self):
        path = self.tmp / "manifest.yaml"
        path.write_text("version: 2\nclasses: [a]\nsamples: []\n")
        with self.assertRaises(DataError):
            DatasetManifest.load(path)
        path.write_text(yaml.safe_dump({"version": 1, "classes": ["a"], "samples": [{"split": "train"}]}))
        with self.assertRaises(DataError):
            DatasetManifest.load(path)
        path.write_text("- just\n- a list\n")
        with self.assertRaises(DataError):
            DatasetManifest.load(path)
        with self.assertRaises(DataError):
            DatasetManifest.load(self.tmp / "absent.yaml")

    def test_subset(self):
        splits = generate_dataset(self.config, n_points=64, seed=3)
        part = splits.train.subset([1, 4])
        assert_array_equal(part.labels, [1, 1])
        assert_array_equal(part.clouds[1], splits.train.clouds[4])


if __name__ == "__main__":
    unittest.main()
