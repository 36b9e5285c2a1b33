import logging
import os
import shutil
import tempfile
import unittest
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
from unittest import mock

from occlusion_ae.framework import (
    ConfigError,
    ConfigLoader,
    DataError,
    NumericError,
    OcclusionAEError,
    Registry,
    ShapeError,
    StageRunner,
    TapeError,
    build_dataclass,
    format_run_config,
    get_logger,
    parse_run_config,
    setup_logger,
)
from occlusion_ae.settings import RunConfig, load_run_config, read_run_config, write_resolved


class TempDirTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _clean_env():
    return {k: v for k, v in os.environ.items() if not k.startswith("CONFIG_")}


class TestConfigLayers(TempDirTestCase):

    def setUp(self):
        super().setUp()
        self.env = mock.patch.dict(os.environ, _clean_env(), clear=True)
        self.env.start()

    def tearDown(self):
        self.env.stop()
        super().tearDown()

    def test_packaged_defaults(self):
        config = load_run_config()
        self.assertEqual(config.model.n_points, 256)
        self.assertEqual(config.model.decoder_dim, 3 * config.model.patch_size)
        self.assertEqual(config.train.epochs, 30)
        self.assertEqual(config.data.category_list, ["sphere", "box", "torus", "cylinder", "cone"])
        self.assertTrue(config.probe.standardize)

    def test_profiles_overlay_the_defaults(self):
        full = load_run_config(profile="full")
        self.assertEqual((full.model.groups, full.model.patch_size), (64, 32))
        self.assertEqual((full.model.encoder_dim, full.model.decoder_dim), (384, 96))
        self.assertEqual(full.train.epochs, 300)
        self.assertEqual(full.train.schedule, "cosine")
        toy = load_run_config(profile="toy")
        self.assertEqual(toy.model.groups, 8)
        self.assertEqual(toy.data.n_train, 10)
        with self.assertRaises(ConfigError):
            load_run_config(profile="nope")

    def test_environment_overrides_files(self):
        with mock.patch.dict(os.environ, {"CONFIG_TRAIN__EPOCHS": "7", "CONFIG_MODEL__CENTRALIZE": "false"}):
            config = load_run_config(profile="toy")
        self.assertEqual(config.train.epochs, 7)
        self.assertFalse(config.model.centralize)

    def test_unrelated_environment_variables_are_ignored(self):
        unrelated = {"CONFIG_PATH": "/etc/foo", "CONFIG_OPTIMIZER__LR": "3", "CONFIG_TRAIN": "x",
                     "CONFIG_TRAIN__EPOCHS": "5"}
        with mock.patch.dict(os.environ, unrelated):
            config = load_run_config(profile="toy")
            self.assertEqual(config.train.epochs, 5)
            with mock.patch.dict(os.environ, {"CONFIG_TRAIN__NONSENSE": "1"}):
                with self.assertRaises(ConfigError):
                    load_run_config(profile="toy")
        (self.tmp / "application.yaml").write_text("train:\n  epochs: 3\n")
        with mock.patch.dict(os.environ, {"CONFIG_HOME": "/tmp", "CONFIG_TRAIN__LR": "0.5"}):
            self.assertEqual(ConfigLoader(self.tmp).load_configurations(), {"train": {"epochs": 3, "lr": 0.5}})

    def test_run_file_then_overrides(self):
        run_file = self.tmp / "run.cfg"
        run_file.write_text("[train]\nepochs = 4\nratio = 0.6  # comment\nmodel.groups = 4\n")
        config = load_run_config(profile="toy", config_file=run_file,
                                 overrides=["train.epochs=9", "train.loss=emd"])
        self.assertEqual(config.train.epochs, 9)
        self.assertEqual(config.train.ratio, 0.6)
        self.assertEqual(config.train.loss, "emd")
        self.assertEqual(config.model.groups, 4)

    def test_bad_layers(self):
        with self.assertRaises(ConfigError):
            load_run_config(overrides=["train.epochs"])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=["epochs=3"])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=["train.nonsense=3"])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=["optimizer.lr=3"])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=["train.epochs=three"])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=["model.decoder_dim=40"])
        with self.assertRaises(ConfigError):
            load_run_config(config_file=self.tmp / "absent.cfg")

    def test_missing_base_file(self):
        with self.assertRaises(ConfigError):
            ConfigLoader(self.tmp).load_configurations()

    def test_custom_config_dir(self):
        (self.tmp / "application.yaml").write_text("train:\n  epochs: 3\n")
        (self.tmp / "application-fast.yaml").write_text("train:\n  lr: 0.01\n")
        config = ConfigLoader(self.tmp).load_configurations("fast")
        self.assertEqual(config, {"train": {"epochs": 3, "lr": 0.01}})


class TestRunFile(TempDirTestCase):

    def test_parse(self):
        text = "# run\n[model]\ngroups = 8\n\n[train]\nlr = 1e-3   # peak\ntrain.seed = 4\n"
        self.assertEqual(parse_run_config(text),
                         {"model": {"groups": "8"}, "train": {"lr": "1e-3", "seed": "4"}})

    def test_parse_errors_name_the_line(self):
        with self.assertRaisesRegex(ConfigError, r"run.cfg:2"):
            parse_run_config("[train]\nepochs\n", source="run.cfg")
        with self.assertRaisesRegex(ConfigError, r":1"):
            parse_run_config("epochs = 3\n")
        with self.assertRaises(ConfigError):
            parse_run_config("[]\n")

    def test_format_round_trips(self):
        sections = {"train": {"lr": 0.1, "warmup_epochs": None, "augment_jitter": True, "epochs": 3}}
        self.assertEqual(parse_run_config(format_run_config(sections)),
                         {"train": {"lr": "0.1", "warmup_epochs": "none", "augment_jitter": "true",
                                    "epochs": "3"}})

    def test_resolved_config_round_trips(self):
        with mock.patch.dict(os.environ, _clean_env(), clear=True):
            config = load_run_config(profile="toy", overrides=["train.lr=0.00037", "train.warmup_epochs=none"])
        path = write_resolved(config, self.tmp / "out")
        self.assertEqual(path.name, "resolved.cfg")
        again = read_run_config(path)
        self.assertEqual(again, config)
        self.assertIsNone(again.train.warmup_epochs)
        self.assertEqual(again.train.warmup, 0)
        self.assertEqual(again.to_text(), config.to_text())

    def test_unknown_sections_and_values(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_mapping({"optim": {}})
        with self.assertRaises(ConfigError):
            RunConfig.from_mapping({"train": 3})
        with self.assertRaises(DataError):
            read_run_config(self.tmp / "absent.cfg")


@dataclass
class _Sample:
    count: int = 1
    rate: float = 0.5
    name: str = "x"
    flag: bool = False
    limit: Optional[int] = None

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")


class TestBuildDataclass(unittest.TestCase):

    def test_casts_strings_to_field_types(self):
        built = build_dataclass(_Sample, {"count": "3", "rate": "2", "name": 7, "flag": "yes", "limit": "5"}, "s")
        self.assertEqual(built, _Sample(count=3, rate=2.0, name="7", flag=True, limit=5))
        self.assertIsNone(build_dataclass(_Sample, {"limit": "none"}, "s").limit)
        self.assertEqual(build_dataclass(_Sample, {"count": 4.0}, "s").count, 4)

    def test_rejections(self):
        with self.assertRaisesRegex(ConfigError, r"s\.other"):
            build_dataclass(_Sample, {"other": 1}, "s")
        for values in ({"count": "1.5"}, {"count": True}, {"flag": "maybe"}, {"rate": "fast"}):
            with self.subTest(values=values):
                with self.assertRaises(ConfigError):
                    build_dataclass(_Sample, values, "s")
        with self.assertRaises(ConfigError):
            build_dataclass(_Sample, {"count": -1}, "s")


class TestRegistry(unittest.TestCase):

    def test_register_and_lookup(self):
        registry = Registry("widget")

        @registry.register("a")
        def a():
            return 1

        registry.register("b")(len)
        self.assertIs(registry.get("a"), a)
        self.assertEqual(registry.names(), ["a", "b"])
        self.assertIn("b", registry)
        self.assertEqual(len(registry), 2)
        with self.assertRaisesRegex(ConfigError, "Available: a, b"):
            registry.get("c")
        with self.assertRaises(ConfigError):
            registry.register("a")(len)


def _read_missing(ctx):
    raise DataError("bad file", path="x.bin")


class TestStageRunner(unittest.TestCase):

    def test_stages_share_context_and_stop_on_failure(self):
        runner = StageRunner(quiet=True)
        runner.add_stage("load", lambda ctx: ctx.update(value=2))
        runner.add_stage("double", lambda ctx: ("doubled", {"value": ctx["value"] * 2}))
        runner.add_stage("fail", _read_missing)
        runner.add_stage("after", lambda ctx: "unreachable")
        results = runner.run()
        self.assertEqual([r.success for r in results], [True, True, False, False])
        self.assertEqual(results[1].metrics, {"value": 4})
        self.assertEqual(results[1].message, "doubled")
        self.assertTrue(results[3].skipped)
        self.assertFalse(results[3].executed)
        self.assertTrue(runner.failed)
        self.assertIsInstance(runner.first_exception, DataError)
        self.assertEqual(results[2].name, "fail")

    def test_continue_after_failure(self):
        runner = StageRunner(stop_on_failure=False, quiet=True)
        runner.add_stage("fail", lambda ctx: 1 / 0)
        runner.add_stage("after", lambda ctx: "ran")
        results = runner.run()
        self.assertTrue(results[1].success)
        self.assertIsInstance(runner.first_exception, ZeroDivisionError)


class TestErrors(unittest.TestCase):

    def test_exit_codes(self):
        self.assertEqual(ConfigError("x").exit_code, 1)
        self.assertEqual(DataError("x").exit_code, 2)
        self.assertEqual(NumericError("x").exit_code, 3)
        self.assertEqual(ShapeError("op", (1,), (2,)).exit_code, 3)
        self.assertEqual(TapeError("x").exit_code, 3)
        for cls in (ConfigError, DataError, NumericError, TapeError):
            self.assertTrue(issubclass(cls, OcclusionAEError))

    def test_messages_carry_location(self):
        self.assertEqual(str(DataError("bad", path="a.xyz", line=3)), "a.xyz, line 3: bad")
        self.assertEqual(str(DataError("bad", offset=8)), "byte 8: bad")
        self.assertEqual(str(ShapeError("matmul", (2, 3), (4, 5))), "matmul: incompatible shapes (2, 3) and (4, 5)")
        self.assertEqual(NumericError("nan", parameter="proj.weight").parameter, "proj.weight")


class TestLogger(TempDirTestCase):

    def test_file_handler_and_children(self):
        log_file = self.tmp / "logs" / "run.log"
        root = setup_logger("occlusion_ae.testing", log_file=log_file, level="debug")
        self.assertEqual(root.level, logging.DEBUG)
        get_logger("testing.child").debug("hello from child")
        for handler in root.handlers:
            handler.flush()
        self.assertIn("occlusion_ae.testing.child - DEBUG - hello from child", log_file.read_text())
        setup_logger("occlusion_ae.testing", level="not-a-level")
        self.assertEqual(root.level, logging.INFO)
        self.assertEqual(len(root.handlers), 1)
        for handler in list(root.handlers):
            handler.close()
        root.handlers.clear()


if __name__ == "__main__":
    unittest.main()
