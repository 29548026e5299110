import contextlib
import importlib.util
import io
import json
import tempfile
import unittest
from pathlib import Path

from jointcycle.io.artifacts import read_csv, read_kv
from jointcycle.logic import orchestrator

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "joint_cycle.py"


def _load_cli():
    spec = importlib.util.spec_from_file_location("joint_cycle_cli", SCRIPT)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


cli = _load_cli()


def run(*argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = cli.main(["--log-level", "ERROR", *argv])
    text = out.getvalue()
    return code, json.loads(text) if text.strip() else None


class TestParser(unittest.TestCase):
    def test_gen_data_requires_task(self):
        with contextlib.redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as ctx:
            cli.build_parser().parse_args(["gen-data"])
        self.assertEqual(ctx.exception.code, 2)

    def test_rejects_unknown_ablation(self):
        with contextlib.redirect_stderr(io.StringIO()), self.assertRaises(SystemExit):
            cli.build_parser().parse_args(["train", "--ablate", "no-gan"])

    def test_repeated_flags_accumulate(self):
        args = cli.build_parser().parse_args(["train", "--ablate", "no-dcl", "--ablate", "no-lps", "--set", "a=1", "--set", "b=2"])
        self.assertEqual(args.ablate, ["no-dcl", "no-lps"])
        self.assertEqual(args.set, ["a=1", "b=2"])


class TestBlasThreads(unittest.TestCase):
    def test_flag_wins_over_env(self):
        self.assertEqual(cli.blas_threads(["translate", "--threads", "4"], {"JOINTCYCLE_THREADS": "2"}), "4")
        self.assertEqual(cli.blas_threads(["eval", "--threads=3"], {}), "3")

    def test_env_then_default(self):
        self.assertEqual(cli.blas_threads(["train"], {"JOINTCYCLE_THREADS": "2"}), "2")
        self.assertEqual(cli.blas_threads(["train"], {}), "1")


class TestRunConfig(unittest.TestCase):
    def test_precedence_default_file_env_flag(self):
        with tempfile.TemporaryDirectory() as d:
            cfg_file = Path(d) / "cfg.txt"
            cfg_file.write_text("seed=1\nn=6\nthreads=3\n")
            rc = orchestrator.resolve_run_config(
                base={"seed": 0, "n": 5, "threads": 1, "size": 32},
                config_file=cfg_file,
                overrides={"seed": 3, "size": None},
                run_dir=Path(d) / "run",
                environ={"JOINTCYCLE_SEED": "2", "JOINTCYCLE_THREADS": "4"},
            )
        self.assertEqual(rc.values, {"seed": "3", "n": "6", "threads": "4", "size": "32"})
        self.assertEqual(rc.sources["seed"], "flag")
        self.assertEqual(rc.sources["threads"], "env")
        self.assertTrue(rc.sources["n"].startswith("file:"))
        self.assertEqual(rc.sources["size"], "default")

    def test_unknown_key(self):
        with tempfile.TemporaryDirectory() as d:
            with self.assertRaises(ValueError):
                orchestrator.resolve_run_config(base={"seed": 0}, overrides={"sed": 1}, run_dir=Path(d), environ={})

    def test_train_base_follows_preset(self):
        self.assertEqual(orchestrator.train_base("full")["translator_preset"], "full")
        self.assertEqual(orchestrator.train_base(None)["preset"], "desk")


class TestCommands(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_gen_data_is_deterministic(self):
        for name in ("a", "b"):
            code, out = run("gen-data", "--task", "solids-edges", "--n", "4", "--n-eval", "3", "--size", "16", "--seed", "5",
                            "--data-dir", str(self.root / name))
            self.assertEqual(code, 0)
            self.assertEqual(out["n_eval_pairs"], 3)
        a = self.root / "a" / "solids-edges"
        b = self.root / "b" / "solids-edges"
        for rel in ("manifest_S.txt", "manifest_T.txt", "manifest_eval.txt"):
            self.assertEqual((a / rel).read_text(), (b / rel).read_text())
        for p in a.rglob("*.pgm"):
            self.assertEqual(p.read_bytes(), (b / p.relative_to(a)).read_bytes())
        self.assertEqual(read_kv(a / "config.txt")["seed"], "5")

    def test_plot_without_ledger_fails_cleanly(self):
        code, out = run("plot", "--run-dir", str(self.root), "--ledger", str(self.root / "missing.csv"))
        self.assertEqual(code, 2)
        self.assertIsNone(out)

    def test_train_eval_translate_plot(self):
        data = self.root / "data"
        ledger = self.root / "ledger.csv"
        run_dir = self.root / "run"
        code, _ = run("gen-data", "--task", "solids-edges", "--n", "6", "--n-eval", "20", "--size", "16", "--data-dir", str(data))
        self.assertEqual(code, 0)

        settings = ["image_size=16", "batch_size=2", "denoiser_width=8", "warmup_iters=1", "checkpoint_every=1", "log_every=1"]
        code, out = run("train", "--iters", "2", "--threads", "2", "--data-dir", str(data), "--run-dir", str(run_dir), "--quiet",
                        *[a for s in settings for a in ("--set", s)])
        self.assertEqual(code, 0)
        self.assertEqual(out["iteration"], 2)
        self.assertEqual(out["threads"], 2)
        losses = read_csv(run_dir / "losses.csv")
        self.assertEqual([r["phase"] for r in losses], ["warmup", "joint"])
        self.assertTrue((run_dir / "checkpoints" / "step_1.ckpt").exists())
        self.assertEqual(read_kv(run_dir / "config.txt")["total_iters"], "2")

        ckpt = run_dir / "checkpoints" / "latest.ckpt"
        code, out = run("eval", "--checkpoint", str(ckpt), "--manifest", str(data / "solids-edges" / "manifest_eval.txt"),
                        "--steps", "2", "--ledger", str(ledger), "--quiet")
        self.assertEqual(code, 0)
        self.assertEqual(out["meta"]["n"], 20)
        self.assertIsNotNone(out["edge_f1"])
        self.assertTrue((run_dir / "eval" / "report.txt").exists())
        self.assertEqual(len(read_csv(ledger)), 1)

        translated = {}
        for threads in ("1", "3"):
            code, out = run("translate", "--checkpoint", str(ckpt), "--input", str(data / "solids-edges" / "train_S"),
                            "--direction", "T2S", "--steps", "2", "--threads", threads, "--set", "chunk=2",
                            "--run-dir", str(self.root / f"tr{threads}"), "--quiet")
            self.assertEqual(code, 0)
            self.assertEqual(out["threads"], int(threads))
            self.assertEqual(read_kv(self.root / f"tr{threads}" / "config.txt")["threads"], threads)
            self.assertEqual(len(out["outputs"]), 6)
            self.assertTrue(all(p.endswith("_T2S.png") and Path(p).exists() for p in out["outputs"]))
            translated[threads] = [Path(p).read_bytes() for p in out["outputs"]]
        self.assertEqual(translated["1"], translated["3"])

        code, out = run("plot", "--run-dir", str(run_dir), "--ledger", str(ledger))
        self.assertEqual(code, 0)
        self.assertEqual(out["loss_rows"], 2)
        self.assertEqual(out["eval_rows"], 1)
        rows = read_csv(Path(out["files"]["loss_dm"]))
        self.assertEqual([r["step"] for r in rows], ["0", "1"])


if __name__ == "__main__":
    unittest.main()
