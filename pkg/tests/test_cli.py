import csv
import subprocess
import sys

import pytest

from palqa.cli import (
    EXIT_BACKEND_UNREACHABLE,
    EXIT_BAD_CONFIG,
    EXIT_MISSING_INPUT,
    EXIT_OK,
    main,
    make_backend,
)
from palqa.synthetic import SyntheticBackend

from .util import make_dataset, dataset_to_squad_json

RUN_FILES = ["config.txt", "log.ndjson", "summary.csv", "curve.dat", "curve.png"]


@pytest.fixture
def squad_file(tmp_path):
    path = tmp_path / "tiny.json"
    dataset_to_squad_json(make_dataset(30, seed=50), path)
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestBackendSpec:
    def test_synthetic_with_seed(self):
        backend = make_backend("synthetic:9")
        assert isinstance(backend, SyntheticBackend)
        assert backend.seed == 9

    def test_bad_specs(self):
        from palqa.cli import BackendSpecError

        for spec in ("synthetic:x", "wire:tcp:nohost", "mystery:1"):
            with pytest.raises(BackendSpecError):
                make_backend(spec)


class TestCmdRun:
    def test_pal_smoke_writes_all_files(self, tmp_path, squad_file):
        out = tmp_path / "run"
        code = run_cli(
            "run", "--dataset", squad_file, "--backend", "synthetic:3",
            "--out", out, "--strategy", "pal", "--seed", "11",
        )
        assert code == EXIT_OK
        for name in RUN_FILES:
            assert (out / name).exists(), name
        config = (out / "config.txt").read_text()
        assert "strategy=pal" in config
        assert "rng_seed=11" in config

    def test_missing_dataset_names_path(self, tmp_path, capsys):
        code = run_cli(
            "run", "--dataset", tmp_path / "absent.json",
            "--backend", "synthetic:0", "--out", tmp_path / "o",
        )
        assert code == EXIT_MISSING_INPUT
        assert "absent.json" in capsys.readouterr().err

    def test_invalid_config_distinct_code(self, tmp_path, squad_file):
        bad = tmp_path / "bad.cfg"
        bad.write_text("strategy=nonsense\n")
        code = run_cli(
            "run", "--config", bad, "--dataset", squad_file,
            "--backend", "synthetic:0", "--out", tmp_path / "o",
        )
        assert code == EXIT_BAD_CONFIG

    def test_unreachable_backend_distinct_code(self, tmp_path, squad_file):
        code = run_cli(
            "run", "--dataset", squad_file,
            "--backend", "wire:tcp:127.0.0.1:1", "--out", tmp_path / "o",
        )
        assert code == EXIT_BACKEND_UNREACHABLE

    def test_eval_csv_written_with_auc_line(self, tmp_path, squad_file):
        out = complete_run(tmp_path, squad_file, "confidence")
        lines = (out / "eval.csv").read_text().splitlines()
        assert lines[0] == "checkpoint,f1,em"
        assert lines[-1].startswith("# auc=")

    def test_midrun_death_flushes_partial_outputs(self, tmp_path, squad_file, capsys):
        import pathlib

        script = pathlib.Path(__file__).parent / "dying_server.py"
        out = tmp_path / "dead"
        code = run_cli(
            "run", "--dataset", squad_file,
            "--backend", f"wire:cmd:{sys.executable} {script} 45",
            "--out", out, "--strategy", "confidence",
        )
        assert code == EXIT_BACKEND_UNREACHABLE
        assert "iteration" in capsys.readouterr().err
        assert (out / "summary.csv").exists()
        assert (out / "log.ndjson").exists()

    def test_replay_identical_except_seconds(self, tmp_path, squad_file):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli(
                "run", "--dataset", squad_file, "--backend", "synthetic:5",
                "--out", out, "--strategy", "confidence", "--seed", "2",
            ) == EXIT_OK
            outs.append(out)

        def stable_rows(path):
            with open(path / "summary.csv", newline="") as fh:
                return [row[:-1] for row in csv.reader(fh)]  # drop seconds

        assert stable_rows(outs[0]) == stable_rows(outs[1])
        assert (outs[0] / "curve.dat").read_bytes() == (outs[1] / "curve.dat").read_bytes()


def complete_run(tmp_path, squad_file, strategy, seed=2):
    out = tmp_path / f"run-{strategy}"
    code = run_cli(
        "run", "--dataset", squad_file, "--backend", f"synthetic:{seed}",
        "--out", out, "--strategy", strategy, "--seed", str(seed),
    )
    assert code == EXIT_OK
    return out


class TestCmdCompare:
    def test_four_strategies_one_auc_each(self, tmp_path, squad_file):
        runs = [
            complete_run(tmp_path, squad_file, s)
            for s in ("confidence", "clustering", "diversity", "pal")
        ]
        out = tmp_path / "cmp"
        assert run_cli("compare", *runs, "--out", out) == EXIT_OK
        with open(out / "comparison.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "strategy"
        assert rows[0][-1] == "auc"
        assert [r[0] for r in rows[1:]] == ["confidence", "clustering", "diversity", "pal"]
        for row in rows[1:]:
            float(row[-1])
        assert (out / "comparison.png").exists()

    def test_requires_two_runs(self, tmp_path, squad_file, capsys):
        run = complete_run(tmp_path, squad_file, "random")
        assert run_cli("compare", run, "--out", tmp_path / "c") == EXIT_MISSING_INPUT

    def test_mismatched_grids_error_lists_them(self, tmp_path, squad_file, capsys):
        a = complete_run(tmp_path, squad_file, "random")
        b = tmp_path / "short"
        b.mkdir()
        (b / "config.txt").write_text("strategy=confidence\n")
        (b / "summary.csv").write_text(
            "t,n_labeled,n_unlabeled,f1,em,seconds\n0,1,9,50.0,40.0,0.1\n"
        )
        code = run_cli("compare", a, b, "--out", tmp_path / "c")
        assert code != EXIT_OK
        err = capsys.readouterr().err
        assert "checkpoint grids differ" in err

    def test_published_rows_reproduce_published_aucs(self, tmp_path):
        from .test_metrics import PUBLISHED_ROWS, PUBLISHED_STEPS

        dirs = []
        for strategy, row in PUBLISHED_ROWS.items():
            d = tmp_path / strategy
            d.mkdir()
            (d / "config.txt").write_text(f"strategy={strategy}\n")
            lines = ["t,n_labeled,n_unlabeled,f1,em,seconds"]
            for step, f1 in zip(PUBLISHED_STEPS, row):
                lines.append(f"{step},0,0,{f1},,0.0")
            (d / "summary.csv").write_text("\n".join(lines) + "\n")
            dirs.append(d)
        out = tmp_path / "cmp"
        assert run_cli("compare", *dirs, "--out", out) == EXIT_OK
        with open(out / "comparison.csv", newline="") as fh:
            rows = {r[0]: r for r in csv.reader(fh)}
        assert rows["confidence"][-1] == "71.3"
        assert rows["clustering"][-1] == "70.5"
        assert rows["diversity"][-1] == "69.7"
        assert rows["pal"][-1] == "72.7"
        assert rows["confidence"][1] == "52.4"

    def test_replay_byte_identical_comparison(self, tmp_path, squad_file):
        csvs = []
        for attempt in ("one", "two"):
            base = tmp_path / attempt
            base.mkdir()
            runs = [
                complete_run(base, squad_file, s) for s in ("confidence", "pal")
            ]
            out = base / "cmp"
            assert run_cli("compare", *runs, "--out", out) == EXIT_OK
            csvs.append((out / "comparison.csv").read_bytes())
        assert csvs[0] == csvs[1]


class TestEntryPoint:
    def test_module_invocation(self, tmp_path, squad_file):
        out = tmp_path / "run"
        proc = subprocess.run(
            [sys.executable, "-m", "palqa.cli", "run", "--dataset", str(squad_file),
             "--backend", "synthetic:0", "--out", str(out), "--strategy", "random"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "summary.csv").exists()
        assert "run complete" in proc.stderr
