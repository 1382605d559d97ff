"""End-to-end tests for the varprog command line, driven through main(argv)."""

import json

import pytest

from varprog.cli.history import read_history, write_history
from varprog.core.config import get_settings
from varprog.main import main
from varprog.schemas.records import IterationRecord
from varprog.services.meanfield import load_snapshot
from varprog.services.model_files import read_qmr

QUICK = ["--iters", "4", "--rollouts", "5", "--elbo-samples", "3"]


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.mark.unit
class TestHistoryCsv:
    """Tests for the history writer."""

    def test_single_record_file(self, tmp_path):
        """GIVEN only the initial record
        WHEN written
        THEN the file has a header and one row"""
        path = tmp_path / "h.csv"
        write_history([IterationRecord(iteration=0, cumulative_samples=0, elbo_mean=-1.5,
                                       elbo_stderr=0.25, direction_norm=0.0)], path)
        assert path.read_text().splitlines() == [
            "iteration,cumulative_samples,elbo_mean,elbo_stderr,direction_norm,wallclock_s",
            "0,0,-1.5,0.25,0,0",
        ]

    def test_values_survive_parsing(self, tmp_path):
        """GIVEN records with awkward floats
        WHEN written and parsed back
        THEN every value is recovered exactly"""
        records = [
            IterationRecord(iteration=i, cumulative_samples=10 * i, elbo_mean=-1 / 3 - i,
                            elbo_stderr=0.1 / 7, direction_norm=2**0.5 * i, wallclock_s=0.0)
            for i in range(3)
        ]
        path = tmp_path / "h.csv"
        write_history(records, path)
        assert read_history(path) == records

    def test_empty_history_rejected(self, tmp_path):
        """GIVEN no records
        WHEN written
        THEN a ValueError is raised"""
        with pytest.raises(ValueError):
            write_history([], tmp_path / "h.csv")


@pytest.mark.integration
class TestRunCommand:
    """Tests for optimization runs from the command line."""

    def test_run_writes_history_snapshot_and_manifest(self, tmp_path):
        """GIVEN the two-coin model with ENAC and conjugate directions
        WHEN run for 4 iterations
        THEN a 5-row history, a snapshot and a manifest are written"""
        out = tmp_path / "runs"
        code = main(["--model", "two-coin", "--algo", "enac", "--outer", "cg", "--seed", "1",
                     "--out", str(out), *QUICK])
        assert code == 0
        history = read_history(out / "two-coin_enac_cg_seed1.csv")
        assert [r.iteration for r in history] == [0, 1, 2, 3, 4]
        assert [r.cumulative_samples for r in history] == [0, 5, 10, 15, 20]
        assert len(load_snapshot(out / "two-coin_enac_cg_seed1.store")) == 2
        manifest = _manifest(out)
        assert manifest["runs"][0]["history"] == "two-coin_enac_cg_seed1.csv"
        assert manifest["runs"][0]["iterations_completed"] == 4

    def test_manifest_lists_every_resolved_default(self, tmp_path):
        """GIVEN only the required flags
        WHEN run
        THEN the manifest spells out each default the CLI filled in"""
        out = tmp_path / "runs"
        assert main(["--model", "gaussian-pair", "--out", str(out), "--iters", "1",
                     "--elbo-samples", "2"]) == 0
        spec = _manifest(out)["run_spec"]
        assert spec["algorithms"] == ["sgd", "enac", "sogd"]
        assert spec["outer"] == "steepest"
        assert spec["stepsize"] == 0.05
        assert spec["rollouts"] == 10
        assert spec["ridge"] == 0.001
        assert spec["seeds"] == [0]
        assert spec["restart_period"] == 20
        assert spec["baseline_mode"] == "component"
        assert spec["record_wallclock"] is False
        assert _manifest(out)["model"]["y"] == 1.0
        assert len(list(out.glob("gaussian-pair_*_steepest_seed0.csv"))) == 3

    def test_identical_invocations_are_byte_identical(self, tmp_path):
        """GIVEN the same invocation twice
        WHEN run into two directories
        THEN histories and snapshots match byte for byte"""
        args = ["--model", "fig1", "--algo", "sgd,sogd", "--seeds", "3,4", *QUICK]
        first, second = tmp_path / "a", tmp_path / "b"
        assert main([*args, "--out", str(first)]) == 0
        assert main([*args, "--out", str(second)]) == 0
        files = sorted(p.name for p in first.iterdir() if p.suffix in (".csv", ".store"))
        assert len(files) == 8
        for name in files:
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_parallel_jobs_match_serial(self, tmp_path):
        """GIVEN two workers
        WHEN running four (algorithm, seed) pairs
        THEN outputs equal the serial run"""
        args = ["--model", "two-coin", "--algo", "sgd,enac", "--seeds", "0,1", *QUICK]
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        assert main([*args, "--out", str(serial)]) == 0
        assert main([*args, "--out", str(parallel), "--jobs", "2"]) == 0
        for path in serial.glob("*.csv"):
            assert path.read_bytes() == (parallel / path.name).read_bytes()

    def test_output_directory_from_environment(self, tmp_path, monkeypatch):
        """GIVEN VARPROG_OUT_DIR and no --out flag
        WHEN run
        THEN files land in the environment's directory"""
        monkeypatch.setenv("VARPROG_OUT_DIR", str(tmp_path / "env"))
        get_settings.cache_clear()
        assert main(["--model", "two-coin", "--algo", "sgd", *QUICK]) == 0
        assert (tmp_path / "env" / "two-coin_sgd_steepest_seed0.csv").exists()

    def test_config_file_with_flag_override(self, tmp_path):
        """GIVEN a config file setting iterations, algorithm and rollouts
        WHEN a flag also sets rollouts
        THEN the flag wins and the rest comes from the file"""
        config = tmp_path / "sweep.cfg"
        config.write_text("# sweep\nmodel = two-coin\niters = 3\nalgo = sogd\nrollouts = 4\n"
                          "elbo_samples = 2\nwallclock = false\n")
        out = tmp_path / "runs"
        assert main(["--config", str(config), "--rollouts", "6", "--out", str(out)]) == 0
        spec = _manifest(out)["run_spec"]
        assert spec["iterations"] == 3
        assert spec["algorithms"] == ["sogd"]
        assert spec["rollouts"] == 6
        assert spec["elbo_eval_samples"] == 2

    def test_config_file_turns_off_wallclock_from_environment(self, tmp_path, monkeypatch):
        """GIVEN VARPROG_RECORD_WALLCLOCK=true and a config file with wallclock = false
        WHEN run
        THEN the config file wins and the manifest records no wallclock"""
        monkeypatch.setenv("VARPROG_RECORD_WALLCLOCK", "true")
        get_settings.cache_clear()
        config = tmp_path / "run.cfg"
        config.write_text("model = two-coin\nalgo = sgd\nwallclock = false\n")
        out = tmp_path / "runs"
        assert main(["--config", str(config), "--out", str(out), *QUICK]) == 0
        assert _manifest(out)["run_spec"]["record_wallclock"] is False

    @pytest.mark.parametrize(
        ("flag", "expected"), [("--no-wallclock", False), ("--wallclock", True)]
    )
    def test_wallclock_flags_override_environment(self, tmp_path, monkeypatch, flag, expected):
        """GIVEN VARPROG_RECORD_WALLCLOCK=true or unset
        WHEN --no-wallclock or --wallclock is passed
        THEN the flag decides"""
        if not expected:
            monkeypatch.setenv("VARPROG_RECORD_WALLCLOCK", "true")
            get_settings.cache_clear()
        out = tmp_path / "runs"
        assert main(["--model", "two-coin", "--algo", "sgd", flag, "--out", str(out), *QUICK]) == 0
        assert _manifest(out)["run_spec"]["record_wallclock"] is expected

    def test_marginals_file(self, tmp_path):
        """GIVEN --marginals 20
        WHEN run
        THEN a marginals file lists each address with its visit count"""
        out = tmp_path / "runs"
        assert main(["--model", "two-coin", "--algo", "enac", "--marginals", "20",
                     "--out", str(out), *QUICK]) == 0
        lines = (out / "two-coin_enac_steepest_seed0.marginals.csv").read_text().splitlines()
        assert lines[0] == "site_id,occurrence,visits,mean"
        assert [line.split(",")[:3] for line in lines[1:]] == [
            ["coin1", "0", "20"],
            ["coin2", "0", "20"],
        ]

    def test_resume_from_snapshot(self, tmp_path):
        """GIVEN a snapshot from a previous run
        WHEN resuming with zero iterations
        THEN the new snapshot equals the old one"""
        first = tmp_path / "first"
        assert main(["--model", "two-coin", "--algo", "enac", "--out", str(first), *QUICK]) == 0
        snapshot = first / "two-coin_enac_steepest_seed0.store"
        second = tmp_path / "second"
        assert main(["--model", "two-coin", "--algo", "enac", "--iters", "0", "--elbo-samples",
                     "2", "--resume", str(snapshot), "--out", str(second)]) == 0
        assert (second / snapshot.name).read_bytes() == snapshot.read_bytes()

    @pytest.mark.slow
    def test_desk_qmr_run_has_501_rows(self, tmp_path):
        """GIVEN the desk-scale QMR network with ENAC and conjugate directions
        WHEN run for 500 iterations
        THEN the history has the initial row plus one per iteration"""
        out = tmp_path / "runs"
        assert main(["--model", "qmr", "--algo", "enac", "--outer", "cg", "--rollouts", "10",
                     "--stepsize", "0.05", "--iters", "500", "--seed", "1", "--elbo-samples",
                     "5", "--out", str(out)]) == 0
        rows = (out / "qmr_enac_cg_seed1.csv").read_text().splitlines()
        assert len(rows) == 1 + 501


@pytest.mark.integration
class TestErrors:
    """Tests for exit codes on bad input."""

    def test_unknown_algorithm_is_usage_error(self, capsys):
        """GIVEN --algo bogus
        WHEN parsed
        THEN the exit code is 2 with usage text"""
        assert main(["--model", "qmr", "--algo", "bogus"]) == 2
        assert "usage:" in capsys.readouterr().err

    def test_unknown_model_is_usage_error(self, capsys):
        """GIVEN an unknown model name
        WHEN parsed
        THEN the exit code is 2"""
        assert main(["--model", "hmm"]) == 2
        assert "usage:" in capsys.readouterr().err

    def test_missing_model_is_usage_error(self):
        """GIVEN no --model
        WHEN parsed
        THEN the exit code is 2"""
        assert main(["--iters", "3"]) == 2

    def test_invalid_stepsize_is_usage_error(self):
        """GIVEN a negative stepsize
        WHEN parsed
        THEN the exit code is 2"""
        assert main(["--model", "two-coin", "--stepsize", "-0.1"]) == 2

    def test_model_file_for_builtin_model_is_usage_error(self, tmp_path):
        """GIVEN --model-file with a model that takes none
        WHEN parsed
        THEN the exit code is 2"""
        assert main(["--model", "fig1", "--model-file", str(tmp_path / "x.qmr")]) == 2

    def test_unreadable_model_file_is_io_error(self, tmp_path, capsys):
        """GIVEN a model file that does not exist
        WHEN run
        THEN the exit code is 1 and nothing is written"""
        out = tmp_path / "runs"
        code = main(["--model", "qmr", "--model-file", str(tmp_path / "missing.qmr"),
                     "--out", str(out)])
        assert code == 1
        assert "missing.qmr" in capsys.readouterr().err
        assert not out.exists()

    def test_malformed_model_file_is_io_error(self, tmp_path):
        """GIVEN a malformed LDA file
        WHEN run
        THEN the exit code is 1"""
        path = tmp_path / "bad.lda"
        path.write_text("topics two\n")
        assert main(["--model", "lda", "--model-file", str(path), "--out", str(tmp_path)]) == 1

    def test_missing_config_file_is_io_error(self, tmp_path):
        """GIVEN a config path that does not exist
        WHEN run
        THEN the exit code is 1"""
        assert main(["--config", str(tmp_path / "none.cfg")]) == 1

    def test_model_error_during_run_is_exit_1(self, tmp_path, capsys):
        """GIVEN a snapshot whose coin1 guide is a normal while the program flips a coin there
        WHEN resuming the two-coin model
        THEN the exit code is 1 with an error message instead of a traceback"""
        snapshot = tmp_path / "wrong.store"
        snapshot.write_text("coin1, 0, normal, 0, 0\n")
        code = main(["--model", "two-coin", "--algo", "sgd", "--resume", str(snapshot),
                     "--out", str(tmp_path / "runs"), *QUICK])
        assert code == 1
        err = capsys.readouterr().err
        assert "varprog: error:" in err
        assert "coin1#0" in err

    def test_certain_qmr_prior_is_exit_1(self, tmp_path):
        """GIVEN a QMR file with a disease prior of exactly 0
        WHEN run
        THEN the exit code is 1"""
        path = tmp_path / "net.qmr"
        path.write_text("prior 0 0.5\nleak 0.1\nweight 0 0 0.5\nobserve 0 1\n")
        assert main(["--model", "qmr", "--model-file", str(path), "--out", str(tmp_path)]) == 1

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        """GIVEN a config file with an unknown key
        WHEN parsed
        THEN the exit code is 2"""
        config = tmp_path / "bad.cfg"
        config.write_text("model=two-coin\ntemperature=3\n")
        assert main(["--config", str(config)]) == 2


@pytest.mark.integration
class TestGenerateCommand:
    """Tests for writing synthetic model files."""

    def test_generated_qmr_file_runs(self, tmp_path):
        """GIVEN a generated QMR file
        WHEN used as the model file of a run
        THEN it reads back and the run succeeds"""
        path = tmp_path / "net.qmr"
        assert main(["generate", "qmr", "--out", str(path), "--diseases", "6", "--findings", "8",
                     "--seed", "2"]) == 0
        model = read_qmr(path)
        assert (model.n_diseases, model.n_findings) == (6, 8)
        out = tmp_path / "runs"
        assert main(["--model", "qmr", "--model-file", str(path), "--algo", "enac",
                     "--out", str(out), *QUICK]) == 0
        assert _manifest(out)["model"]["prior"] == model.prior

    def test_generated_lda_file(self, tmp_path):
        """GIVEN the lda generator with small sizes
        WHEN written
        THEN the file holds one doc line per document"""
        path = tmp_path / "corpus.lda"
        assert main(["generate", "lda", "--out", str(path), "--topics", "2", "--vocab", "5",
                     "--documents", "3", "--words", "4"]) == 0
        assert sum(line.startswith("doc ") for line in path.read_text().splitlines()) == 3

    def test_unknown_kind_is_usage_error(self, tmp_path):
        """GIVEN an unknown model kind
        WHEN generating
        THEN the exit code is 2"""
        assert main(["generate", "hmm", "--out", str(tmp_path / "x")]) == 2
