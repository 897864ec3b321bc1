"""Tests for the command-line interface: config validation, dataset files,
the command pipeline, exit codes, and byte-level determinism."""
import json

import numpy as np
import pytest

from mobolfi.cli import (
    EXIT_CAPABILITY,
    EXIT_CONFIG,
    EXIT_ENGINE,
    EXIT_INCOMPLETE,
    EXIT_IO,
    EXIT_OK,
    main,
)

TOY_CONFIG = """\
[run]
problem = toy
mode = mobolfi
n_init = 8
n_acquisitions = 2
seed = 5
data = data
out = runs

[sampler]
steps = 120
burn_in = 60

[toy]
dim = 1
theta_true = 0.3
"""


def write_config(root, text, name="config.ini"):
    path = root / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def toy_root(tmp_path_factory):
    """A config, its simulated dataset, and one completed run."""
    root = tmp_path_factory.mktemp("toy_cli")
    cfg = write_config(root, TOY_CONFIG)
    assert main(["simulate", "--config", str(cfg), "--out", str(root / "data")]) == EXIT_OK
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    run_dir = next((root / "runs").iterdir())
    return root, cfg, run_dir


@pytest.fixture(scope="module")
def bolfi_run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("bolfi_cli")
    cfg = write_config(root, TOY_CONFIG.replace("mode = mobolfi", "mode = bolfi")
                                       .replace("n_acquisitions = 2", "n_acquisitions = 0"))
    assert main(["simulate", "--config", str(cfg), "--out", str(root / "data")]) == EXIT_OK
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    return next((root / "runs").iterdir())


class TestConfigValidation:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.ini")]) == EXIT_IO
        assert "not found" in capsys.readouterr().err

    def test_unknown_section(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG + "\n[plotting]\nstyle = dark\n")
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "[plotting]" in capsys.readouterr().err

    def test_unknown_key_lists_allowed(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG + "colour = red\n")
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "colour" in err and "theta_true" in err

    def test_bad_integer_names_field(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG.replace("n_init = 8", "n_init = many"))
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "[run] n_init" in capsys.readouterr().err

    def test_default_section_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[DEFAULT]\nseed = 1\n" + TOY_CONFIG)
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "DEFAULT" in capsys.readouterr().err

    def test_syntax_error_reports_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "problem = toy\n")  # key before any section
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "line" in capsys.readouterr().err.lower()

    def test_bolfi_rejects_two_tolerance_levels(self, tmp_path, capsys):
        text = TOY_CONFIG.replace("mode = mobolfi", "mode = bolfi") \
                         .replace("[sampler]", "q_tolerance = 0.05 0.01\n\n[sampler]")
        cfg = write_config(tmp_path, text)
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
        assert "q_tolerance" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == EXIT_CONFIG

    def test_missing_subcommand(self, capsys):
        assert main([]) == EXIT_CONFIG

    def test_threads_must_be_positive(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG)
        assert main(["scale", "--config", str(cfg), "--threads", "0"]) == EXIT_CONFIG

    def test_threads_sets_environment(self, tmp_path, monkeypatch, capsys):
        import os
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
            monkeypatch.delenv(var, raising=False)
        cfg = write_config(tmp_path, TOY_CONFIG)
        # fails later for lack of data, but the env must be set first
        main(["run", "--config", str(cfg), "--threads", "2"])
        assert os.environ["OMP_NUM_THREADS"] == "2"
        assert os.environ["OPENBLAS_NUM_THREADS"] == "2"


class TestSimulate:
    def test_toy_default_sizes(self, toy_root):
        root, _, _ = toy_root
        x = (root / "data" / "X.csv").read_text().splitlines()
        w = (root / "data" / "W.csv").read_text().splitlines()
        assert x[0] == "x_1" and len(x) == 1 + 20
        assert w[0] == "w_1" and len(w) == 1 + 50

    def test_byte_identical_reruns(self, toy_root, tmp_path, capsys):
        root, cfg, _ = toy_root
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
        assert ((tmp_path / "X.csv").read_bytes()
                == (root / "data" / "X.csv").read_bytes())
        assert ((tmp_path / "W.csv").read_bytes()
                == (root / "data" / "W.csv").read_bytes())

    def test_overwrite_refused_without_force(self, toy_root, capsys):
        root, cfg, _ = toy_root
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(root / "data")]) == EXIT_IO
        assert "--force" in capsys.readouterr().err
        assert main(["simulate", "--config", str(cfg), "--out", str(root / "data"),
                     "--force"]) == EXIT_OK

    def test_missing_theta_true(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG.replace("theta_true = 0.3\n", ""))
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "d")]) == EXIT_CONFIG
        assert "theta_true" in capsys.readouterr().err

    def test_wrong_theta_dimension(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG.replace("theta_true = 0.3",
                                                        "theta_true = 0.3 0.1 0.7"))
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "d")]) == EXIT_CONFIG

    def test_custom_sizes(self, tmp_path, capsys):
        text = TOY_CONFIG.replace("theta_true = 0.3",
                                  "theta_true = 0.3\nn_gaussian = 12\nn_path = 9")
        cfg = write_config(tmp_path, text)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "d")]) == EXIT_OK
        assert len((tmp_path / "d" / "X.csv").read_text().splitlines()) == 13
        assert len((tmp_path / "d" / "W.csv").read_text().splitlines()) == 10

    def test_mlba_dataset_shape(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MLBA_CONFIG)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "d")]) == EXIT_OK
        lines = (tmp_path / "d" / "rt_ch.csv").read_text().splitlines()
        assert lines[0] == "rt,ch1,ch2,ch3"
        assert len(lines) == 1 + 20
        assert (tmp_path / "d" / "attributes.csv").is_file()
        out = capsys.readouterr().out
        assert "choice proportions" in out and "response-time mean" in out


MLBA_CONFIG = """\
[run]
problem = mlba
mode = mobolfi_aux
n_init = 6
n_acquisitions = 0
n_sigma = 0
seed = 3
data = data
out = runs

[mlba]
theta_true = 0.1 -5 -6 3 1.5 4.59511985013459
n_obs = 20
"""


class TestRun:
    def test_prints_run_dir_and_writes_artifacts(self, toy_root, capsys):
        _, _, run_dir = toy_root
        assert sorted(p.name for p in run_dir.iterdir() if p.suffix != ".json")[:2] == [
            "acquisitions.csv", "training.csv",
        ]
        assert (run_dir / "run.json").is_file()

    def test_collision_refused_then_forced(self, toy_root, capsys):
        root, cfg, run_dir = toy_root
        assert main(["run", "--config", str(cfg)]) == EXIT_IO
        assert "--force" in capsys.readouterr().err
        assert main(["run", "--config", str(cfg), "--force"]) == EXIT_OK
        assert capsys.readouterr().out.strip().endswith(run_dir.name)

    def test_progress_on_stderr(self, toy_root, tmp_path, capsys):
        _, cfg, _ = toy_root
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
        captured = capsys.readouterr()
        assert "acquisition 2/2" in captured.err
        assert "hypervolume" in captured.err
        assert "acquisition" not in captured.out

    def test_missing_data_dir(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TOY_CONFIG)
        assert main(["run", "--config", str(cfg)]) == EXIT_IO
        assert "data" in capsys.readouterr().err

    def test_seed_flag_changes_run_identity(self, toy_root, tmp_path, capsys):
        _, cfg, run_dir = toy_root
        assert main(["run", "--config", str(cfg), "--seed", "99",
                     "--out", str(tmp_path)]) == EXIT_OK
        new_dir = next(tmp_path.iterdir())
        assert new_dir.name != run_dir.name


class TestPosterior:
    def test_writes_samples_and_diagnostics(self, toy_root, capsys):
        _, _, run_dir = toy_root
        assert main(["posterior", str(run_dir), "--mode", "source1"]) == EXIT_OK
        csv_path = run_dir / "posterior_source1.csv"
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "theta_1,log_post"
        assert len(lines) == 1 + 9 * 60  # chains x kept generations
        diag = json.loads((run_dir / "posterior_source1_diagnostics.json").read_text())
        assert diag["mode"] == "source1"
        assert 0.0 <= diag["acceptance_rate"] <= 1.0
        assert len(diag["mean"]) == 1
        assert "0.5" in diag["quantiles"]
        assert len(diag["chain_means"]) == 9

    def test_rerun_byte_identical(self, toy_root, tmp_path, capsys):
        _, _, run_dir = toy_root
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["posterior", str(run_dir), "--mode", "joint",
                         "--out", str(out)]) == EXIT_OK
        assert ((a / "posterior_joint.csv").read_bytes()
                == (b / "posterior_joint.csv").read_bytes())
        assert ((a / "posterior_joint_diagnostics.json").read_bytes()
                == (b / "posterior_joint_diagnostics.json").read_bytes())

    def test_weak_prior_separate_file(self, toy_root, tmp_path, capsys):
        _, _, run_dir = toy_root
        assert main(["posterior", str(run_dir), "--mode", "joint", "--prior", "weak",
                     "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "posterior_joint_weak.csv").is_file()

    def test_rwm_override(self, toy_root, tmp_path, capsys):
        _, _, run_dir = toy_root
        assert main(["posterior", str(run_dir), "--sampler", "rwm", "--steps", "50",
                     "--scale", "0.5", "--out", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "posterior_joint.csv").read_text().splitlines()
        assert len(lines) == 1 + 50  # the random-walk sampler keeps every step

    def test_capability_gate_on_bolfi(self, bolfi_run_dir, capsys):
        assert main(["posterior", str(bolfi_run_dir),
                     "--mode", "source1"]) == EXIT_CAPABILITY
        assert "joint" in capsys.readouterr().err

    def test_missing_dir(self, tmp_path, capsys):
        assert main(["posterior", str(tmp_path / "ghost")]) == EXIT_IO

    def test_incomplete_run(self, tmp_path, capsys):
        bare = tmp_path / "bare"
        bare.mkdir()
        assert main(["posterior", str(bare)]) == EXIT_INCOMPLETE
        (bare / "run.json").write_text(json.dumps({"status": "aborted: boom"}))
        assert main(["posterior", str(bare)]) == EXIT_INCOMPLETE
        assert "aborted" in capsys.readouterr().err


class TestLoglik:
    def test_matches_in_process_evaluation(self, toy_root, tmp_path, capsys):
        _, _, run_dir = toy_root
        from mobolfi.engine import load_run

        grid = np.linspace(-2.0, 2.0, 9)[:, None]
        grid_path = tmp_path / "grid.csv"
        np.savetxt(grid_path, grid, delimiter=",", header="theta_1",
                   comments="", fmt="%.17g")
        assert main(["loglik", str(run_dir), "--mode", "cond_1_given_2",
                     "--thetas", str(grid_path)]) == EXIT_OK
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert out_lines[0] == "theta_1,log_likelihood"
        got = np.array([[float(tok) for tok in line.split(",")]
                        for line in out_lines[1:]])
        expected = load_run(run_dir).likelihoods["cond_1_given_2"].log_likelihood(grid)
        assert np.array_equal(got[:, 0], grid[:, 0])
        assert np.array_equal(got[:, 1], expected)

    def test_wrong_dimension(self, toy_root, tmp_path, capsys):
        _, _, run_dir = toy_root
        bad = tmp_path / "bad.csv"
        bad.write_text("theta_1,theta_2\n0.0,0.0\n")
        assert main(["loglik", str(run_dir), "--thetas", str(bad)]) == EXIT_CONFIG
        assert "expects 1" in capsys.readouterr().err

    def test_missing_thetas_file(self, toy_root, tmp_path, capsys):
        _, _, run_dir = toy_root
        assert main(["loglik", str(run_dir),
                     "--thetas", str(tmp_path / "none.csv")]) == EXIT_IO

    def test_mode_gate(self, bolfi_run_dir, capsys, tmp_path):
        grid = tmp_path / "g.csv"
        grid.write_text("theta_1\n0.0\n")
        assert main(["loglik", str(bolfi_run_dir), "--mode", "source2",
                     "--thetas", str(grid)]) == EXIT_CAPABILITY


class TestOracle:
    def test_toy_conjugate_parameters_exact(self, toy_root, capsys):
        _, cfg, _ = toy_root
        from mobolfi.simulators import ToyConfig, toy_true_posterior
        from mobolfi.cli import load_config

        assert main(["oracle", "--config", str(cfg)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        config = load_config(cfg)
        from mobolfi.cli import _read_toy_dataset

        obs = _read_toy_dataset(config["run"]["data"])
        exact = toy_true_posterior(obs, ToyConfig(dim=1, variant="shared"))
        for name in ("source1", "source2", "joint"):
            block = getattr(exact, name)
            assert payload[name]["mean"] == block.mean.tolist()
            assert payload[name]["variance"] == block.var
            assert payload[name]["precision"] == block.precision

    def test_toy_grid_matches_closed_form(self, toy_root, tmp_path, capsys):
        _, cfg, _ = toy_root
        from mobolfi.cli import _read_toy_dataset, load_config
        from mobolfi.simulators import ToyConfig, toy_loglik_exact

        grid = np.linspace(-1.0, 1.0, 7)[:, None]
        grid_path = tmp_path / "grid.csv"
        np.savetxt(grid_path, grid, delimiter=",", header="theta_1",
                   comments="", fmt="%.17g")
        assert main(["oracle", "--config", str(cfg),
                     "--thetas", str(grid_path)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        got = np.array([float(line.split(",")[-1]) for line in lines[1:]])
        obs = _read_toy_dataset(load_config(cfg)["run"]["data"])
        expected = toy_loglik_exact(grid, obs, ToyConfig(dim=1, variant="shared"))
        assert np.array_equal(got, expected)

    def test_misspecified_toy_has_no_conjugate_posterior(self, tmp_path, capsys):
        text = TOY_CONFIG.replace("theta_true = 0.3", "theta_true = 0.3 -0.7") \
                         .replace("mode = mobolfi", "mode = mobolfi\nvariant = misspecified")
        cfg = write_config(tmp_path, text)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "data")]) == EXIT_OK
        assert main(["oracle", "--config", str(cfg)]) == EXIT_CAPABILITY
        assert "shared" in capsys.readouterr().err

    def test_mlba_grid_matches_closed_form(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MLBA_CONFIG)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "data")]) == EXIT_OK
        capsys.readouterr()
        thetas = np.array([
            [0.1, -5.0, -6.0, 3.0, 1.5, 4.6],
            [0.3, -4.0, -5.0, 2.0, 1.2, 4.0],
        ])
        grid_path = tmp_path / "grid.csv"
        np.savetxt(grid_path, thetas, delimiter=",",
                   header=",".join(f"t{j}" for j in range(6)), comments="", fmt="%.17g")
        assert main(["oracle", "--config", str(cfg),
                     "--thetas", str(grid_path)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        got = np.array([float(line.split(",")[-1]) for line in lines[1:]])

        from mobolfi.cli import _read_mlba_dataset, load_config
        from mobolfi.simulators import MLBAConfig, mlba_loglik_batch

        obs, attributes = _read_mlba_dataset(tmp_path / "data", load_config(cfg))
        expected = mlba_loglik_batch(thetas, obs, MLBAConfig(attributes))
        assert np.array_equal(got, expected)

    def test_mlba_exact_posterior_sampler(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MLBA_CONFIG)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "data")]) == EXIT_OK
        assert main(["oracle", "--config", str(cfg), "--steps", "30",
                     "--burn-in", "10", "--out", str(tmp_path / "orc")]) == EXIT_OK
        lines = (tmp_path / "orc" / "oracle_posterior.csv").read_text().splitlines()
        assert lines[0].startswith("theta_1,") and lines[0].endswith("log_post")
        assert len(lines) == 1 + 9 * 20
        diag = json.loads((tmp_path / "orc" / "oracle_posterior_diagnostics.json").read_text())
        assert diag["settings"]["steps"] == 30


class TestScale:
    def test_matches_run_scaling_bitwise(self, toy_root, capsys):
        _, cfg, run_dir = toy_root
        assert main(["scale", "--config", str(cfg)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "component,scale"
        got = [float(line.split(",")[1]) for line in lines[1:]]
        manifest = json.loads((run_dir / "run.json").read_text())
        assert got == manifest["scaling"]["mad"]

    def test_aux_score_rows(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MLBA_CONFIG)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "data")]) == EXIT_OK
        capsys.readouterr()
        assert main(["scale", "--config", str(cfg)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        components = [line.split(",")[0] for line in lines[1:]]
        assert components[:2] == ["output_1", "output_2"]
        assert components[2:] == [f"score_{j + 1}" for j in range(5)]
