import json

import numpy as np
import pytest

from auxfdiv import cli
from auxfdiv.errors import NumericFailure
from auxfdiv.experiments import (
    COMPARE_ROWS,
    ConfigError,
    ExperimentConfig,
    mode_coverage,
    parse_config,
    ring_centers,
    ring_dataset,
    ring_rotation,
    run_exact_fit,
    run_ub_fit,
)


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(divergence="js", gen_hidden=(8, 8), anneal=False, lr_phi=3e-4)
        assert parse_config(cfg.to_text()) == cfg

    def test_comments_and_overrides(self):
        cfg = parse_config("divergence = reverse_kl  # mode seeking\n\nseed = 4\n", seed=9)
        assert cfg.divergence == "reverse_kl" and cfg.seed == 9

    @pytest.mark.parametrize("text", ["colour = red", "seed = four", "no equals sign",
                                      "divergence = hellinger", "anneal = maybe"])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)


class TestExactFit:
    def test_forward_kl_matches_moments(self, two_mode_target):
        out = run_exact_fit(ExperimentConfig(divergence="forward_kl"))
        assert abs(out["mu"] - 1.7) <= 1e-3
        assert abs(out["sigma"] - np.sqrt(0.388)) <= 1e-3

    def test_symmetric_target_centres(self):
        cfg = ExperimentConfig(divergence="forward_kl", target_weights=(0.5, 0.5),
                               target_means=(-1.0, 1.0), target_stds=(0.3, 0.3))
        assert abs(run_exact_fit(cfg)["mu"]) <= 1e-3


class TestUbFit:
    def test_forward_kl_short_run(self):
        out = run_ub_fit(ExperimentConfig(experiment="fit-ub", steps=2000))
        assert abs(out["divergence_value"] - 0.2098) <= 0.02

    def test_realizable_target(self):
        cfg = ExperimentConfig(experiment="fit-ub", divergence="js", steps=3000,
                               target_weights=(1.0,), target_means=(1.2,), target_stds=(0.7,))
        assert run_ub_fit(cfg)["divergence_value"] <= 0.01


class TestRing:
    def test_rotation_is_proper(self):
        q = ring_rotation(7)
        np.testing.assert_allclose(q @ q.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(q) == pytest.approx(1.0)

    def test_points_lie_on_a_plane_at_radius_one(self):
        cfg = ExperimentConfig()
        c = ring_centers(cfg)
        np.testing.assert_allclose(np.linalg.norm(c, axis=1), 1.0)
        normal = ring_rotation(cfg.ring_rotation_seed)[:, 2]
        np.testing.assert_allclose(c @ normal, 0.0, atol=1e-12)

    def test_self_coverage(self, rng):
        cfg = ExperimentConfig()
        pts, labels = ring_dataset(cfg, 10_000, rng)
        rep = mode_coverage(pts, ring_centers(cfg))
        assert rep.covered == 7
        assert sum(rep.fractions) <= 1.0
        assert set(labels) == set(range(7))

    def test_single_mode_coverage(self):
        c = ring_centers(ExperimentConfig())
        assert mode_coverage(np.repeat(c[:1], 50, 0), c).covered == 1


class TestCli:
    def run(self, capsys, *argv):
        code = cli.main(list(argv))
        return code, capsys.readouterr()

    def test_fit_exact_writes_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("divergence = js\n")
        code, out = self.run(capsys, "fit-exact", "--config", str(cfg), "--out",
                             str(tmp_path / "o"))
        assert code == 0
        assert json.loads(out.out)["experiment"] == "fit-exact"
        names = {p.name for p in (tmp_path / "o").iterdir()}
        assert {"config.txt", "summary.json"} <= names

    def test_gen_data_binary(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("data_format = binary\nn_points = 50\ndata_source = ring\n")
        code, _ = self.run(capsys, "gen-data", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 0 and (tmp_path / "data.bin").exists()

    def test_unknown_key_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("bogus = 1\n")
        assert self.run(capsys, "fit-exact", "--config", str(cfg))[0] == 1

    def test_bad_subcommand_exit_1(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["train"])
        assert info.value.code == 1

    def test_numeric_failure_exit_2(self, capsys, monkeypatch):
        def boom(config):
            raise NumericFailure("quadrature did not converge", depth=50)

        monkeypatch.setattr(cli, "run", boom)
        code, out = self.run(capsys, "fit-exact")
        assert code == 2 and "quadrature" in out.err

    def test_failed_grad_check_exit_3(self, capsys, monkeypatch):
        monkeypatch.setattr(cli, "run", lambda config: {"all_pass": False})
        assert self.run(capsys, "grad-check")[0] == 3

    def test_compare_rows(self):
        assert COMPARE_ROWS == ("F*", "F_LB", "F_UB", "mu*", "mu_LB", "mu_UB", "sigma*",
                                "sigma_LB", "sigma_UB")
