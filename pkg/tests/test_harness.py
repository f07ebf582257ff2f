"""Tests for the study runner, exponent fits, and the command line."""

import json
import subprocess
import sys

import numpy as np
import pytest

from tfcond.harness import Check, StudySpec, fit_loglog, run_study, write_csv


class TestFitLoglog:
    def test_exact_power_law(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        fit = fit_loglog(np.c_[x, x**2])
        assert abs(fit.slope - 2.0) < 1e-10
        assert fit.residual < 1e-12

    def test_noisy_decay(self):
        rng = np.random.default_rng(0)
        x = np.logspace(0, 2, 12)
        y = 3.0 * x**-0.4 * (1.0 + 0.01 * rng.standard_normal(12))
        fit = fit_loglog(np.c_[x, y])
        assert abs(fit.slope + 0.4) < 0.02

    def test_two_points_rejected(self):
        with pytest.raises(ValueError, match="3 points"):
            fit_loglog([(1.0, 1.0), (2.0, 4.0)])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            fit_loglog([(1.0, 1.0), (2.0, -4.0), (3.0, 9.0)])

    def test_reports_table(self):
        fit = fit_loglog([(1.0, 2.0), (2.0, 4.0), (4.0, 8.0)])
        assert fit.points.shape == (3, 2)
        assert np.isfinite(fit.residual)


class TestStudySpec:
    def test_empty_values_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            StudySpec(kind="gap_vs_g", values=())

    def test_non_monotone_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            StudySpec(kind="gap_vs_g", values=(10.0, 5.0))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            StudySpec(kind="everything", values=(1,))

    def test_unknown_manybody_check_rejected(self):
        with pytest.raises(ValueError, match="check"):
            StudySpec(kind="manybody_suite", values=("appendix", "frobnicate"))


def _small_lemma26(**kw):
    base = dict(
        kind="lemma26_vs_N",
        values=(64, 128, 256, 512),
        grid_d=1,
        grid_n=512,
        half_width=8.0,
        beta=0.2,
        workers=2,
    )
    base.update(kw)
    return StudySpec(**base)


class TestRunStudy:
    def test_lemma26_rows_and_checks(self):
        res = run_study(_small_lemma26())
        assert len(res.rows) == 4
        assert all(r["status"] == "ok" for r in res.rows)
        assert all(r["measured"] <= r["bound"] for r in res.rows)
        names = {c.name for c in res.checks}
        assert {"smearing_below_bound", "smearing_rate", "point_failures"} <= names
        assert res.passed
        assert res.fits["smearing_vs_N"].slope <= -0.15

    def test_rerun_is_byte_identical(self):
        spec = _small_lemma26()
        a = run_study(spec)
        b = run_study(spec)
        assert a.csv_text == b.csv_text
        assert a.csv_text.startswith("N,")

    def test_rows_carry_full_parameters(self):
        res = run_study(_small_lemma26())
        header = res.csv_text.splitlines()[0].split(",")
        for key in ("N", "grid_d", "grid_n", "half_width", "beta", "status"):
            assert key in header

    def test_failed_points_recorded_and_tolerance_applied(self):
        # the last N cannot be resolved on this grid: 1/3 of points fail (> 20%)
        spec = _small_lemma26(values=(64, 128, 100_000))
        res = run_study(spec)
        failed = [r for r in res.rows if r["status"] != "ok"]
        assert len(failed) == 1
        assert "resolve" in failed[0]["status"]
        assert not res.passed
        frac = [c for c in res.checks if c.name == "point_failures"][0]
        assert not frac.passed

    def test_hgp_rate_small(self):
        spec = StudySpec(
            kind="hgp_rate_vs_N",
            values=(64, 128, 256),
            grid_d=1,
            grid_n=512,
            half_width=8.0,
            g=4.0,
            t_final=0.05,
            dt=1e-3,
            workers=2,
        )
        res = run_study(spec)
        assert res.passed
        by_name = {c.name: c for c in res.checks}
        assert by_name["distance_decreasing_in_N"].passed
        assert by_name["mass_conserved"].value < 1e-12
        assert abs(by_name["splitting_order"].value - 2.0) <= 0.1
        assert res.fits["distance_vs_N"].slope <= -0.05

    def test_manybody_suite_small(self):
        spec = StudySpec(
            kind="manybody_suite",
            values=("appendix", "gapchain", "gronwall"),
            mb_trials=5,
            workers=2,
        )
        res = run_study(spec)
        assert res.passed
        assert all(r["violations"] == 0 for r in res.rows)

    def test_artifacts_written(self, tmp_path):
        spec = _small_lemma26(out_dir=str(tmp_path))
        res = run_study(spec)
        assert res.csv_path is not None and res.json_path is not None
        summary = json.loads((tmp_path / "lemma26_vs_N_summary.json").read_text())
        assert summary["kind"] == "lemma26_vs_N"
        assert summary["passed"] is True
        assert all("statement" in c for c in summary["checks"])
        csv_text = (tmp_path / "lemma26_vs_N.csv").read_text()
        assert csv_text == res.csv_text


class TestWriteCsv:
    def test_private_keys_excluded(self):
        rows = [{"a": 1, "_elapsed_s": 0.5, "status": "ok"}]
        text = write_csv(rows)
        assert "_elapsed_s" not in text
        assert text.splitlines()[0] == "a,status"

    def test_float_repr_roundtrip(self):
        rows = [{"x": 0.1 + 0.2, "status": "ok"}]
        text = write_csv(rows)
        assert repr(0.1 + 0.2) in text


def _cli(*argv, timeout=300):
    return subprocess.run(
        [sys.executable, "-m", "tfcond.cli", *argv],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


class TestCli:
    def test_scattering_pass(self, tmp_path):
        cfg = tmp_path / "scat.json"
        cfg.write_text(
            json.dumps(
                {"profile": "gaussian", "kappa": [1e-3], "born_window": [0.99, 1.01]}
            )
        )
        proc = _cli("scattering", "--config", str(cfg), "--out", str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        assert "PASS" in proc.stdout
        payload = json.loads((tmp_path / "scattering.json").read_text())
        assert payload["passed"] is True

    def test_scattering_fail_window(self, tmp_path):
        cfg = tmp_path / "scat.json"
        cfg.write_text(
            json.dumps({"profile": "gaussian", "kappa": [1.0], "born_window": [0.999, 1.001]})
        )
        proc = _cli("scattering", "--config", str(cfg))
        assert proc.returncode == 1
        assert "FAIL" in proc.stdout

    def test_manybody_flags(self):
        proc = _cli("manybody", "--N", "3", "--M", "2", "--check", "appendix", "--trials", "3")
        assert proc.returncode == 0, proc.stderr
        assert "violations" in proc.stdout

    def test_manybody_gapchain(self):
        proc = _cli("manybody", "--N", "3", "--M", "3", "--check", "gapchain", "--trials", "20")
        assert proc.returncode == 0, proc.stderr

    def test_study_subcommand(self, tmp_path):
        cfg = tmp_path / "study.json"
        cfg.write_text(
            json.dumps(
                {
                    "study": {
                        "kind": "lemma26_vs_N",
                        "values": [64, 128, 256],
                        "grid_d": 1,
                        "grid_n": 512,
                        "half_width": 8.0,
                    }
                }
            )
        )
        proc = _cli("study", "--config", str(cfg), "--out", str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "lemma26_vs_N.csv").exists()
        assert (tmp_path / "lemma26_vs_N_summary.json").exists()

    def test_groundstate_subcommand(self, tmp_path):
        cfg = tmp_path / "gs.json"
        cfg.write_text(
            json.dumps(
                {
                    "grid": {"d": 1, "n": 128, "half_width": 8.0},
                    "trap": {"strength": 1.0, "s": 2},
                    "G": 0.0,
                    "spectrum_k": 2,
                }
            )
        )
        proc = _cli("groundstate", "--config", str(cfg), "--out", str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        payload = json.loads((tmp_path / "groundstate.json").read_text())
        # 1D oscillator levels 1 and 3
        assert abs(payload["energy"] - 1.0) < 1e-6
        assert abs(payload["eigenvalues"][1] - 3.0) < 1e-6

    def test_dynamics_subcommand(self, tmp_path):
        cfg = tmp_path / "dyn.json"
        cfg.write_text(
            json.dumps(
                {
                    "grid": {"d": 1, "n": 512, "half_width": 8.0},
                    "interaction": {"profile": "gaussian", "beta": 0.2},
                    "g": 4.0,
                    "N": 128,
                    "t_final": 0.05,
                    "dt": 1e-3,
                    "record_every": 10,
                    "initial": "gaussian",
                }
            )
        )
        proc = _cli("dynamics", "--config", str(cfg), "--out", str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        payload = json.loads((tmp_path / "dynamics.json").read_text())
        assert payload["passed"] is True
        assert payload["mass_drift_gp"] < 1e-12

    def test_bad_config_exits_2(self):
        proc = _cli("study", "--config", "/nonexistent/cfg.json")
        assert proc.returncode == 2
        assert "error:" in proc.stderr

    def test_unknown_study_key_exits_2(self, tmp_path):
        cfg = tmp_path / "study.json"
        cfg.write_text(json.dumps({"study": {"kind": "gap_vs_g", "values": [1, 2], "zzz": 1}}))
        proc = _cli("study", "--config", str(cfg))
        assert proc.returncode == 2
