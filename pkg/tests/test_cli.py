import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from snlslab.cli import (EXIT_CONFIG, EXIT_FIT, EXIT_INCOMPLETE, EXIT_OK, EXIT_PROBE_FAILED,
                         main)

SMALL_ENSEMBLE = """\
grid: {n: 32, length: 16.0}
solver: {dt: 0.002, power: 7, radius_factor: 3.0}
noise: {amplitude: 0.5, sigma: 2.0}
initial: {amplitude: 1.12}
ensemble: {top: 1.0, ratio: 0.7, count: 4, trajectories: 16}
fit: {bootstrap: 20}
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestRunOne:
    def test_deterministic_mass_column(self, tmp_path):
        cfg = write(tmp_path, "grid: {n: 64}\nsolver: {dt: 0.01}\nrun: {T: 0.5, diagnostics_every: 5}\n")
        assert main(["run-one", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
        rows = read_csv(tmp_path / "o" / "diagnostics.csv")
        j = rows[0].index("mass")
        m = np.array([float(r[j]) for r in rows[1:]])
        assert len(m) == 11
        assert np.ptp(m) <= 1e-12 * m[0]
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["outcome"]["hit"] == 0
        assert s["config"]["grid"]["n"] == 64 and s["config"]["solver"]["power"] == 3.0

    def test_radius_below_norm(self, tmp_path):
        cfg = write(tmp_path, "grid: {n: 32}\nsolver: {dt: 0.01, radius_factor: 0.5}\nrun: {T: 0.1}\n")
        assert main(["run-one", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        out = json.loads((tmp_path / "summary.json").read_text())["outcome"]
        assert out["hit"] == 1 and out["tau_R"] == 0.0

    def test_bad_key(self, tmp_path, capsys):
        cfg = write(tmp_path, "grid:\n  n: 32\n  lenght: 4\n")
        assert main(["run-one", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "grid.lenght" in err and "line 3" in err

    def test_missing_config(self, tmp_path):
        assert main(["run-one", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG

    def test_seed_range(self, tmp_path):
        assert main(["run-one", "--seed", str(2**64), "--out", str(tmp_path)]) == EXIT_CONFIG


@pytest.fixture(scope="module")
def scaling_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("scaling")
    cfg = write(base, SMALL_ENSEMBLE)
    codes = [main(["scaling", "--config", cfg, "--out", str(base / d), "--workers", w])
             for d, w in (("a", "1"), ("b", "1"), ("c", "4"))]
    return base, codes


class TestEnsembleAndScaling:
    def test_exit_and_fit_block(self, scaling_runs):
        base, codes = scaling_runs
        assert codes == [EXIT_OK] * 3
        s = json.loads((base / "a" / "summary.json").read_text())
        assert len(s["estimates"]) == 4
        assert {"fixed_beta", "free_beta", "reference_beta"} <= set(s["fit"])
        assert s["fit"]["fixed_beta"]["c"] >= 0
        assert "workers" not in s["config"]["ensemble"]

    def test_byte_identical_across_runs_and_workers(self, scaling_runs):
        base, _ = scaling_runs
        a = (base / "a" / "summary.json").read_bytes()
        assert a == (base / "b" / "summary.json").read_bytes()
        assert a == (base / "c" / "summary.json").read_bytes()
        assert (base / "a" / "trajectories.csv").read_bytes() == (base / "c" / "trajectories.csv").read_bytes()
        meta = json.loads((base / "c" / "metadata.json").read_text())
        assert meta["workers"] == 4 and "timestamp" in meta

    def test_tables(self, scaling_runs):
        base, _ = scaling_runs
        traj = read_csv(base / "a" / "trajectories.csv")
        assert traj[0][:4] == ["cell", "index", "seed", "hit"]
        assert len(traj) == 17
        plot = read_csv(base / "a" / "plot.csv")
        assert plot[0] == ["T_pow_minus_quarter", "log_p_hat"]
        for T_q, lp in plot[1:]:
            assert float(T_q) >= 1.0 and float(lp) <= 0.0

    def test_refit_summary(self, scaling_runs, tmp_path):
        base, _ = scaling_runs
        src = str(base / "a" / "summary.json")
        assert main(["fit", src, "--beta", "0.25", "--bootstrap", "0", "--out", str(tmp_path)]) == EXIT_OK
        fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
        ref = json.loads((base / "a" / "summary.json").read_text())["fit"]["fixed_beta"]
        assert fit["a"] == pytest.approx(ref["a"], rel=1e-12)
        assert fit["c"] == pytest.approx(ref["c"], rel=1e-12)

    def test_env_overrides_workers(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SNLS_WORKERS", "2")
        cfg = write(tmp_path, SMALL_ENSEMBLE.replace("trajectories: 16", "trajectories: 4"))
        assert main(["ensemble", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"]) == EXIT_OK
        assert json.loads((tmp_path / "o" / "metadata.json").read_text())["workers"] == 2

    def test_incomplete_cells(self, tmp_path):
        cfg = write(tmp_path, "grid: {n: 32}\nsolver: {dt: 0.01, max_steps: 10}\n"
                              "ensemble: {top: 1.0, count: 2, trajectories: 2}\n")
        assert main(["ensemble", "--config", cfg, "--out", str(tmp_path)]) == EXIT_INCOMPLETE
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["complete"] is False

    def test_fit_error_exit(self, tmp_path):
        # defocusing, no noise, huge radius: every cell has zero successes
        cfg = write(tmp_path, "grid: {n: 32}\nsolver: {dt: 0.01, focusing: -1, radius: 1000.0}\n"
                              "ensemble: {top: 0.1, count: 3, trajectories: 3}\n")
        assert main(["scaling", "--config", cfg, "--out", str(tmp_path)]) == EXIT_FIT
        s = json.loads((tmp_path / "summary.json").read_text())
        assert "error" in s["fit"]["fixed_beta"]


class TestFit:
    def _summary(self, tmp_path, a=-1.0, c=2.0, beta=0.25):
        ests = []
        for j in range(6):
            T = 0.6**j
            p = math.exp(a - c * T ** -beta)
            ests.append({"T": T, "successes": 1000, "trials": 10**9, "p_hat": p,
                         "lo": 0.9 * p, "hi": 1.1 * p, "complete": True, "unresolved": 0})
        path = tmp_path / "summary.json"
        path.write_text(json.dumps({"estimates": ests, "config": {"seed": 0}}))
        return str(path)

    def test_fixed_beta_recovers(self, tmp_path):
        src = self._summary(tmp_path)
        assert main(["fit", src, "--beta", "0.25", "--bootstrap", "0"]) == EXIT_OK
        fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
        assert fit["a"] == pytest.approx(-1.0, abs=1e-10)
        assert fit["c"] == pytest.approx(2.0, abs=1e-10)

    def test_free_beta(self, tmp_path):
        src = self._summary(tmp_path, beta=0.4)
        assert main(["fit", src, "--bootstrap", "0"]) == EXIT_OK
        fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
        assert fit["beta"] == pytest.approx(0.4, abs=1e-8)

    def test_unreadable_summary(self, tmp_path):
        bad = tmp_path / "s.json"
        bad.write_text("{}")
        assert main(["fit", str(bad)]) == EXIT_CONFIG
        assert main(["fit", str(tmp_path / "missing.json")]) == EXIT_CONFIG


class TestProbe:
    def test_khintchine_default(self, tmp_path, capsys):
        assert main(["probe", "khintchine", "--out", str(tmp_path)]) == EXIT_OK
        rep = json.loads((tmp_path / "summary.json").read_text())["report"]
        assert rep["references"]["K_rho2"]["value"] == 1.0
        assert rep["checks"]["K_rho2"] is True
        assert "khintchine.K_rho2: PASS" in capsys.readouterr().out
        assert read_csv(tmp_path / "khintchine_plot.csv")[0]

    def test_probe_failure_exit(self, tmp_path):
        cfg = write(tmp_path, "probe:\n  bdg: {ratio_limit: 1.0, samples: 1000}\n"
                              "noise: {amplitude: 0.5, sigma: 2.0, k_max: 8}\n"
                              "initial: {family: plane_wave}\n")
        assert main(["probe", "bdg", "--config", cfg, "--out", str(tmp_path)]) == EXIT_PROBE_FAILED

    def test_probe_summary_reproducible(self, tmp_path):
        cfg = write(tmp_path, "probe:\n  khintchine: {samples: 10000}\n")
        for d in ("a", "b"):
            assert main(["probe", "khintchine", "--config", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
        assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()

    def test_unknown_probe(self):
        with pytest.raises(SystemExit):
            main(["probe", "umd"])


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "snlslab.cli", "probe", "khintchine",
                        "--out", str(tmp_path), "--seed", "7"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["seed"] == 7
