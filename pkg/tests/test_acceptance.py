"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the terminal summary
and asserts both the numerical tolerance and the runtime budget.
"""
import json
import math
import time

import numpy as np

from snlslab.cli import EXIT_OK, main
from snlslab.diagnostics import DiagnosticsRecorder, energy, mass, variance
from snlslab.integrator import CutoffSpec, SolverConfig, evolve, initial_state, recompute_x1
from snlslab.montecarlo import fit_log_model, geometric_ladder
from snlslab.noise import NoiseSpec, RngStream
from snlslab.probes import (dispersive_decay_probe, khintchine_constant,
                            khintchine_empirical_check, stochastic_convolution_moment_probe,
                            strong_convergence_study)
from snlslab.spectral import Field, GridSpec, h1_norm


def gaussian(grid, amp=1.0, width=1.0):
    return Field.from_function(grid, lambda *x: amp * np.exp(-sum(c**2 for c in x) / (2 * width**2)))


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_01_mass_conservation(acceptance_report):
    g = GridSpec(1, 256, 20.0)
    u0 = gaussian(g, 0.8)
    cfg = SolverConfig(dt=1e-4, power=7)
    with Clock() as clk:
        st = initial_state(u0)
        out = evolve(st, cfg, NoiseSpec(amplitude=0.3, sigma=2.0), CutoffSpec(),
                     RngStream(0, (1,)), 1.0)
    drift = abs(mass(st.u) / mass(u0) - 1)
    ok = out.steps == 10_000 and drift <= 1e-9 and clk.seconds <= 60
    acceptance_report(1, "mass conservation", ok, f"relative drift {drift:.2e} over {out.steps} steps",
                      clk.seconds)
    assert out.steps == 10_000
    assert drift <= 1e-9
    assert clk.seconds <= 60


def test_02_energy_conservation(acceptance_report):
    g = GridSpec(1, 128, 20.0)
    u0 = gaussian(g, 0.5)
    cfg = SolverConfig(dt=1e-4, power=3, truncation=False)
    with Clock() as clk:
        st = initial_state(u0)
        evolve(st, cfg, NoiseSpec(), CutoffSpec(), None, 1.0)
    drift = abs(energy(st.u, cfg) / energy(u0, cfg) - 1)
    ok = drift <= 1e-6 and clk.seconds <= 60
    acceptance_report(2, "deterministic energy conservation", ok, f"relative drift {drift:.2e}",
                      clk.seconds)
    assert drift <= 1e-6
    assert clk.seconds <= 60


def test_03_blow_up_fixture(acceptance_report):
    g = GridSpec(1, 1024, 20.0)
    u0 = gaussian(g, 1.6)
    cfg = SolverConfig(dt=1e-5, power=7, radius=10 * h1_norm(u0))
    assert energy(u0, cfg) < 0
    times, var = [], []

    def watch(state):
        if state.steps % 20 == 0:
            times.append(state.t)
            var.append(variance(state.u))

    with Clock() as clk:
        out = evolve(initial_state(u0), cfg, NoiseSpec(), CutoffSpec(), None, 1.0,
                     callbacks=[watch], check_resolution=False)
    var = np.array(var)
    late = var[np.array(times) >= 0.5 * out.tau_R]
    decreasing = bool(out.hit and len(late) > 2 and np.all(np.diff(late) < 0))
    ok = out.hit and decreasing and clk.seconds <= 120
    acceptance_report(3, "deterministic blow-up", ok,
                      f"tau_R={out.tau_R:.4f}, variance {late[0]:.3g} -> {late[-1]:.3g} "
                      f"over final half ({len(late)} samples)", clk.seconds)
    assert out.hit and math.isfinite(out.tau_R)
    assert decreasing
    assert clk.seconds <= 120


def test_04_truncation_coupling(acceptance_report):
    g = GridSpec(1, 64, 16.0)
    u0 = gaussian(g, 1.2)
    # the time integral enters as (dt * w**8)**(1/8), so x1 jumps on the first
    # step; 2.5 * H1 puts the crossing well inside the horizon
    R = 2.5 * h1_norm(u0)
    dt = 1e-3

    def run(radius):
        traj = []
        # keep stepping past the crossing so both runs share the full path
        out = evolve(initial_state(u0), SolverConfig(dt=dt, power=7, radius=radius),
                     NoiseSpec(amplitude=0.5, sigma=2.0), CutoffSpec(), RngStream(3, (0, 0)), 0.6,
                     callbacks=[lambda s: (traj.append(s.u.values.copy()), True)[1]],
                     check_resolution=False)
        return out, traj

    with Clock() as clk:
        a, ua = run(R)
        b, ub = run(2 * R)
    n = round(a.tau_R / dt)
    diff = max(float(np.max(np.abs(x - y))) for x, y in zip(ua[:n + 1], ub[:n + 1]))
    ok = a.hit and a.tau_R > 0.1 and diff <= 1e-12 and b.tau_R >= a.tau_R and clk.seconds <= 120
    acceptance_report(4, "truncation coupling", ok,
                      f"sup diff {diff:.1e} up to tau_R={a.tau_R:.3f}, tau_2R={b.tau_R:.3f}",
                      clk.seconds)
    assert a.hit and a.tau_R > 0.1
    assert diff <= 1e-12
    assert b.tau_R >= a.tau_R
    assert clk.seconds <= 120


SCALING_CONFIG = """\
seed: 0
grid: {dim: 1, n: 64, length: 16.0}
solver: {dt: 0.001, power: 7, radius_factor: 3.0}
noise: {amplitude: 0.5, family: gaussian, sigma: 2.0}
initial: {family: gaussian, amplitude: 1.12, width: 1.0}
ensemble: {top: 1.0, ratio: 0.7, count: 6, trajectories: 200}
fit: {fixed_beta: 0.25, free_beta: true, bootstrap: 200}
"""


def test_05_scaling_study(acceptance_report, tmp_path):
    cfg = tmp_path / "scaling.yaml"
    cfg.write_text(SCALING_CONFIG)
    with Clock() as clk:
        codes = [main(["scaling", "--config", str(cfg), "--out", str(tmp_path / f"w{w}"),
                       "--workers", str(w)]) for w in (1, 4)]
    s1 = (tmp_path / "w1" / "summary.json").read_bytes()
    s4 = (tmp_path / "w4" / "summary.json").read_bytes()
    summary = json.loads(s1)
    ests = summary["estimates"]
    p = [e["p_hat"] for e in ests]
    c_hat = summary["fit"]["fixed_beta"].get("c", math.nan)
    ok = (codes == [EXIT_OK, EXIT_OK] and len(ests) == 6 and all(e["trials"] == 200 for e in ests)
          and summary["monotone_within_intervals"] and s1 == s4 and c_hat > 0
          and clk.seconds <= 1800)
    acceptance_report(5, "scaling study", ok,
                      f"p_hat={[round(x, 3) for x in p]}, bitwise equal 1 vs 4 workers: {s1 == s4}, "
                      f"c_hat={c_hat:.3g}", clk.seconds)
    assert codes == [EXIT_OK, EXIT_OK]
    assert all(e["trials"] == 200 for e in ests) and len(ests) == 6
    assert summary["monotone_within_intervals"]
    assert any(0 < x < 1 for x in p)
    assert s1 == s4
    assert c_hat > 0
    assert clk.seconds <= 1800


def test_06_dispersive_probe(acceptance_report):
    g = GridSpec(3, 64, 34.0)
    with Clock() as clk:
        rep = dispersive_decay_probe(g, gaussian(g), 12 / 5, (1.5, 4.0), gaussian_sigma=1.0)
    slope = rep.measured["exponent"]
    ok = abs(slope + 0.25) <= 0.05 and rep.passed and clk.seconds <= 120
    acceptance_report(6, "dispersive decay", ok,
                      f"exponent {slope:.4f} vs -0.25, window below wrap time "
                      f"{rep.measured['wrap_around_time']:.2f}", clk.seconds)
    assert abs(slope + 0.25) <= 0.05
    assert rep.passed
    assert clk.seconds <= 120


def test_07_khintchine(acceptance_report):
    rng = np.random.default_rng(0)
    coeffs = [[1.0] * 8, [2.0**-j for j in range(4)], [1.0], rng.standard_normal(16)]
    with Clock() as clk:
        k2, k4 = khintchine_constant(2), khintchine_constant(4)
        rep = khintchine_empirical_check([2, 4, 8], coeffs, samples=100_000, seed=0)
    ok = (abs(k2 - 1) <= 1e-12 and abs(k4 - 3**0.25) <= 1e-10 and rep.passed
          and clk.seconds <= 60)
    acceptance_report(7, "Khintchine constants", ok,
                      f"K(2)-1={k2 - 1:.1e}, K(4)-3^(1/4)={k4 - 3**0.25:.1e}, "
                      f"empirical checks {sum(rep.checks.values())}/{len(rep.checks)}", clk.seconds)
    assert abs(k2 - 1) <= 1e-12
    assert abs(k4 - 3**0.25) <= 1e-10
    assert rep.passed
    assert clk.seconds <= 60


def test_08_bdg_probe(acceptance_report):
    g = GridSpec(1, 64, 20.0)
    spec = NoiseSpec(amplitude=0.5, sigma=2.0, k_max=8)
    with Clock() as clk:
        rep = stochastic_convolution_moment_probe(Field(g, np.ones(64)), spec, 0.5,
                                                  rhos=(2, 4, 8), samples=1000, seed=0)
    spread = rep.measured["ratio_spread"]
    ok = spread <= 10 and rep.checks["moments_nondecreasing"] and clk.seconds <= 600
    acceptance_report(8, "BDG consistency", ok, f"ratio max/min {spread:.2f}", clk.seconds)
    assert spread <= 10
    assert rep.checks["moments_nondecreasing"]
    assert clk.seconds <= 600


def test_09_strong_convergence(acceptance_report):
    g = GridSpec(1, 64, 16.0)
    with Clock() as clk:
        rep = strong_convergence_study(gaussian(g), SolverConfig(dt=0.1, power=3),
                                       NoiseSpec(amplitude=0.5, modes=((1,),)), 1.0,
                                       levels=4, finest_extra=3, seed=0)
    slope = rep.measured["slope"]
    ok = slope >= 0.5 and clk.seconds <= 300
    acceptance_report(9, "strong convergence", ok, f"error slope {slope:.3f}", clk.seconds)
    assert slope >= 0.5
    assert clk.seconds <= 300


def test_10_running_norm_offline(acceptance_report):
    g = GridSpec(1, 128, 16.0)
    cfg = SolverConfig(dt=1e-3, power=7, radius=1e6)
    rec = DiagnosticsRecorder(cfg, every=100, keep_snapshots=True)
    with Clock() as clk:
        st = initial_state(gaussian(g, 1.0))
        evolve(st, cfg, NoiseSpec(amplitude=0.5, sigma=2.0), CutoffSpec(), RngStream(0, (2,)),
               1.0, callbacks=[rec])
        sup, integral, x1 = recompute_x1(rec.snapshots, rec.times)
    rel = max(abs(sup / st.sup_h1 - 1), abs(integral / st.int_w8 - 1), abs(x1 / st.x1 - 1))
    ok = st.steps == 1000 and rel <= 1e-10 and clk.seconds <= 60
    acceptance_report(10, "running X1 norm vs offline", ok,
                      f"max relative difference {rel:.1e} over {st.steps} steps", clk.seconds)
    assert st.steps == 1000
    assert rel <= 1e-10
    assert clk.seconds <= 60


def test_11_fit_recovery(acceptance_report):
    T = np.array(geometric_ladder(1.0, 0.6, 6))
    with Clock() as clk:
        a, c, b, _ = fit_log_model(T, 2.0 - 3.0 * T**-0.4)
        a4, c4, _, _ = fit_log_model(T, -1.0 - 0.7 * T**-0.25, fixed_beta=0.25)
    err_free = max(abs(a - 2), abs(c - 3), abs(b - 0.4))
    err_fixed = max(abs(a4 + 1), abs(c4 - 0.7))
    ok = err_free <= 1e-8 and err_fixed <= 1e-10 and clk.seconds <= 1
    acceptance_report(11, "synthetic fit recovery", ok,
                      f"free-beta error {err_free:.1e}, fixed-beta error {err_fixed:.1e}", clk.seconds)
    assert err_free <= 1e-8
    assert err_fixed <= 1e-10
    assert clk.seconds <= 1
