"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that pytest prints in an
"acceptance criteria" section at the end of the session.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from threadpoolctl import threadpool_limits

from scalarflow import curvature as cv
from scalarflow.ambient import make_metric
from scalarflow.cli import main
from scalarflow.config import RunConfig
from scalarflow.errors import InvalidUpperBarrier
from scalarflow.flow import FlowConfig, run, stationary_residual
from scalarflow.prescribe import (CutoffConfig, cutoff_theta, cutoff_theta_prime, make_f,
                                  modified_normal)
from scalarflow.surface import GridChart, codazzi_residual, gauss_scalar_check, surface_geometry
from scalarflow.verify import run_suites

from conftest import CONFIGS


@pytest.fixture(scope="module")
def ode_run():
    cfg = RunConfig.load(CONFIGS / "exp_warp_converge.yaml")
    with threadpool_limits(limits=1):
        t0 = time.perf_counter()
        state, trace, report = run(cfg.flow_config(), cfg.metric(), cfg.f())
        wall = time.perf_counter() - t0
    return state, trace, report, wall


def test_criterion_1_ode_oracle(ode_run, report_line):
    state, trace, report, wall = ode_run
    t = trace.column("t")
    sol = solve_ivp(lambda s, u: -(1.0 - np.exp(-(u - 1.0))), (0.0, t[-1]), [2.0],
                    method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
    oracle = sol.sol(t)[0]
    closed = 1.0 + np.log1p((math.e - 1.0) * np.exp(-t))
    assert np.max(np.abs(oracle - closed)) < 1e-10  # the oracle itself
    traj_err = max(np.max(np.abs(trace.column("u_max") - oracle)),
                   np.max(np.abs(trace.column("u_min") - oracle)))
    final_err = float(np.max(np.abs(state.u.values - 1.0)))
    ok = (report.verdict == "converged" and final_err < 1e-6 and traj_err < 1e-6 and wall < 60.0)
    report_line("criterion 1 (ODE-oracle convergence)", ok,
                f"verdict={report.verdict} |u-1|={final_err:.2e} trajectory err={traj_err:.2e} "
                f"over {len(t)} trace rows, steps={report.steps}, wall={wall:.1f}s")
    assert ok


def test_criterion_2_perturbed_convergence(report_line):
    cfg = RunConfig.load(CONFIGS / "exp_warp_perturbed.yaml")
    flow_cfg = cfg.flow_config()
    metric = cfg.metric()
    try:
        state, trace, report = run(flow_cfg, metric, cfg.f())
    except InvalidUpperBarrier as exc:
        geo = surface_geometry(flow_cfg.upper, metric)
        report_line("criterion 2 (perturbed convergence + invariants)", False,
                    f"u0 = 2 + 0.05 sin x1 is rejected at startup ({exc}); "
                    f"min H_2 on u0 = {geo.H2.min():.3g}, kappa in "
                    f"[{geo.kappa.min():.3g}, {geo.kappa.max():.3g}]")
        pytest.fail(str(exc))
    upper = flow_cfg.upper.values
    u_hist_ok = (trace.column("u_min").min() >= -1e-9
                 and trace.column("u_max").max() <= upper.max() + 1e-9)
    ok = (report.verdict == "converged" and report.sup_res < 1e-6
          and trace.column("min_res").min() >= -1e-10 and u_hist_ok
          and report.max_vtilde_run <= report.vtilde_ceiling
          and report.max_kappa_run <= report.kappa_ceiling)
    report_line("criterion 2 (perturbed convergence + invariants)", ok,
                f"verdict={report.verdict} sup_res={report.sup_res:.2e} "
                f"min(F-f)={trace.column('min_res').min():.2e}")
    assert ok


def test_criterion_3_umbilic_slices(report_line):
    worst_k, worst_h2, worst_s2 = 0.0, 0.0, 0.0
    for n in (2, 3):
        m = make_metric("exp-warp", n)
        chart = GridChart.torus(n, 16 if n == 2 else 8)
        for a in (0.0, 0.5, 1.0):
            geo = surface_geometry(chart.constant(a), m)
            worst_k = max(worst_k, float(np.max(np.abs(geo.kappa - 1.0))))
            worst_h2 = max(worst_h2, float(np.max(np.abs(geo.H2 - n * (n - 1) / 2))))
            s2 = cv.sigma_k(geo.kappa.reshape(-1, n), 2)
            worst_s2 = max(worst_s2, float(np.max(np.abs(s2 - math.sqrt(n * (n - 1) / 2)))))
    ok = worst_k < 1e-10 and worst_h2 < 1e-10 and worst_s2 < 1e-10
    report_line("criterion 3 (umbilic slices)", ok,
                f"max|kappa-1|={worst_k:.1e} max|H2-n(n-1)/2|={worst_h2:.1e} "
                f"max|sigma2-sqrt(n(n-1)/2)|={worst_s2:.1e}")
    assert ok


def test_criterion_4_grid_convergence_order(report_line):
    flat = make_metric("flat-static", 2)
    ratios = {}
    for name, fn in (("codazzi", codazzi_residual), ("gauss", gauss_scalar_check)):
        r = [float(np.max(fn(GridChart.torus(2, N).sample(
            lambda X: 0.1 * np.sin(X[..., 0]) * np.sin(X[..., 1])), flat))) for N in (32, 64)]
        ratios[name] = r[0] / r[1]
    ok = all(3.5 <= q <= 4.5 for q in ratios.values())
    report_line("criterion 4 (second-order residuals)", ok,
                " ".join(f"{k} ratio={v:.3f}" for k, v in ratios.items()))
    assert ok


def test_criterion_5_curvature_battery(report_line):
    rows = run_suites("curvature", seed=0, samples=10_000)
    failed = [r.item for r in rows if not r.passed]
    battery = sum(r.samples for r in rows if r.item[0] in "abcdefg" and r.item[1] == "_")
    ok = not failed
    report_line("criterion 5 (curvature battery)", ok,
                f"{len(rows)} items, {battery} battery evaluations over n=2,3,5, "
                f"failures: {failed or 'none'}")
    assert ok


def test_criterion_6_cutoff_contract(ode_run, report_line):
    _, _, report, _ = ode_run
    worst_branch, worst_jump, slope_lo, slope_hi, normal_ok = 0.0, 0.0, np.inf, -np.inf, True
    rng = np.random.default_rng(6)
    for k in (1.5, 2.0, 4.0, 10.0):
        cfg = CutoffConfig(k)
        lo, hi = rng.uniform(0, k, 10_000), rng.uniform(2 * k, 50 * k, 10_000)
        worst_branch = max(worst_branch, float(np.max(np.abs(cutoff_theta(lo, cfg) - lo))),
                           float(np.max(np.abs(cutoff_theta(hi, cfg) - 2 * k))))
        for j in (k, 2 * k):
            for x in (np.nextafter(j, 0), np.nextafter(j, np.inf)):
                worst_jump = max(worst_jump, abs(cutoff_theta(x, cfg) - cutoff_theta(j, cfg)))
        t = np.linspace(0, 3 * k, 10_000)
        slope = np.diff(cutoff_theta(t, cfg)) / np.diff(t)
        prime = cutoff_theta_prime(t, cfg)
        slope_lo = min(slope_lo, slope.min(), prime.min())
        slope_hi = max(slope_hi, slope.max(), prime.max())
        tv = rng.uniform(1.0, k, 500)
        nu = rng.normal(size=(500, 3))
        normal_ok &= bool(np.array_equal(modified_normal(nu, tv, cfg), nu))
    ok = (worst_branch == 0.0 and worst_jump < 1e-12 and slope_lo >= 0 and slope_hi <= 4
          and normal_ok and report.cutoff_inactive is True)
    report_line("criterion 6 (cutoff contract)", ok,
                f"branch err={worst_branch:.1e} junction jump={worst_jump:.1e} "
                f"slope in [{slope_lo:.3f}, {slope_hi:.3f}] normal identity={normal_ok} "
                f"cutoff_inactive={report.cutoff_inactive} (max vtilde={report.max_vtilde_run!r})")
    assert ok


def test_criterion_7_failure_honesty(tmp_path, report_line, capsys):
    cfg = RunConfig.load(CONFIGS / "flat_static.yaml")
    raised = None
    try:
        run(cfg.flow_config(), cfg.metric(), cfg.f())
    except InvalidUpperBarrier as exc:
        raised = exc
    code = main(["run", str(CONFIGS / "flat_static.yaml"), "--out-dir", str(tmp_path)])
    err = capsys.readouterr().err
    ok = raised is not None and code == 1 and not (tmp_path / "trace.csv").exists()
    report_line("criterion 7 (failure honesty)", ok,
                f"InvalidUpperBarrier raised={raised is not None}, cli exit={code}, "
                f"no trace written; stderr: {err.strip()}")
    assert ok


def test_stationary_residual_at_convergence(ode_run):
    state, _, report, _ = ode_run
    assert stationary_residual(state) < 1e-8
    assert report.sup_res < 1e-8
