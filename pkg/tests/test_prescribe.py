import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalarflow.ambient import make_metric, reference_norm
from scalarflow.errors import ConfigError, ContractViolation, PositivityViolation
from scalarflow.prescribe import (AuditSpec, CutoffConfig, cutoff_theta, cutoff_theta_prime,
                                  effective_rhs, growth_audit, make_f, modified_normal,
                                  tilde_v_of)
from scalarflow.surface import GridChart, surface_geometry

K2 = CutoffConfig(2.0)


def test_theta_branches():
    assert cutoff_theta(1.0, K2) == 1.0
    assert cutoff_theta(5.0, K2) == 4.0
    assert cutoff_theta(0.0, K2) == 0.0
    for j in (2.0, 4.0):
        for eps in (1e-9, 1e-12):
            assert abs(cutoff_theta(j + eps, K2) - cutoff_theta(j - eps, K2)) < 1e-8
        assert abs(cutoff_theta(j, K2) - cutoff_theta(np.nextafter(j, 0), K2)) < 1e-12
        assert abs(cutoff_theta(np.nextafter(j, 9), K2) - cutoff_theta(j, K2)) < 1e-12
    with pytest.raises(ContractViolation):
        cutoff_theta(-0.1, K2)


def test_theta_slope_bound_dense():
    t = np.linspace(0.0, 8.0, 10_001)
    th = cutoff_theta(t, K2)
    slope = np.diff(th) / np.diff(t)
    assert slope.min() >= 0.0 and slope.max() <= 4.0
    assert th.max() <= 4.0
    # the blend's largest slope; see cutoff_theta_prime
    assert cutoff_theta_prime(t, K2).max() == pytest.approx(1.7778, abs=1e-3)


def test_theta_prime_matches_differences():
    t = np.linspace(0.1, 7.9, 500)
    h = 1e-6
    fd = (cutoff_theta(t + h, K2) - cutoff_theta(t - h, K2)) / (2 * h)
    assert np.max(np.abs(fd - cutoff_theta_prime(t, K2))) < 1e-6


def test_cutoff_config_validates():
    with pytest.raises(ConfigError):
        CutoffConfig(1.0)
    assert CutoffConfig(3).covers(3.0) and not CutoffConfig(3).covers(3.5)


def test_modified_normal_examples():
    nu = np.array([-1.2, 0.3, 0.5])
    assert np.array_equal(modified_normal(nu, 1.0, K2), nu)
    scale = modified_normal(nu, 3.0, K2)[0] / nu[0]
    assert 2 / 3 < scale < 4 / 3
    assert scale == pytest.approx(cutoff_theta(3.0, K2) / 3.0)
    assert np.allclose(modified_normal(nu, 10.0, K2), 0.4 * nu)
    with pytest.raises(ContractViolation):
        modified_normal(nu, 0.5, K2)


def _unit_past_normals(metric, x0, x, vt, direction):
    """Unit past-directed vectors with e^psi-weighted time component vt."""
    psi, _ = metric.psi(x0, x)
    sig, _ = metric.sigma(x0, x)
    w = direction / np.sqrt(np.einsum("...i,...ij,...j->...", direction, sig, direction))[..., None]
    nu = np.empty(np.shape(x0) + (metric.dim_n + 1,))
    e = np.exp(-psi)
    nu[..., 0] = -e * vt
    nu[..., 1:] = (e * np.sqrt(vt ** 2 - 1))[..., None] * w
    return nu


def test_modified_normal_norm_bound():
    m = make_metric("custom", 2, psi_time=0.2, psi_space=0.1, sigma_rate=0.3, sigma_aniso=0.2)
    rng = np.random.default_rng(2)
    N = 10_000
    x0 = rng.uniform(-1, 2, N)
    x = rng.uniform(0, 2 * np.pi, (N, 2))
    vt = np.exp(rng.uniform(0, np.log(200), N))
    nu = _unit_past_normals(m, x0, x, vt, rng.normal(size=(N, 2)))
    assert np.allclose(tilde_v_of(m, x0, x, nu), vt)
    for k in (1.5, 2.0, 5.0):
        cfg = CutoffConfig(k)
        norm = reference_norm(m, x0, x, modified_normal(nu, vt, cfg))
        bound = math.sqrt(2) * cutoff_theta(vt, cfg)
        assert np.all(norm <= bound * (1 + 1e-12))
        assert np.all(bound <= 2 * math.sqrt(2) * k * (1 + 1e-15))


def test_make_f_families():
    f = make_f("time-profile", amplitude=1.0, rate=1.0, center=1.0)
    assert f(np.array(2.0), np.zeros(2)) == pytest.approx(math.exp(-1))
    assert not f.depends_on_normal
    tilt = make_f("normal-tilt", base=1.0, eps=0.5)
    assert tilt(0.0, np.zeros(2), np.array([-2.0, 0.0, 0.0])) == 3.0
    with pytest.raises(ContractViolation):
        tilt(0.0, np.zeros(2))
    with pytest.raises(ConfigError):
        make_f("gaussian", width=1.0)
    with pytest.raises(ConfigError):
        make_f("constant")
    with pytest.raises(ConfigError):
        make_f("constant", value=1.0, extra=2.0)


def test_effective_rhs_examples():
    warp = make_metric("exp-warp", 2)
    const = make_f("constant", value=4.0)
    assert effective_rhs(const, K2, warp) is const
    root = effective_rhs(const, K2, warp, sqrt_mode=True)
    assert root(0.3, np.zeros(2)) == 2.0

    tilt = make_f("normal-tilt", base=1.0, eps=0.5)
    eff = effective_rhs(tilt, K2, warp)
    rng = np.random.default_rng(4)
    x0 = rng.uniform(0, 2, 50)
    x = rng.uniform(0, 6, (50, 2))
    vt = rng.uniform(1, 2, 50)  # at or below k: identity branch
    nu = _unit_past_normals(warp, x0, x, vt, rng.normal(size=(50, 2)))
    assert np.array_equal(eff(x0, x, nu), tilt(x0, x, nu))
    vt = rng.uniform(5, 9, 50)
    nu = _unit_past_normals(warp, x0, x, vt, rng.normal(size=(50, 2)))
    assert np.all(eff(x0, x, nu) <= 1.0 + 0.5 * 16.0 + 1e-12)
    assert np.all(eff(x0, x, nu) < tilt(x0, x, nu))


def test_cutoff_idempotent_on_barriers():
    m = make_metric("custom", 2, psi_time=0.1, sigma_rate=0.8)
    chart = GridChart.torus(2, 32)
    tilt = make_f("normal-tilt", base=1.0, eps=0.3)
    for u in (chart.sample(lambda X: 0.8 + 0.05 * np.sin(X[..., 0])), chart.constant(0.2)):
        geo = surface_geometry(u, m)
        k0 = max(1.0 + 1e-9, float(geo.vtilde.max()))
        eff = effective_rhs(tilt, CutoffConfig(k0), m)
        assert np.array_equal(eff(geo.u, geo.x, geo.nu), tilt(geo.u, geo.x, geo.nu))


def test_audit_constant():
    rep = growth_audit(make_f("constant", value=1.0), make_metric("exp-warp", 2))
    assert rep["c1"] == 1.0
    assert rep["c2"] == 0.0 and rep["c3"] == 0.0
    assert rep.strong_bound_raw


def test_audit_time_profile():
    warp = make_metric("exp-warp", 2)
    f = make_f("time-profile", amplitude=1.0, rate=1.0, center=1.0)
    rep = growth_audit(f, warp, AuditSpec(x0_range=(0.0, 2.0)))
    assert rep["c3"] == 0.0
    assert 0.0 < rep["c2"] < math.inf
    assert rep["c1"] == pytest.approx(math.exp(-1))


def test_audit_normal_tilt_cutoff_depends_on_k():
    warp = make_metric("exp-warp", 2)
    f = make_f("normal-tilt", base=0.5, eps=0.1)
    spec = AuditSpec(x0_range=(0.0, 2.0))
    reps = {k: growth_audit(f, warp, spec, CutoffConfig(k)) for k in (2.0, 4.0)}
    for rep in reps.values():
        assert not rep.strong_bound_raw
        assert rep.strong_bound_cutoff
        assert math.isfinite(rep["c2_strong_cutoff"]) and math.isfinite(rep["c3_strong_cutoff"])
    assert reps[2.0]["c3_strong_cutoff"] < reps[4.0]["c3_strong_cutoff"]
    assert reps[2.0]["c3_strong"] == reps[4.0]["c3_strong"]


def test_audit_rejects_nonpositive(tmp_path):
    f = make_f("time-profile", amplitude=-1.0, rate=1.0, center=0.0)
    with pytest.raises(PositivityViolation) as info:
        growth_audit(f, make_metric("flat-static", 2))
    assert info.value.witness is not None


def test_audit_csv(tmp_path):
    rep = growth_audit(make_f("constant", value=2.0), make_metric("flat-static", 2))
    rep.write_csv(tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "constant,estimate,samples,witness"
    assert lines[1].startswith("c1,2.0,")


@settings(max_examples=100, deadline=None)
@given(k=st.floats(1.01, 50), t=st.lists(st.floats(0, 200), min_size=2, max_size=50))
def test_theta_monotone_and_bounded(k, t):
    cfg = CutoffConfig(k)
    t = np.sort(np.array(t))
    th = cutoff_theta(t, cfg)
    assert np.all(np.diff(th) >= -1e-12 * k)
    assert np.all(th <= 2 * k)
    assert np.all((cutoff_theta_prime(t, cfg) >= 0) & (cutoff_theta_prime(t, cfg) <= 4))
