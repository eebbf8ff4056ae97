import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalarflow.ambient import make_metric, reference_norm
from scalarflow.errors import (ContractViolation, IdentityViolation, SpacelikeViolation,
                               UnsupportedCheckError)
from scalarflow.surface import (GraphFunction, GridChart, codazzi_residual, gauss_scalar_check,
                                induced_metric, past_normal, read_snapshot_bin, reference_geometry,
                                second_fundamental_form, surface_geometry, tangent_norm_identity,
                                unit_normal_residual, vtilde_residual, write_snapshot_bin,
                                write_snapshot_csv)

from conftest import wave


def test_grid_chart_contract():
    with pytest.raises(ContractViolation):
        GridChart((4, 16), (0.1, 0.1))
    with pytest.raises(ContractViolation):
        GridChart((16, 16), (0.1, -0.1))
    with pytest.raises(ContractViolation):
        GridChart((16,), (0.1,))


def test_constant_graph_flat(flat2, torus64):
    g, ginv, v = induced_metric(torus64.constant(0.7), flat2)
    assert np.array_equal(g, np.broadcast_to(np.eye(2), g.shape))
    assert np.all(v == 1.0)
    nu = past_normal(torus64.constant(0.7), flat2)
    assert np.allclose(nu, [-1.0, 0.0, 0.0])
    h, hm, kappa = second_fundamental_form(torus64.constant(0.7), flat2)
    assert np.all(h == 0) and np.all(kappa == 0)


@pytest.mark.parametrize("a", [0.0, 0.5, 1.0])
def test_constant_graph_exp_warp(warp2, torus64, a):
    geo = surface_geometry(torus64.constant(a), warp2)
    eye = np.eye(2)
    assert np.allclose(geo.g, np.exp(-2 * a) * eye, rtol=1e-14)
    assert np.allclose(geo.ginv, np.exp(2 * a) * eye, rtol=1e-14)
    assert np.all(geo.v == 1.0)
    assert np.max(np.abs(geo.g @ geo.ginv - eye)) < 1e-14
    assert np.allclose(geo.nu, [-1.0, 0.0, 0.0])
    assert np.allclose(geo.h, np.exp(-2 * a) * eye, rtol=1e-13)
    assert np.allclose(geo.hmixed, eye, atol=1e-13)
    assert np.max(np.abs(geo.kappa - 1.0)) < 1e-12


def test_critical_point_of_graph(flat2, torus64):
    u = torus64.sample(lambda X: 0.3 * np.sin(X[..., 0]))
    geo = surface_geometry(u, flat2)
    node = (16, 5)  # x^1 = pi/2
    assert abs(geo.Du[node][0]) < 1e-15
    assert geo.v[node] == pytest.approx(1.0, abs=1e-15)


def _slope_graph(chart, slope):
    # discrete derivative of c sin x^1 at x^1 = 0 is c sin(h)/h
    h = chart.spacing[0]
    c = slope * h / math.sin(h)
    return chart.sample(lambda X: c * np.sin(X[..., 0]))


def test_normal_time_component(flat2, torus64):
    u = _slope_graph(torus64, math.sqrt(0.19))
    nu = past_normal(u, flat2)
    assert nu[0, 3, 0] == pytest.approx(-1 / 0.9, rel=1e-12)


def test_reference_norm_of_normal(torus64):
    m = make_metric("custom", 2, psi_time=0.2, psi_space=0.1, sigma_rate=0.3, sigma_aniso=0.2)
    u = torus64.sample(lambda X: 0.5 + 0.1 * np.sin(X[..., 0]) * np.cos(X[..., 1]))
    geo = surface_geometry(u, m)
    norm = reference_norm(m, geo.u, geo.x, geo.nu)
    assert np.max(np.abs(norm - np.sqrt(2 * geo.vtilde ** 2 - 1))) < 1e-12
    const = surface_geometry(torus64.constant(0.3), m)
    assert np.allclose(reference_norm(m, const.u, const.x, const.nu), 1.0)


def test_graph_curvature_matches_curve_formula(flat2):
    # kappa of the cylinder over u = eps sin x^1 is -u''/(1 - u'^2)^(3/2)
    eps = 0.05
    errs = []
    for N in (32, 64):
        chart = GridChart.torus(2, N)
        u = chart.sample(lambda X: eps * np.sin(X[..., 0]))
        geo = surface_geometry(u, flat2)
        x = chart.coords()[..., 0]
        exact = eps * np.sin(x) / (1 - (eps * np.cos(x)) ** 2) ** 1.5
        want = np.sort(np.stack([exact, np.zeros_like(exact)], -1), axis=-1)
        errs.append(np.max(np.abs(geo.kappa - want)))
        if N == 64:
            assert geo.kappa[16, 0, 1] == pytest.approx(eps, rel=2e-3)
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_spacelike_violation_names_node(flat2, torus64):
    u = _slope_graph(torus64, 1.2)
    with pytest.raises(SpacelikeViolation) as info:
        surface_geometry(u, flat2)
    # |Du|^2 peaks where cos x^1 = +-1
    assert info.value.node[0] in (0, 32)
    assert info.value.grad_sq > 1.0


def test_compiled_matches_reference():
    m = make_metric("custom", 2, psi_time=0.3, psi_space=0.1, sigma_rate=0.2, sigma_aniso=0.1)
    chart = GridChart((24, 20), (2 * np.pi / 24, 2 * np.pi / 20))
    u = chart.sample(lambda X: 1.0 + 0.04 * np.sin(X[..., 0]) + 0.03 * np.cos(X[..., 0] - X[..., 1]))
    a, b = surface_geometry(u, m), reference_geometry(u, m)
    for field in ("g", "ginv", "h", "hmixed", "H", "A2", "v", "christoffel"):
        assert np.max(np.abs(getattr(a, field) - getattr(b, field))) < 1e-12, field
    assert np.max(np.abs(a.kappa - b.kappa)) < 1e-12


def test_generic_dimension_three():
    m = make_metric("exp-warp", 3)
    chart = GridChart.torus(3, 10)
    u = chart.sample(lambda X: 1.0 + 0.01 * np.sin(X[..., 0]) * np.cos(X[..., 2]))
    a, b = surface_geometry(u, m), reference_geometry(u, m)
    assert np.max(np.abs(a.h - b.h)) < 1e-12
    assert np.max(np.abs(a.kappa - b.kappa)) < 1e-12


def test_eigen_consistency(torus64):
    m = make_metric("custom", 2, psi_time=0.1, psi_space=0.2, sigma_rate=0.5, sigma_aniso=0.2)
    u = wave(torus64, 0.2).with_values(0.3 + wave(torus64, 0.2).values)
    geo = surface_geometry(u, m)
    assert np.max(np.abs(geo.kappa.sum(-1) - np.einsum("...ij,...ij->...", geo.ginv, geo.h))) < 1e-8
    assert np.max(np.abs((geo.kappa ** 2).sum(-1) - geo.A2)) < 1e-8
    assert np.all(np.diff(geo.kappa, axis=-1) >= 0)
    assert np.max(np.abs(geo.g @ geo.ginv - np.eye(2))) < 1e-10
    assert geo.ginv_discrepancy < 1e-8
    assert np.all(geo.nu[..., 0] < 0)


def test_codazzi_and_gauss(flat2):
    const = GridChart.torus(2, 32).constant(0.4)
    assert np.max(codazzi_residual(const, flat2)) == 0.0
    assert np.max(gauss_scalar_check(const, flat2)) == 0.0
    ratios = []
    for fn in (codazzi_residual, gauss_scalar_check):
        r32 = np.max(fn(wave(GridChart.torus(2, 32)), flat2))
        r64 = np.max(fn(wave(GridChart.torus(2, 64)), flat2))
        ratios.append(r32 / r64)
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


def test_one_dimensional_wave_residuals_vanish(flat2):
    # a cylinder over a curve is intrinsically flat with H^2 = |A|^2, and the
    # discrete residuals vanish at every resolution
    for N in (16, 32, 64):
        chart = GridChart.torus(2, N)
        assert np.max(codazzi_residual(chart.sample(lambda X: 0.3 * np.sin(X[..., 0])), flat2)) < 1e-12
        assert np.max(gauss_scalar_check(chart.sample(lambda X: 0.1 * np.sin(X[..., 0])), flat2)) < 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_gauss_on_de_sitter_slice(n):
    m = make_metric("exp-warp", n)
    u = GridChart.torus(n, 8).constant(0.5)
    geo = surface_geometry(u, m)
    assert np.allclose(geo.H ** 2 - geo.A2, n * (n - 1))
    assert np.max(gauss_scalar_check(u, m)) < 1e-10


def test_residual_checks_need_oracle(torus64):
    m = make_metric("custom", 2, psi_time=0.1)
    with pytest.raises(UnsupportedCheckError):
        codazzi_residual(torus64.constant(0.0), m)


def test_tangent_norm_examples(flat2, torus64):
    u = torus64.constant(0.2)
    assert tangent_norm_identity(u, flat2, (3, 4), [1.0, 0.0]) == pytest.approx(1.0)
    u = _slope_graph(torus64, math.sqrt(0.2))
    xi = np.array([1.0 / math.sqrt(0.8), 0.0])
    assert tangent_norm_identity(u, flat2, (0, 0), xi) == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ContractViolation):
        tangent_norm_identity(u, flat2, (0, 0), [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(c=st.lists(st.floats(-0.08, 0.08), min_size=4, max_size=4),
       node=st.tuples(st.integers(0, 23), st.integers(0, 23)),
       angle=st.floats(0, 2 * math.pi))
def test_tangent_norm_identity_random(c, node, angle):
    m = make_metric("custom", 2, psi_time=0.2, psi_space=0.1, sigma_rate=0.3, sigma_aniso=0.2)
    chart = GridChart.torus(2, 24)
    u = chart.sample(lambda X: 0.4 + c[0] * np.sin(X[..., 0]) + c[1] * np.cos(X[..., 1])
                     + c[2] * np.sin(X[..., 0] + X[..., 1]) + c[3] * np.cos(2 * X[..., 0]))
    g = surface_geometry(u, m).g[node]
    xi = np.array([math.cos(angle), math.sin(angle)])
    xi /= math.sqrt(xi @ g @ xi)
    try:
        tangent_norm_identity(u, m, node, xi)
    except IdentityViolation as exc:  # pragma: no cover
        pytest.fail(str(exc))


@settings(max_examples=30, deadline=None)
@given(c=st.lists(st.floats(-0.1, 0.1), min_size=3, max_size=3), level=st.floats(-1, 2))
def test_normal_and_vtilde_identities(c, level):
    m = make_metric("custom", 2, psi_time=0.3, psi_space=0.2, sigma_rate=0.2, sigma_aniso=0.3)
    chart = GridChart.torus(2, 16)
    u = chart.sample(lambda X: level + c[0] * np.sin(X[..., 0]) + c[1] * np.cos(X[..., 1])
                     + c[2] * np.sin(X[..., 0] - 2 * X[..., 1]))
    geo = surface_geometry(u, m)
    assert unit_normal_residual(geo, m) < 1e-10
    assert vtilde_residual(geo) < 1e-10
    assert geo.ginv_discrepancy < 1e-8


def test_snapshot_round_trip(tmp_path, warp2):
    chart = GridChart((16, 12), (0.3, 0.25))
    rng = np.random.default_rng(5)
    u = GraphFunction(chart, 1.0 + 1e-3 * rng.standard_normal(chart.shape))
    write_snapshot_bin(tmp_path / "u.snap", u)
    raw = (tmp_path / "u.snap").read_bytes()
    assert raw[:8] == b"SCFSNAP1" and len(raw) == 64 + 8 * u.values.size
    back = read_snapshot_bin(tmp_path / "u.snap")
    assert back.chart == chart
    assert back.values.tobytes() == u.values.tobytes()

    geo = surface_geometry(u, warp2)
    write_snapshot_csv(tmp_path / "u.csv", u, geo)
    data = np.genfromtxt(tmp_path / "u.csv", delimiter=",", names=True)
    assert data.dtype.names == ("i0", "i1", "u", "v", "kappa1", "kappa2")
    assert np.array_equal(data["u"], u.values.ravel())
    assert np.array_equal(data["kappa2"], geo.kappa[..., 1].ravel())


def test_snapshot_rejects_garbage(tmp_path):
    (tmp_path / "bad.snap").write_bytes(b"NOTASNAP" + bytes(56))
    with pytest.raises(ContractViolation):
        read_snapshot_bin(tmp_path / "bad.snap")
