"""Warped-product Lorentzian metrics e^{2 psi} (-(dx^0)^2 + sigma_ij dx^i dx^j).

Points are given as a time coordinate ``x0`` of shape ``S`` and spatial
coordinates ``x`` of shape ``S + (n,)``.  Every derived quantity keeps the
point axes first and the tensor indices last, so ``np.linalg`` routines
broadcast over whole grids.

Providers supply psi, sigma and their first partials in closed form.
Finite differences are used only by :func:`partials_selftest`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, DegenerateMetricError

PRESETS = ("flat-static", "exp-warp", "custom")


@dataclass(frozen=True)
class AmbientMetric:
    """Closed-form ambient metric data for one named family.

    ``psi_fn(x0, x) -> (psi, dpsi)`` with ``dpsi`` of shape ``S + (n+1,)``;
    ``sigma_fn(x0, x) -> (sigma, dsigma)`` with ``dsigma[..., a, i, j]`` the
    partial of sigma_ij along coordinate ``a`` (a = 0 is time).
    ``riemann_fn`` returns the fully covariant ambient Riemann tensor, or is
    None when no closed form is known for the family.
    """

    dim_n: int
    name: str
    params: dict
    psi_fn: Callable = field(repr=False, compare=False)
    sigma_fn: Callable = field(repr=False, compare=False)
    riemann_fn: Callable | None = field(default=None, repr=False, compare=False)

    @property
    def has_curvature_oracle(self) -> bool:
        return self.riemann_fn is not None

    def psi(self, x0, x):
        return self.psi_fn(np.asarray(x0, float), np.asarray(x, float))

    def sigma(self, x0, x, check: bool = True):
        sig, dsig = self.sigma_fn(np.asarray(x0, float), np.asarray(x, float))
        if check:
            _check_pd(sig)
        return sig, dsig

    def lorentz(self, x0, x):
        """Return (g_bar, g_bar_inv, dg_bar) with dg_bar[..., c, a, b] = d_c g_ab."""
        x0 = np.asarray(x0, float)
        x = np.asarray(x, float)
        n = self.dim_n
        psi, dpsi = self.psi(x0, x)
        sig, dsig = self.sigma(x0, x)
        S = x0.shape
        G = np.zeros(S + (n + 1, n + 1))
        G[..., 0, 0] = -1.0
        G[..., 1:, 1:] = sig
        dG = np.zeros(S + (n + 1, n + 1, n + 1))
        dG[..., :, 1:, 1:] = dsig
        e2 = np.exp(2.0 * psi)
        g = e2[..., None, None] * G
        dg = e2[..., None, None, None] * (2.0 * dpsi[..., :, None, None] * G[..., None, :, :] + dG)
        Ginv = np.zeros_like(G)
        Ginv[..., 0, 0] = -1.0
        Ginv[..., 1:, 1:] = np.linalg.inv(sig)
        ginv = np.exp(-2.0 * psi)[..., None, None] * Ginv
        return g, ginv, dg

    def riemann(self, x0, x):
        if self.riemann_fn is None:
            return None
        return self.riemann_fn(np.asarray(x0, float), np.asarray(x, float))


def _min_eig(sym: np.ndarray) -> np.ndarray:
    if sym.shape[-1] == 2:
        half = 0.5 * (sym[..., 0, 0] + sym[..., 1, 1])
        det = sym[..., 0, 0] * sym[..., 1, 1] - sym[..., 0, 1] * sym[..., 1, 0]
        return half - np.sqrt(np.maximum(half * half - det, 0.0))
    return np.linalg.eigvalsh(sym)[..., 0]


def _check_pd(sig: np.ndarray) -> None:
    lam = _min_eig(sig)
    if not np.all(lam > 0.0):
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(lam), lam.shape)) if lam.ndim else ()
        raise DegenerateMetricError(f"sigma not positive definite at point {idx}: min eigenvalue {np.min(lam):.3g}")


def _const_curvature_riemann(metric_lorentz, K: float):
    def riemann(x0, x):
        g, _, _ = metric_lorentz(x0, x)
        return K * (np.einsum("...ac,...bd->...abcd", g, g) - np.einsum("...ad,...bc->...abcd", g, g))
    return riemann


def make_metric(name: str, dim_n: int, **params) -> AmbientMetric:
    """Build a named metric family.

    flat-static
        psi = 0, sigma = delta; ambient curvature zero.
    exp-warp (rate=1)
        psi = 0, sigma = exp(-2 rate x0) delta.  This is a de Sitter patch of
        constant curvature rate^2; the Riemann oracle is attached.
    custom (psi_time, psi_space, sigma_rate, sigma_aniso; all default 0)
        psi = psi_time x0 + psi_space sum_i sin x^i,
        sigma = exp(-2 sigma_rate x0) diag(1 + sigma_aniso cos x^i).
        No curvature oracle.
    """
    if dim_n < 2:
        raise ContractViolation("dim_n must be >= 2")
    n = dim_n
    eye = np.eye(n)

    if name == "flat-static":
        if params:
            raise ContractViolation(f"flat-static takes no parameters, got {sorted(params)}")

        def psi_fn(x0, x):
            return np.zeros(x0.shape), np.zeros(x0.shape + (n + 1,))

        def sigma_fn(x0, x):
            return np.broadcast_to(eye, x0.shape + (n, n)).copy(), np.zeros(x0.shape + (n + 1, n, n))

        def riemann_fn(x0, x):
            return np.zeros(x0.shape + (n + 1,) * 4)

        return AmbientMetric(n, name, {}, psi_fn, sigma_fn, riemann_fn)

    if name == "exp-warp":
        unknown = set(params) - {"rate"}
        if unknown:
            raise ContractViolation(f"exp-warp: unknown parameters {sorted(unknown)}")
        rate = float(params.get("rate", 1.0))

        def psi_fn(x0, x):
            return np.zeros(x0.shape), np.zeros(x0.shape + (n + 1,))

        def sigma_fn(x0, x):
            a = np.exp(-2.0 * rate * x0)
            sig = np.zeros(x0.shape + (n, n))
            dsig = np.zeros(x0.shape + (n + 1, n, n))
            for i in range(n):
                sig[..., i, i] = a
                dsig[..., 0, i, i] = -2.0 * rate * a
            return sig, dsig

        m = AmbientMetric(n, name, {"rate": rate}, psi_fn, sigma_fn)
        return AmbientMetric(n, name, {"rate": rate}, psi_fn, sigma_fn,
                             _const_curvature_riemann(m.lorentz, rate * rate))

    if name == "custom":
        allowed = {"psi_time", "psi_space", "sigma_rate", "sigma_aniso"}
        unknown = set(params) - allowed
        if unknown:
            raise ContractViolation(f"custom: unknown parameters {sorted(unknown)}")
        p = {k: float(params.get(k, 0.0)) for k in sorted(allowed)}
        a, b, c, d = p["psi_time"], p["psi_space"], p["sigma_rate"], p["sigma_aniso"]

        def psi_fn(x0, x):
            psi = a * x0 + b * np.sum(np.sin(x), axis=-1)
            dpsi = np.empty(x0.shape + (n + 1,))
            dpsi[..., 0] = a
            dpsi[..., 1:] = b * np.cos(x)
            return psi, dpsi

        def sigma_fn(x0, x):
            scale = np.exp(-2.0 * c * x0)
            diag = 1.0 + d * np.cos(x)
            sig = np.zeros(x0.shape + (n, n))
            dsig = np.zeros(x0.shape + (n + 1, n, n))
            for i in range(n):
                sig[..., i, i] = scale * diag[..., i]
                dsig[..., 0, i, i] = -2.0 * c * sig[..., i, i]
                dsig[..., i + 1, i, i] = -scale * d * np.sin(x[..., i])
            return sig, dsig

        return AmbientMetric(n, name, p, psi_fn, sigma_fn)

    raise ContractViolation(f"unknown metric preset {name!r}; expected one of {PRESETS}")


def christoffel(metric: AmbientMetric, x0, x) -> np.ndarray:
    """Levi-Civita symbols; ``out[..., a, b, c]`` is Gamma^a_{bc}."""
    _, ginv, dg = metric.lorentz(x0, x)
    return _christoffel_from(ginv, dg)


def _christoffel_from(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    # dg[..., c, a, b] = d_c g_ab
    t1 = np.einsum("...bdc->...dbc", dg)      # d_b g_dc  -> index order (d, b, c)
    t2 = np.einsum("...cdb->...dbc", dg)      # d_c g_db
    t3 = np.einsum("...dbc->...dbc", dg)      # d_d g_bc
    first = 0.5 * (t1 + t2 - t3)
    return np.einsum("...ad,...dbc->...abc", ginv, first)


def time_christoffels(metric: AmbientMetric, x0, x):
    """Closed forms of the symbols with upper index 0.

    Returns (Gamma^0_00, Gamma^0_0i, Gamma^0_ij) = (d_0 psi, d_i psi,
    d_0 psi sigma_ij + 1/2 d_0 sigma_ij).  Used on the hot path; the generic
    :func:`christoffel` is the independent route.
    """
    _, dpsi = metric.psi(x0, x)
    sig, dsig = metric.sigma(x0, x, check=False)
    return time_symbols(dpsi, sig, dsig)


def time_symbols(dpsi, sig, dsig):
    g000 = dpsi[..., 0]
    g00i = dpsi[..., 1:]
    g0ij = dpsi[..., 0, None, None] * sig + 0.5 * dsig[..., 0, :, :]
    return g000, g00i, g0ij


def slice_second_fundamental_form(metric: AmbientMetric, x0, x) -> np.ndarray:
    """h_bar_ij of the slice {x^0 = const} w.r.t. the past normal.

    e^{-psi} h_bar_ij = -1/2 d_0 sigma_ij - d_0 psi sigma_ij.
    """
    psi, dpsi = metric.psi(x0, x)
    sig, dsig = metric.sigma(x0, x)
    return np.exp(psi)[..., None, None] * (-0.5 * dsig[..., 0, :, :] - dpsi[..., 0, None, None] * sig)


def slice_principal_curvatures(metric: AmbientMetric, x0, x) -> np.ndarray:
    """Eigenvalues of the slice shape operator e^{-2psi} sigma^{-1} h_bar, ascending."""
    psi, _ = metric.psi(x0, x)
    sig, _ = metric.sigma(x0, x)
    hb = slice_second_fundamental_form(metric, x0, x)
    g = np.exp(2.0 * psi)[..., None, None] * sig
    L = np.linalg.cholesky(g)
    Li = np.linalg.inv(L)
    return np.linalg.eigvalsh(Li @ hb @ np.swapaxes(Li, -1, -2))


def reference_metric(metric: AmbientMetric, x0, x) -> np.ndarray:
    """Riemannian reference metric e^{2psi} diag(1, sigma)."""
    x0 = np.asarray(x0, float)
    psi, _ = metric.psi(x0, x)
    sig, _ = metric.sigma(x0, x)
    n = metric.dim_n
    G = np.zeros(x0.shape + (n + 1, n + 1))
    G[..., 0, 0] = 1.0
    G[..., 1:, 1:] = sig
    return np.exp(2.0 * psi)[..., None, None] * G


def reference_norm(metric: AmbientMetric, x0, x, vector) -> np.ndarray | float:
    """(g_tilde_ab eta^a eta^b)^(1/2) for a contravariant spacetime vector."""
    eta = np.asarray(vector, float)
    gt = reference_metric(metric, x0, x)
    out = np.sqrt(np.einsum("...a,...ab,...b->...", eta, gt, eta))
    return float(out) if np.ndim(out) == 0 else out


def reference_conorm(metric: AmbientMetric, x0, x, covector) -> np.ndarray:
    """Reference-metric norm of a covector."""
    w = np.asarray(covector, float)
    gt = reference_metric(metric, x0, x)
    return np.sqrt(np.einsum("...a,...ab,...b->...", w, np.linalg.inv(gt), w))


def lorentz_inner(metric: AmbientMetric, x0, x, a, b) -> np.ndarray:
    g, _, _ = metric.lorentz(x0, x)
    return np.einsum("...a,...ab,...b->...", np.asarray(a, float), g, np.asarray(b, float))


def partials_selftest(metric: AmbientMetric, x0, x, probe: float = 1e-4) -> float:
    """Largest gap between supplied partials and centered differences."""
    x0 = np.asarray(x0, float)
    x = np.asarray(x, float)
    n = metric.dim_n
    psi, dpsi = metric.psi(x0, x)
    sig, dsig = metric.sigma(x0, x)
    worst = 0.0
    for a in range(n + 1):
        dx0 = probe if a == 0 else 0.0
        dx = np.zeros(n)
        if a > 0:
            dx[a - 1] = probe
        pp, _ = metric.psi(x0 + dx0, x + dx)
        pm, _ = metric.psi(x0 - dx0, x - dx)
        sp, _ = metric.sigma(x0 + dx0, x + dx)
        sm, _ = metric.sigma(x0 - dx0, x - dx)
        worst = max(worst, float(np.max(np.abs((pp - pm) / (2 * probe) - dpsi[..., a]))))
        worst = max(worst, float(np.max(np.abs((sp - sm) / (2 * probe) - dsig[..., a, :, :]))))
    return worst


def metric_compatibility_residual(metric: AmbientMetric, x0, x, probe: float = 1e-4) -> float:
    """max |d_c g_ab - Gamma^d_ca g_db - Gamma^d_cb g_ad| with d_c g by finite differences."""
    x0 = np.asarray(x0, float)
    x = np.asarray(x, float)
    n = metric.dim_n
    g, _, _ = metric.lorentz(x0, x)
    Gam = christoffel(metric, x0, x)
    worst = 0.0
    for c in range(n + 1):
        dx0 = probe if c == 0 else 0.0
        dx = np.zeros(n)
        if c > 0:
            dx[c - 1] = probe
        gp, _, _ = metric.lorentz(x0 + dx0, x + dx)
        gm, _, _ = metric.lorentz(x0 - dx0, x - dx)
        dcg = (gp - gm) / (2 * probe)
        res = dcg - np.einsum("...da,...db->...ab", Gam[..., :, c, :], g) \
                  - np.einsum("...db,...ad->...ab", Gam[..., :, c, :], g)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst
