"""Geometry of a spacelike graph {x^0 = u(x)} over a periodic grid.

Spatial derivatives are second-order centered differences with periodic
wraparound.  Field arrays carry the grid axes first and tensor indices
last: ``g`` has shape ``chart.shape + (n, n)``.

The second fundamental form is taken with respect to the past-directed
normal throughout.  With this convention a slice {x^0 = a} of the
exp-warp metric has all principal curvatures equal to +1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .ambient import AmbientMetric, _christoffel_from, time_symbols
from .errors import (ContractViolation, DegenerateGeometryError, DegenerateMetricError, IdentityViolation,
                     SpacelikeViolation, UnsupportedCheckError)

SPACELIKE_MARGIN = 1e-6
MIN_POINTS = 8


@dataclass(frozen=True)
class GridChart:
    """Uniform periodic grid on the flat torus prod_i [0, shape_i * spacing_i)."""

    shape: tuple
    spacing: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        if len(shape) < 2 or len(shape) != len(spacing):
            raise ContractViolation("need n >= 2 axes with one spacing per axis")
        if min(shape) < MIN_POINTS:
            raise ContractViolation(f"every axis needs at least {MIN_POINTS} points, got {shape}")
        if min(spacing) <= 0.0:
            raise ContractViolation("grid spacing must be positive")

    @classmethod
    def torus(cls, n: int, points: int, length: float = 2.0 * math.pi) -> "GridChart":
        return cls((points,) * n, (length / points,) * n)

    @property
    def dim_n(self) -> int:
        return len(self.shape)

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    def coords(self) -> np.ndarray:
        axes = [np.arange(s) * h for s, h in zip(self.shape, self.spacing)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def sample(self, fn) -> "GraphFunction":
        """GraphFunction with values fn(x) where x has shape shape + (n,)."""
        return GraphFunction(self, np.asarray(fn(self.coords()), dtype=float))

    def constant(self, level: float) -> "GraphFunction":
        return GraphFunction(self, np.full(self.shape, float(level)))


@dataclass(frozen=True)
class GraphFunction:
    chart: GridChart
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.chart.shape:
            raise ContractViolation(f"values shape {vals.shape} does not match chart {self.chart.shape}")
        if not np.all(np.isfinite(vals)):
            raise ContractViolation("graph values must be finite")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "GraphFunction":
        return GraphFunction(self.chart, values)


# --- periodic differences --------------------------------------------------

def d1(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)


def gradient(f: np.ndarray, chart: GridChart) -> np.ndarray:
    """Stack of first differences on a new trailing axis."""
    return np.stack([d1(f, i, h) for i, h in enumerate(chart.spacing)], axis=-1)


def hessian(f: np.ndarray, chart: GridChart) -> np.ndarray:
    n = chart.dim_n
    out = np.empty(f.shape + (n, n))
    for i, hi in enumerate(chart.spacing):
        out[..., i, i] = (np.roll(f, -1, i) - 2.0 * f + np.roll(f, 1, i)) / (hi * hi)
        fi = d1(f, i, hi)
        for j in range(i + 1, n):
            out[..., i, j] = out[..., j, i] = d1(fi, j, chart.spacing[j])
    return out


def field_derivative(T: np.ndarray, chart: GridChart) -> np.ndarray:
    """dT[..., k, *idx] = d_k T[..., *idx] for a tensor field with trailing indices."""
    n = chart.dim_n
    return np.stack([d1(T, k, chart.spacing[k]) for k in range(n)], axis=n)


# --- small batched linear algebra ---------------------------------------

def sym_inverse(a: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        out = np.empty_like(a)
        out[..., 0, 0] = a[..., 1, 1] / det
        out[..., 1, 1] = a[..., 0, 0] / det
        out[..., 0, 1] = -a[..., 0, 1] / det
        out[..., 1, 0] = -a[..., 1, 0] / det
        return out
    return np.linalg.inv(a)


def _eig2(tr, det):
    half = 0.5 * tr
    disc = np.sqrt(np.maximum(half * half - det, 0.0))
    return np.stack([half - disc, half + disc], axis=-1)


def principal_curvatures(h: np.ndarray, g: np.ndarray, hmixed: np.ndarray | None = None) -> np.ndarray:
    """Eigenvalues of the pencil (h, g), ascending.

    n = 2 uses trace and determinant of the mixed tensor; larger n reduces
    to a symmetric problem with the Cholesky factor of g.
    """
    n = g.shape[-1]
    if n == 2:
        if hmixed is None:
            hmixed = sym_inverse(g) @ h
        tr = hmixed[..., 0, 0] + hmixed[..., 1, 1]
        det = hmixed[..., 0, 0] * hmixed[..., 1, 1] - hmixed[..., 0, 1] * hmixed[..., 1, 0]
        return _eig2(tr, det)
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError("induced metric is not positive definite") from exc
    Linv = np.linalg.inv(L)
    return np.linalg.eigvalsh(Linv @ h @ np.swapaxes(Linv, -1, -2))


def min_eigenvalue(g: np.ndarray) -> np.ndarray:
    if g.shape[-1] == 2:
        tr = g[..., 0, 0] + g[..., 1, 1]
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        return _eig2(tr, det)[..., 0]
    return np.linalg.eigvalsh(g)[..., 0]


# --- geometry ----------------------------------------------------------

@dataclass
class SurfaceGeometry:
    """Per-node first and second order geometry of graph u.

    ``kappa`` and ``nu`` are computed on first access.
    """

    x: np.ndarray          # spatial coordinates, shape S + (n,)
    u: np.ndarray
    psi: np.ndarray
    Du: np.ndarray         # covariant gradient u_i
    grad_sq: np.ndarray    # sigma^{ij} u_i u_j
    v: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    siginv: np.ndarray
    christoffel: np.ndarray  # induced Gamma^k_ij from differences of the discrete g
    h: np.ndarray
    hmixed: np.ndarray
    H: np.ndarray
    A2: np.ndarray

    @cached_property
    def vtilde(self) -> np.ndarray:
        return 1.0 / self.v

    @cached_property
    def kappa(self) -> np.ndarray:
        """Principal curvatures, ascending, shape S + (n,)."""
        return principal_curvatures(self.h, self.g, self.hmixed)

    @cached_property
    def u_up(self) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.siginv, self.Du)

    @cached_property
    def nu(self) -> np.ndarray:
        """Past-directed unit normal -v^{-1} e^{-psi} (1, u^i), shape S + (n+1,)."""
        n = self.Du.shape[-1]
        nu = np.empty(self.u.shape + (n + 1,))
        scale = -np.exp(-self.psi) / self.v
        nu[..., 0] = scale
        nu[..., 1:] = scale[..., None] * self.u_up
        return nu

    def closed_form_inverse(self) -> np.ndarray:
        """g^ij = e^{-2psi} (sigma^ij + u^i u^j / v^2), independent of the direct inverse."""
        e2 = np.exp(2.0 * self.psi)[..., None, None]
        uu = self.u_up[..., :, None] * self.u_up[..., None, :]
        return (self.siginv + uu / (self.v * self.v)[..., None, None]) / e2

    @property
    def ginv_discrepancy(self) -> float:
        return float(np.max(np.abs(self.closed_form_inverse() - self.ginv)))

    @property
    def H2(self) -> np.ndarray:
        return 0.5 * (self.H * self.H - self.A2)

    @property
    def kappa_max(self) -> np.ndarray:
        """Largest principal curvature; closed form from H and H_2 when n = 2."""
        if self.Du.shape[-1] == 2:
            half = 0.5 * self.H
            return half + np.sqrt(np.maximum(half * half - self.H2, 0.0))
        return self.kappa[..., -1]

    @property
    def tangents(self) -> np.ndarray:
        """x_i^alpha = (u_i, delta_i^m), shape S + (n, n+1)."""
        n = self.Du.shape[-1]
        t = np.zeros(self.Du.shape[:-1] + (n, n + 1))
        t[..., :, 0] = self.Du
        t[..., :, 1:] = np.eye(n)
        return t


def _coords(u: GraphFunction) -> np.ndarray:
    return u.chart.coords()


def induced_metric(u: GraphFunction, metric: AmbientMetric):
    """Return (g, ginv, v) per node; see :func:`surface_geometry` for details."""
    geo = surface_geometry(u, metric)
    return geo.g, geo.ginv, geo.v


def past_normal(u: GraphFunction, metric: AmbientMetric) -> np.ndarray:
    return surface_geometry(u, metric).nu


def second_fundamental_form(u: GraphFunction, metric: AmbientMetric):
    """Return (h_ij, h^i_j, kappa) per node."""
    geo = surface_geometry(u, metric)
    return geo.h, geo.hmixed, geo.kappa


def node_index(flat, shape) -> tuple:
    """Grid index of a flat offset, as plain ints."""
    return tuple(int(i) for i in np.unravel_index(int(flat), shape))


def _spacelike_check(grad_sq: np.ndarray, shape) -> None:
    worst = int(np.argmax(grad_sq))
    if not grad_sq[worst] <= 1.0 - SPACELIKE_MARGIN:
        raise SpacelikeViolation(node_index(worst, shape), float(grad_sq[worst]))


def surface_geometry(u: GraphFunction, metric: AmbientMetric, x: np.ndarray | None = None,
                     tables=None) -> SurfaceGeometry:
    """Assemble the full geometry package of graph u.

    ``x`` and ``tables`` (from :func:`_kernels.neighbour_tables`) may be
    passed in by callers that evaluate the same chart repeatedly.
    Raises SpacelikeViolation when |Du|^2 > 1 - SPACELIKE_MARGIN anywhere,
    DegenerateGeometryError if the induced metric fails its Cholesky test.
    """
    chart = u.chart
    n = chart.dim_n
    if metric.dim_n != n:
        raise ContractViolation(f"metric dimension {metric.dim_n} != grid dimension {n}")
    if x is None:
        x = _coords(u)
    if tables is None:
        tables = _kernels.neighbour_tables(chart.shape)
    nbr_p, nbr_m = tables
    S = chart.shape
    N = u.values.size
    uv = u.values
    psi, dpsi = metric.psi(uv, x)
    sig, dsig = metric.sigma(uv, x, check=False)
    flat = lambda a: np.ascontiguousarray(a.reshape((N,) + a.shape[n:]))  # noqa: E731
    sig_f, dsig0 = flat(sig), flat(dsig[..., 0, :, :])
    spacing = np.asarray(chart.spacing)
    u_f, psi_f, dpsi_f = flat(uv), flat(psi), flat(dpsi)

    if n == 2:
        (siginv, Du, grad_sq, v, g, ginv, Gam, h, hmixed, H, A2,
         status) = _kernels.geometry_2d(u_f, np.exp(psi_f), dpsi_f, sig_f, dsig0, spacing,
                                        nbr_p, nbr_m)
        if status > 0:
            raise DegenerateMetricError(
                f"sigma not positive definite at node {node_index(status - 1, S)}")
        _spacelike_check(grad_sq, S)
        if status < 0:
            raise DegenerateGeometryError(
                f"induced metric not positive definite at node {node_index(-status - 1, S)}")
    else:
        siginv, ok = _kernels.spd_inverse(sig_f)
        if not ok.all():
            bad = node_index(int(np.argmin(ok)), S)
            raise DegenerateMetricError(f"sigma not positive definite at node {bad}")
        Du, grad_sq, g = _kernels.first_pass(u_f, psi_f, sig_f, siginv, spacing, nbr_p, nbr_m)
        _spacelike_check(grad_sq, S)
        ginv, ok = _kernels.spd_inverse(g)
        if not ok.all():
            bad = node_index(int(np.argmin(ok)), S)
            raise DegenerateGeometryError(f"induced metric not positive definite at node {bad}")
        v = np.sqrt(1.0 - grad_sq)
        Gam, h, hmixed, H, A2 = _kernels.second_pass(u_f, psi_f, dpsi_f, sig_f, dsig0, v, Du, g,
                                                     ginv, spacing, nbr_p, nbr_m)
    shp = lambda a: a.reshape(S + a.shape[1:])  # noqa: E731
    return SurfaceGeometry(x=x, u=uv, psi=psi, Du=shp(Du), grad_sq=shp(grad_sq), v=shp(v),
                           g=shp(g), ginv=shp(ginv), siginv=shp(siginv), christoffel=shp(Gam),
                           h=shp(h), hmixed=shp(hmixed), H=shp(H), A2=shp(A2))


def reference_geometry(u: GraphFunction, metric: AmbientMetric) -> SurfaceGeometry:
    """Plain numpy assembly of the geometry; slow, kept as the cross-check
    for the compiled path in :func:`surface_geometry`."""
    chart = u.chart
    n = chart.dim_n
    if metric.dim_n != n:
        raise ContractViolation(f"metric dimension {metric.dim_n} != grid dimension {n}")
    x = _coords(u)
    uv = u.values
    psi, _ = metric.psi(uv, x)
    sig, dsig = metric.sigma(uv, x)
    _, dpsi = metric.psi(uv, x)

    Du = gradient(uv, chart)
    siginv = sym_inverse(sig)
    u_up = np.einsum("...ij,...j->...i", siginv, Du)
    grad_sq = np.einsum("...i,...i->...", Du, u_up)
    worst = int(np.argmax(grad_sq))
    if grad_sq.flat[worst] > 1.0 - SPACELIKE_MARGIN:
        raise SpacelikeViolation(node_index(worst, grad_sq.shape), grad_sq.flat[worst])
    v = np.sqrt(1.0 - grad_sq)

    e2 = np.exp(2.0 * psi)[..., None, None]
    g = e2 * (sig - Du[..., :, None] * Du[..., None, :])
    ginv = sym_inverse(g)

    Gam = _christoffel_from(ginv, field_derivative(g, chart))
    cov_hess = hessian(uv, chart) - np.einsum("...kij,...k->...ij", Gam, Du)

    g000, g00i, g0ij = time_symbols(dpsi, sig, dsig)
    rhs = (-cov_hess - g000[..., None, None] * Du[..., :, None] * Du[..., None, :]
           - Du[..., :, None] * g00i[..., None, :] - g00i[..., :, None] * Du[..., None, :] - g0ij)
    h = (np.exp(psi) * v)[..., None, None] * rhs
    hmixed = ginv @ h
    H = np.trace(hmixed, axis1=-2, axis2=-1)
    A2 = np.einsum("...ij,...ji->...", hmixed, hmixed)
    return SurfaceGeometry(x=x, u=uv, psi=psi, Du=Du, grad_sq=grad_sq, v=v, g=g, ginv=ginv,
                           siginv=siginv, christoffel=Gam, h=h, hmixed=hmixed, H=H, A2=A2)


def unit_normal_residual(geo: SurfaceGeometry, metric: AmbientMetric) -> float:
    """max |g_bar(nu, nu) + 1|."""
    gb, _, _ = metric.lorentz(geo.u, geo.x)
    return float(np.max(np.abs(np.einsum("...a,...ab,...b->...", geo.nu, gb, geo.nu) + 1.0)))


def vtilde_residual(geo: SurfaceGeometry) -> float:
    """max |eta_a nu^a - 1/v| with eta = e^psi (-1, 0, ..., 0)."""
    eta_nu = -np.exp(geo.psi) * geo.nu[..., 0]
    return float(np.max(np.abs(eta_nu - geo.vtilde)))


def _require_oracle(metric: AmbientMetric, what: str) -> None:
    if not metric.has_curvature_oracle:
        raise UnsupportedCheckError(f"{what} needs an ambient curvature oracle; "
                                    f"metric {metric.name!r} has none")


def codazzi_residual(u: GraphFunction, metric: AmbientMetric) -> np.ndarray:
    """Pointwise max_{ijk} |h_ij;k - h_ik;j - Rbar(nu, x_i, x_j, x_k)|."""
    _require_oracle(metric, "codazzi_residual")
    geo = surface_geometry(u, metric)
    Gam = geo.christoffel
    dh = field_derivative(geo.h, u.chart)            # dh[..., k, i, j] = d_k h_ij
    # cov[..., k, i, j] = h_ij;k
    cov = (dh - np.einsum("...mki,...mj->...kij", Gam, geo.h)
              - np.einsum("...mkj,...im->...kij", Gam, geo.h))
    diff = cov - np.swapaxes(cov, -3, -1)            # diff[..., k, i, j] = h_ij;k - h_ik;j
    Rb = metric.riemann(geo.u, geo.x)
    xt = geo.tangents
    rhs = np.einsum("...abcd,...a,...ib,...jc,...kd->...kij", Rb, geo.nu, xt, xt, xt)
    return np.max(np.abs(diff - rhs), axis=(-3, -2, -1))


def intrinsic_scalar_curvature(geo: SurfaceGeometry, chart: GridChart) -> np.ndarray:
    """Scalar curvature of the discrete induced metric by repeated differences."""
    Gam = geo.christoffel
    dGam = field_derivative(Gam, chart)              # dGam[..., j, l, i, k] = d_j Gamma^l_ik
    # R^l_ijk = d_j G^l_ki - d_k G^l_ji + G^l_jm G^m_ki - G^l_km G^m_ji
    t1 = np.einsum("...jlki->...lijk", dGam)
    t2 = np.einsum("...klji->...lijk", dGam)
    t3 = np.einsum("...ljm,...mki->...lijk", Gam, Gam)
    t4 = np.einsum("...lkm,...mji->...lijk", Gam, Gam)
    riem = t1 - t2 + t3 - t4
    ric = np.einsum("...lilk->...ik", riem)
    return np.einsum("...ik,...ik->...", geo.ginv, ric)


def ambient_tangential_trace(geo: SurfaceGeometry, metric: AmbientMetric) -> np.ndarray:
    """g^ik g^jl Rbar(x_i, x_j, x_k, x_l)."""
    Rb = metric.riemann(geo.u, geo.x)
    xt = geo.tangents
    Rt = np.einsum("...abcd,...ia,...jb,...kc,...ld->...ijkl", Rb, xt, xt, xt, xt)
    return np.einsum("...ik,...jl,...ijkl->...", geo.ginv, geo.ginv, Rt)


def gauss_scalar_check(u: GraphFunction, metric: AmbientMetric) -> np.ndarray:
    """Pointwise |R + (H^2 - |A|^2) - Rbar_T| (contracted Gauss equation)."""
    _require_oracle(metric, "gauss_scalar_check")
    geo = surface_geometry(u, metric)
    R = intrinsic_scalar_curvature(geo, u.chart)
    return np.abs(R + (geo.H ** 2 - geo.A2) - ambient_tangential_trace(geo, metric))


def tangent_norm_identity(u: GraphFunction, metric: AmbientMetric, node, xi, tol: float = 1e-10) -> float:
    """Reference-metric length of a g-unit tangent vector at one node.

    Returns g_tilde_ij xi^i xi^j after checking it equals
    1 + 2 e^{2 psi} (u_i xi^i)^2.
    """
    geo = surface_geometry(u, metric)
    node = tuple(node)
    xi = np.asarray(xi, dtype=float)
    g = geo.g[node]
    if abs(xi @ g @ xi - 1.0) > tol:
        raise ContractViolation(f"xi is not g-unit at node {node}: g(xi, xi) = {xi @ g @ xi!r}")
    Du = geo.Du[node]
    sig, _ = metric.sigma(geo.u[node], geo.x[node])
    e2 = math.exp(2.0 * float(geo.psi[node]))
    g_tilde = e2 * (np.outer(Du, Du) + sig)
    lhs = float(xi @ g_tilde @ xi)
    rhs = 1.0 + 2.0 * e2 * float(Du @ xi) ** 2
    if abs(lhs - rhs) > tol:
        raise IdentityViolation(f"tangent norm identity off by {lhs - rhs:.3g} at node {node}")
    return lhs


# --- snapshots -----------------------------------------------------------

SNAPSHOT_MAGIC = b"SCFSNAP1"
_HEADER = struct.Struct("<8sII4I4d")  # magic, n, field count, shape[4], spacing[4]: 64 bytes
assert _HEADER.size == 64


def write_snapshot_csv(path, u: GraphFunction, geometry: SurfaceGeometry) -> None:
    """One row per node: index coordinates, u, v, kappa_1..kappa_n."""
    n = u.chart.dim_n
    idx = np.indices(u.chart.shape).reshape(n, -1).T
    cols = [u.values.reshape(-1, 1), geometry.v.reshape(-1, 1), geometry.kappa.reshape(-1, n)]
    header = ",".join([f"i{k}" for k in range(n)] + ["u", "v"] + [f"kappa{k + 1}" for k in range(n)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        data = np.hstack(cols)
        for ij, row in zip(idx, data):
            fh.write(",".join(map(str, ij)) + "," + ",".join("%.17g" % c for c in row) + "\n")


def write_snapshot_bin(path, u: GraphFunction) -> None:
    """64-byte header followed by u as little-endian float64 in C order."""
    n = u.chart.dim_n
    if n > 4:
        raise ContractViolation("binary snapshots support n <= 4")
    shape = list(u.chart.shape) + [0] * (4 - n)
    spacing = list(u.chart.spacing) + [0.0] * (4 - n)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, n, 1, *shape, *spacing))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_snapshot_bin(path) -> GraphFunction:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ContractViolation("snapshot truncated")
    magic, n, nfields, *rest = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ContractViolation(f"bad snapshot magic {magic!r}")
    if not 2 <= n <= 4 or nfields != 1:
        raise ContractViolation("unsupported snapshot layout")
    shape, spacing = tuple(rest[:n]), tuple(rest[4:4 + n])
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != int(np.prod(shape)):
        raise ContractViolation("snapshot payload size does not match header")
    return GraphFunction(GridChart(shape, spacing), body.reshape(shape).astype(float))
