"""Prescribed right-hand side f(x, nu), its growth audit, and the normal cutoff.

Spacetime points are passed as ``(x0, x)`` with ``x0`` of shape S and ``x``
of shape S + (n,); normals are contravariant vectors of shape S + (n+1,).
Partials are returned in coordinate components: ``d_x[..., b]`` is
df/dx^b (b = 0 is time) and ``d_nu[..., b]`` is df/dnu^b.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ambient import AmbientMetric, reference_metric
from .errors import ConfigError, ContractViolation, PositivityViolation

FAMILIES = ("constant", "time-profile", "normal-tilt")


@dataclass(frozen=True)
class PrescribedCurvature:
    """Right-hand side f(x, nu) of F = f.

    ``value_fn(x0, x, nu)`` returns f; ``dx_fn`` and ``dnu_fn`` (same
    signature) return the closed-form partials, or are None when the audit
    should fall back to finite differences.
    """

    kind: str
    params: dict
    value_fn: Callable
    dx_fn: Callable | None = None
    dnu_fn: Callable | None = None
    depends_on_normal: bool = True

    def value(self, x0, x, nu=None) -> np.ndarray:
        x0 = np.asarray(x0, float)
        if nu is None:
            if self.depends_on_normal:
                raise ContractViolation(f"f of kind {self.kind!r} needs the normal")
            nu = np.zeros(x0.shape + (np.shape(x)[-1] + 1,))
        return self.value_fn(x0, np.asarray(x, float), np.asarray(nu, float))

    def __call__(self, x0, x, nu=None) -> np.ndarray:
        return self.value(x0, x, nu)


def make_f(kind: str, **params) -> PrescribedCurvature:
    """Build a named family.

    constant (value)
        f = value.
    time-profile (amplitude, rate, center)
        f = amplitude * exp(-rate (x0 - center)).
    normal-tilt (base, eps)
        f = base + eps * (nu^0)^2, a normal-dependent family whose nu-partial
        grows linearly in |nu|.
    """
    def need(*names):
        unknown = set(params) - set(names)
        if unknown:
            raise ConfigError(f"{kind}: unknown parameters {sorted(unknown)}")
        missing = [k for k in names if k not in params]
        if missing:
            raise ConfigError(f"{kind}: missing parameters {missing}")
        return [float(params[k]) for k in names]

    def zeros_like_nu(x0, x, nu):
        return np.zeros(np.shape(nu))

    if kind == "constant":
        (c,) = need("value")
        return PrescribedCurvature(kind, {"value": c}, lambda x0, x, nu: np.full(np.shape(x0), c),
                                   zeros_like_nu, zeros_like_nu, depends_on_normal=False)

    if kind == "time-profile":
        A, r, c = need("amplitude", "rate", "center")

        def val(x0, x, nu):
            return A * np.exp(-r * (x0 - c))

        def dx(x0, x, nu):
            out = np.zeros(np.shape(x0) + (np.shape(x)[-1] + 1,))
            out[..., 0] = -r * val(x0, x, nu)
            return out

        return PrescribedCurvature(kind, {"amplitude": A, "rate": r, "center": c}, val, dx,
                                   zeros_like_nu, depends_on_normal=False)

    if kind == "normal-tilt":
        b, eps = need("base", "eps")

        def val(x0, x, nu):
            return b + eps * nu[..., 0] ** 2

        def dnu(x0, x, nu):
            out = np.zeros(np.shape(nu))
            out[..., 0] = 2.0 * eps * nu[..., 0]
            return out

        def dx(x0, x, nu):
            return np.zeros(np.shape(nu))

        return PrescribedCurvature(kind, {"base": b, "eps": eps}, val, dx, dnu)

    raise ConfigError(f"unknown f family {kind!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class CutoffConfig:
    k: float

    def __post_init__(self):
        if not float(self.k) > 1.0:
            raise ConfigError(f"cutoff scale k must exceed 1, got {self.k}")
        object.__setattr__(self, "k", float(self.k))

    def covers(self, vtilde_max: float) -> bool:
        """True when theta is the identity up to ``vtilde_max``."""
        return vtilde_max <= self.k


def _smoothstep(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def _smoothstep_prime(s):
    return 30.0 * s * s * (1.0 - s) ** 2


def cutoff_theta(t, cfg: CutoffConfig):
    """theta(t): t below k, 2k above 2k, quintic blend in between."""
    t = np.asarray(t, float)
    if np.any(t < 0.0):
        raise ContractViolation("cutoff_theta needs t >= 0")
    k = cfg.k
    s = np.clip((t - k) / k, 0.0, 1.0)
    S = _smoothstep(s)
    out = np.where(t <= k, t, np.where(t >= 2.0 * k, 2.0 * k, (1.0 - S) * t + S * 2.0 * k))
    return float(out) if out.ndim == 0 else out


def cutoff_theta_prime(t, cfg: CutoffConfig):
    t = np.asarray(t, float)
    k = cfg.k
    s = np.clip((t - k) / k, 0.0, 1.0)
    out = np.where(t <= k, 1.0, np.where(t >= 2.0 * k, 0.0,
                                         1.0 - _smoothstep(s) + (1.0 - s) * _smoothstep_prime(s)))
    return float(out) if out.ndim == 0 else out


def modified_normal(nu, tilde_v, cfg: CutoffConfig) -> np.ndarray:
    """theta(v~)/v~ * nu; the identity wherever v~ <= k."""
    tv = np.asarray(tilde_v, float)
    if np.any(tv < 1.0 - 1e-12):
        raise ContractViolation("tilde_v must be >= 1")
    nu = np.asarray(nu, float)
    scale = np.where(tv <= cfg.k, 1.0, cutoff_theta(np.maximum(tv, 1.0), cfg) / tv)
    return np.asarray(scale)[..., None] * nu


def tilde_v_of(metric: AmbientMetric, x0, x, nu) -> np.ndarray:
    """eta_a nu^a with eta = e^psi (-1, 0, ..., 0)."""
    psi, _ = metric.psi(np.asarray(x0, float), np.asarray(x, float))
    return -np.exp(psi) * np.asarray(nu, float)[..., 0]


def effective_rhs(f: PrescribedCurvature, cfg: CutoffConfig | None, metric: AmbientMetric,
                  sqrt_mode: bool = False) -> PrescribedCurvature:
    """f(x, nu~) with the cutoff normal, optionally square-rooted.

    With ``sqrt_mode`` the target for sigma_2 is f^(1/2); otherwise f is the
    target as given.  A normal-independent f, or ``cfg=None``, skips the
    cutoff and only applies the optional root.
    """
    if cfg is None or not f.depends_on_normal:
        if not sqrt_mode:
            return f
        return PrescribedCurvature(f"sqrt({f.kind})", dict(f.params),
                                   lambda x0, x, nu: np.sqrt(f.value_fn(x0, x, nu)),
                                   depends_on_normal=f.depends_on_normal)

    def val(x0, x, nu):
        tv = tilde_v_of(metric, x0, x, nu)
        out = f.value_fn(x0, x, modified_normal(nu, np.maximum(tv, 1.0), cfg))
        return np.sqrt(out) if sqrt_mode else out

    tag = f"cutoff[k={cfg.k:g}]({f.kind})"
    return PrescribedCurvature(("sqrt:" if sqrt_mode else "") + tag, dict(f.params), val)


# ---------------------------------------------------------------- growth audit

@dataclass(frozen=True)
class AuditSpec:
    """Sample region for :func:`growth_audit`.

    Time levels span ``x0_range``; spatial points form a uniform torus grid
    with ``points`` per axis; normals are unit past-directed vectors with
    tilde_v on each entry of ``vtilde_levels`` and ``directions`` random
    spatial directions.
    """

    x0_range: tuple = (0.0, 2.0)
    n_time: int = 5
    points: int = 4
    length: float = 2.0 * math.pi
    vtilde_levels: tuple = (1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    directions: int = 6
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.x0_range
        if not hi >= lo:
            raise ContractViolation("x0_range must be ordered")
        if min(self.vtilde_levels) < 1.0:
            raise ContractViolation("tilde_v levels must be >= 1")
        if self.n_time < 1 or self.points < 1 or self.directions < 1:
            raise ContractViolation("sample counts must be positive")


@dataclass
class AuditRow:
    constant: str
    estimate: float
    samples: int
    witness: tuple  # (x0, x^1..x^n, tilde_v) of the worst sample


@dataclass
class AuditReport:
    kind: str
    rows: list = field(default_factory=list)
    strong_bound_raw: bool = False
    strong_bound_cutoff: bool | None = None

    def __getitem__(self, name: str) -> float:
        for r in self.rows:
            if r.constant == name:
                return r.estimate
        raise KeyError(name)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["constant", "estimate", "samples", "witness"])
            for r in self.rows:
                w.writerow([r.constant, repr(r.estimate), r.samples,
                            " ".join(repr(float(c)) for c in r.witness)])
            w.writerow(["strong_bound_raw", int(self.strong_bound_raw), "", ""])
            if self.strong_bound_cutoff is not None:
                w.writerow(["strong_bound_cutoff", int(self.strong_bound_cutoff), "", ""])


def audit_samples(metric: AmbientMetric, spec: AuditSpec):
    """Return (x0, x, nu) sample arrays, flattened to one leading axis."""
    n = metric.dim_n
    rng = np.random.default_rng(spec.seed)
    t = np.linspace(spec.x0_range[0], spec.x0_range[1], spec.n_time)
    axis = np.arange(spec.points) * (spec.length / spec.points)
    xs = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    lv = np.asarray(spec.vtilde_levels, float)
    dirs = rng.normal(size=(spec.directions, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    T, P, V, D = np.meshgrid(np.arange(t.size), np.arange(xs.shape[0]), np.arange(lv.size),
                             np.arange(spec.directions), indexing="ij")
    x0 = t[T.ravel()]
    x = xs[P.ravel()]
    vt = lv[V.ravel()]
    w = dirs[D.ravel()]
    psi, _ = metric.psi(x0, x)
    sig, _ = metric.sigma(x0, x)
    # scale the direction to sigma-length sqrt(1 - 1/vt^2)
    wn = np.sqrt(np.einsum("...i,...ij,...j->...", w, sig, w))
    w = w * (np.sqrt(1.0 - 1.0 / vt ** 2) / wn)[:, None]
    nu = np.empty((x0.size, n + 1))
    nu[:, 0] = -np.exp(-psi) * vt
    nu[:, 1:] = (-np.exp(-psi) * vt)[:, None] * w
    return x0, x, nu, vt


def _fd_partials(f: PrescribedCurvature, x0, x, nu, rel: float = 1e-6):
    """Central differences in each spacetime and normal component."""
    m = nu.shape[-1]
    dx = np.empty(nu.shape)
    dnu = np.empty(nu.shape)
    for b in range(m):
        hx = rel * (1.0 + (np.abs(x0) if b == 0 else np.abs(x[:, b - 1])))
        if b == 0:
            fp, fm = f.value_fn(x0 + hx, x, nu), f.value_fn(x0 - hx, x, nu)
        else:
            xp, xm = x.copy(), x.copy()
            xp[:, b - 1] += hx
            xm[:, b - 1] -= hx
            fp, fm = f.value_fn(x0, xp, nu), f.value_fn(x0, xm, nu)
        dx[:, b] = (fp - fm) / (2.0 * hx)
        hn = rel * (1.0 + np.abs(nu[:, b]))
        npl, nmi = nu.copy(), nu.copy()
        npl[:, b] += hn
        nmi[:, b] -= hn
        dnu[:, b] = (f.value_fn(x0, x, npl) - f.value_fn(x0, x, nmi)) / (2.0 * hn)
    return dx, dnu


def _saturates(ratio, vt, levels, rtol: float = 1e-3) -> bool:
    """True when the sup of ``ratio`` over the outermost tilde_v shell does not
    exceed the sup over the inner shells, i.e. the bound is not still growing."""
    levels = np.sort(np.unique(levels))
    if levels.size < 2:
        return True
    outer = ratio[vt == levels[-1]].max()
    inner = ratio[vt < levels[-1]].max()
    return bool(outer <= inner * (1.0 + rtol) + 1e-12)


def _constants(f, metric, x0, x, nu, vt):
    if f.dx_fn is not None and f.dnu_fn is not None:
        dx, dnu = f.dx_fn(x0, x, nu), f.dnu_fn(x0, x, nu)
    else:
        dx, dnu = _fd_partials(f, x0, x, nu)
    gt = reference_metric(metric, x0, x)
    gti = np.linalg.inv(gt)
    nu_norm = np.sqrt(np.einsum("...a,...ab,...b->...", nu, gt, nu))
    fb = np.sqrt(np.einsum("...a,...ab,...b->...", dx, gti, dx))
    fn = np.sqrt(np.einsum("...a,...ab,...b->...", dnu, gti, dnu))
    return {
        "c2": fb / (1.0 + nu_norm ** 2),
        "c3": fn / (1.0 + nu_norm),
        "c2_strong": fb / (1.0 + nu_norm),
        "c3_strong": fn,
    }


def growth_audit(f: PrescribedCurvature, metric: AmbientMetric, spec: AuditSpec | None = None,
                 cutoff: CutoffConfig | None = None) -> AuditReport:
    """Sampled estimates of the growth constants of f.

    c1 = min f; c2, c3 are the smallest constants with
    |f_x| <= c2 (1 + |nu|^2) and |f_nu| <= c3 (1 + |nu|) over the samples,
    norms taken in the reference metric.  The ``*_strong`` rows are the
    stronger bounds |f_x| <= c (1 + |nu|) and |f_nu| <= c.  Whether these
    stronger bounds hold is judged by saturation: the sup over the largest
    tilde_v shell must not exceed the sup over the inner shells.  With a
    ``cutoff`` the same is reported for the wrapped right-hand side.
    Raises PositivityViolation when f <= 0 at a sample.
    """
    spec = spec or AuditSpec()
    x0, x, nu, vt = audit_samples(metric, spec)
    fv = np.broadcast_to(f.value_fn(x0, x, nu), x0.shape)
    N = x0.size

    def witness(i):
        return (float(x0[i]),) + tuple(float(c) for c in x[i]) + (float(vt[i]),)

    i_min = int(np.argmin(fv))
    if not fv[i_min] > 0.0:
        raise PositivityViolation(f"f = {fv[i_min]:.6g} <= 0 at sample {witness(i_min)}",
                                  witness(i_min))
    rep = AuditReport(kind=f.kind)
    rep.rows.append(AuditRow("c1", float(fv[i_min]), N, witness(i_min)))
    cons = _constants(f, metric, x0, x, nu, vt)
    for name, r in cons.items():
        i = int(np.argmax(r))
        rep.rows.append(AuditRow(name, float(r[i]), N, witness(i)))
    levels = np.asarray(spec.vtilde_levels)
    rep.strong_bound_raw = (_saturates(cons["c2_strong"], vt, levels)
                            and _saturates(cons["c3_strong"], vt, levels))
    if cutoff is not None:
        fe = effective_rhs(f, cutoff, metric)
        cc = _constants(fe, metric, x0, x, nu, vt)
        for name in ("c2_strong", "c3_strong"):
            i = int(np.argmax(cc[name]))
            rep.rows.append(AuditRow(name + "_cutoff", float(cc[name][i]), N, witness(i)))
        rep.strong_bound_cutoff = (_saturates(cc["c2_strong"], vt, levels)
                                   and _saturates(cc["c3_strong"], vt, levels))
    return rep
