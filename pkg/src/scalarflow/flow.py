"""Explicit time stepping of du/dt = -e^{-psi} v (sigma_2 - f).

The flow starts from the upper barrier and decreases u towards a surface
with sigma_2 = f.  Every accepted step is checked against the barrier,
sign, monotonicity and ceiling monitors; failures raise
:class:`InvariantViolation` with the trace so far.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ambient import AmbientMetric
from .errors import (ConfigError, DegenerateGeometryError, FlowBreakdown, InvalidUpperBarrier,
                     InvariantViolation, SpacelikeViolation)
from .prescribe import CutoffConfig, PrescribedCurvature, effective_rhs
from .surface import (GraphFunction, SurfaceGeometry, _spacelike_check, node_index,
                      surface_geometry, sym_inverse)

SCHEMES = ("euler", "heun")
H2_MARGIN = 1e-8
TRACE_COLUMNS = ("t", "sup_res", "min_res", "max_vtilde", "max_kappa", "min_H2", "u_min", "u_max",
                 "dt")


@dataclass
class FlowConfig:
    """Stepping and monitoring parameters.

    ``vtilde_ceiling`` / ``kappa_ceiling`` of None mean ``ceiling_factor``
    times the initial maximum.  ``scheme`` "heun" is the two-stage
    strong-stability-preserving Runge-Kutta method; each stage is an Euler
    step, so the monitored invariants apply unchanged.
    """

    upper: GraphFunction
    lower: GraphFunction | None = None
    t_max: float = 50.0
    dt_safety: float = 0.2
    tol_converge: float = 1e-8
    tol_sign: float = 1e-10
    monitor_every: int = 1
    scheme: str = "euler"
    cutoff: CutoffConfig | None = None
    sqrt_mode: bool = False
    vtilde_ceiling: float | None = None
    kappa_ceiling: float | None = None
    ceiling_factor: float = 2.0
    max_halvings: int = 20
    max_steps: int | None = None

    def __post_init__(self):
        if not 0.0 < self.dt_safety <= 1.0:
            raise ConfigError("dt_safety must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.monitor_every < 1:
            raise ConfigError("monitor_every must be >= 1")
        if not (self.tol_converge > 0 and self.tol_sign >= 0 and self.t_max >= 0):
            raise ConfigError("tolerances must be positive and t_max nonnegative")
        if self.lower is not None:
            if self.lower.chart != self.upper.chart:
                raise ConfigError("barriers live on different grids")
            gap = self.upper.values - self.lower.values
            if np.min(gap) < 0.0:
                node = node_index(int(np.argmin(gap)), gap.shape)
                raise ConfigError(f"lower barrier above upper barrier at node {node}")

    @property
    def barrier_tol(self) -> float:
        return 10.0 * self.tol_sign


class Evaluation:
    """Flow quantities at one height field; the full SurfaceGeometry is built on demand."""

    def __init__(self, u, psi, v, H, H2, F, f, speed, diffusion, geometry_fn, geometry=None):
        self.u, self.psi, self.v = u, psi, v
        self.H, self.H2, self.F, self.f = H, H2, F, f
        self.speed = speed          # du/dt
        self.diffusion = diffusion  # CFL diffusion scale per node
        self._geometry_fn = geometry_fn
        self._geometry = geometry

    @property
    def geometry(self) -> SurfaceGeometry:
        if self._geometry is None:
            self._geometry = self._geometry_fn(self.u)
        return self._geometry

    @property
    def residual(self) -> np.ndarray:
        return self.F - self.f

    @property
    def vtilde(self) -> np.ndarray:
        return 1.0 / self.v

    @property
    def kappa_max(self) -> np.ndarray:
        if self.u.ndim == 2:
            half = 0.5 * self.H
            return half + np.sqrt(np.maximum(half * half - self.H2, 0.0))
        return self.geometry.kappa[..., -1]


class _Inadmissible(Exception):
    def __init__(self, what, node=None):
        self.what = what
        self.node = node


class _Evaluator:
    """Holds the per-chart tables so repeated evaluations skip setup.

    For n = 2 the flow terms come from a compiled pass that does not store
    the geometry tensors; other dimensions go through surface_geometry.
    """

    def __init__(self, chart, metric: AmbientMetric, f_eff: PrescribedCurvature):
        self.chart = chart
        self.metric = metric
        self.f = f_eff
        self.x = chart.coords()
        self.tables = _kernels.neighbour_tables(chart.shape)
        self.n = chart.dim_n
        self.spacing = np.asarray(chart.spacing)

    def geometry(self, u: np.ndarray) -> SurfaceGeometry:
        return surface_geometry(GraphFunction(self.chart, u), self.metric, self.x, self.tables)

    def _terms_2d(self, u):
        S = self.chart.shape
        N = u.size
        psi, dpsi = self.metric.psi(u, self.x)
        sig, dsig = self.metric.sigma(u, self.x, check=False)
        ep = np.exp(psi)
        Du, grad_sq, H, H2, lam, status = _kernels.flow_terms_2d(
            u.reshape(N), ep.reshape(N), dpsi.reshape(N, 3), sig.reshape(N, 2, 2),
            dsig.reshape(N, 3, 2, 2), self.spacing, *self.tables)
        if status != 0:
            # let the full path raise the precise error
            self.geometry(u)
        _spacelike_check(grad_sq, S)
        v = np.sqrt(1.0 - grad_sq).reshape(S)
        nu = None
        if self.f.depends_on_normal:
            u_up = np.einsum("...ij,...j->...i", sym_inverse(sig), Du.reshape(S + (2,)))
            scale = -1.0 / (ep * v)
            nu = np.concatenate([scale[..., None], scale[..., None] * u_up], axis=-1)
        return psi, v, H.reshape(S), H2.reshape(S), lam.reshape(S), nu, None

    def _terms_full(self, u):
        geo = self.geometry(u)
        return geo.psi, geo.v, geo.H, geo.H2, _min_eig(geo.g), \
            (geo.nu if self.f.depends_on_normal else None), geo

    def __call__(self, u: np.ndarray, strict: bool = False) -> Evaluation:
        """Evaluate at heights ``u``.  ``strict`` tests membership in Gamma_2
        itself; otherwise H_2 must clear the rejection margin."""
        psi, v, H, H2, lam, nu, geo = (self._terms_2d(u) if self.n == 2 else self._terms_full(u))
        S = u.shape
        fval = np.broadcast_to(self.f.value(u, self.x, nu), S)
        F, speed, diffusion, bad = _kernels.flow_rates(
            np.exp(psi).ravel(), v.ravel(), H.ravel(), H2.ravel(), lam.ravel(),
            np.ascontiguousarray(fval).ravel(), self.n, H2_MARGIN, strict)
        if bad >= 0:
            node = node_index(bad, S)
            raise _Inadmissible(f"kappa leaves Gamma_2 (H = {H[node]:.3g}, H_2 = {H2[node]:.3g})",
                                node)
        return Evaluation(u, psi, v, H, H2, F.reshape(S), fval, speed.reshape(S),
                          diffusion.reshape(S), self.geometry, geo)


def _min_eig(g):
    if g.shape[-1] == 2:
        a, b, c = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
        half = 0.5 * (a + c)
        return half - np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return np.linalg.eigvalsh(g)[..., 0]


@dataclass
class FlowState:
    t: float
    u: GraphFunction
    evaluation: Evaluation
    dt_current: float = 0.0
    steps: int = 0
    halvings: int = 0
    _evaluator: _Evaluator | None = field(default=None, repr=False)

    @property
    def geometry(self) -> SurfaceGeometry:
        return self.evaluation.geometry


@dataclass
class FlowTrace:
    rows: list = field(default_factory=list)

    def append(self, state: FlowState) -> None:
        ev = state.evaluation
        res = ev.residual
        row = (state.t, float(np.max(np.abs(res))), float(np.min(res)), float(np.max(ev.vtilde)),
               float(np.max(ev.kappa_max)), float(np.min(ev.H2)), float(np.min(state.u.values)),
               float(np.max(state.u.values)), state.dt_current)
        if self.rows and row[0] < self.rows[-1][0]:
            raise ValueError("trace times must be nondecreasing")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(c)) for c in r])


@dataclass
class RunReport:
    verdict: str
    steps: int
    t_final: float
    wall_time: float
    halvings: int
    sup_res: float
    sup_speed: float
    max_vtilde_run: float
    max_kappa_run: float
    vtilde_ceiling: float
    kappa_ceiling: float
    cutoff_k: float | None
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def cutoff_inactive(self) -> bool | None:
        """True when max tilde_v stayed <= k, so theta never acted."""
        if self.cutoff_k is None:
            return None
        return self.max_vtilde_run <= self.cutoff_k

    def as_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "steps": self.steps,
            "t_final": repr(self.t_final),
            "wall_time": f"{self.wall_time:.3f}",
            "halvings": self.halvings,
            "sup_res": repr(self.sup_res),
            "sup_speed": repr(self.sup_speed),
            "max_vtilde": repr(self.max_vtilde_run),
            "max_kappa": repr(self.max_kappa_run),
            "vtilde_ceiling": repr(self.vtilde_ceiling),
            "kappa_ceiling": repr(self.kappa_ceiling),
            "cutoff_k": "none" if self.cutoff_k is None else repr(self.cutoff_k),
            "cutoff_inactive": {None: "n/a", True: "true", False: "false"}[self.cutoff_inactive],
        }
        if self.message:
            d["message"] = self.message
        d.update(self.extra)
        return d

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.as_dict().items())


def _target(config: FlowConfig, metric: AmbientMetric, f: PrescribedCurvature) -> PrescribedCurvature:
    return effective_rhs(f, config.cutoff, metric, config.sqrt_mode)


def initialize(config: FlowConfig, metric: AmbientMetric, f_eff: PrescribedCurvature) -> FlowState:
    """State at t = 0 on the upper barrier, after validating both barriers."""
    chart = config.upper.chart
    if metric.dim_n != chart.dim_n:
        raise ConfigError(f"metric dimension {metric.dim_n} != grid dimension {chart.dim_n}")
    ev = _Evaluator(chart, metric, f_eff)
    u2 = config.upper.values.copy()
    try:
        e2 = ev(u2, strict=True)
    except SpacelikeViolation as exc:
        raise InvalidUpperBarrier(f"upper barrier is not spacelike: {exc}", exc.node) from exc
    except DegenerateGeometryError as exc:
        raise InvalidUpperBarrier(f"upper barrier geometry degenerate: {exc}") from exc
    except _Inadmissible as exc:
        raise InvalidUpperBarrier(f"upper barrier not admissible: {exc.what}", exc.node) from exc
    res = e2.residual
    worst = int(np.argmin(res))
    if res.flat[worst] < -config.tol_sign:
        node = node_index(worst, res.shape)
        raise InvalidUpperBarrier(
            f"F < f on the upper barrier at node {node}: F - f = {res.flat[worst]:.6g}", node)

    if config.lower is not None:
        _check_lower(config, ev)
    return FlowState(0.0, GraphFunction(chart, u2), e2, 0.0, _evaluator=ev)


def _check_lower(config: FlowConfig, ev: _Evaluator) -> None:
    """F <= f at the nodes where the lower barrier is admissible."""
    try:
        geo = surface_geometry(config.lower, ev.metric, ev.x, ev.tables)
    except (SpacelikeViolation, DegenerateGeometryError) as exc:
        raise ConfigError(f"lower barrier is not a spacelike graph: {exc}") from exc
    ok = (geo.H > 0.0) & (geo.H2 > 0.0)
    if not ok.any():
        return
    F = np.sqrt(np.where(ok, geo.H2, 1.0))
    fval = ev.f.value(config.lower.values, ev.x, geo.nu if ev.f.depends_on_normal else None)
    excess = np.where(ok, F - fval, -np.inf)
    worst = int(np.argmax(excess))
    if excess.flat[worst] > config.tol_sign:
        node = node_index(worst, excess.shape)
        raise ConfigError(f"lower barrier has F > f at admissible node {node}")


def _cfl_dt(config: FlowConfig, ev: Evaluation, h_min: float) -> float:
    dmax = float(np.max(ev.diffusion))
    return config.dt_safety * h_min * h_min / dmax


def step(state: FlowState, config: FlowConfig) -> FlowState:
    """One accepted step; rejected attempts halve dt up to ``max_halvings`` times."""
    ev_fn = state._evaluator
    u = state.u.values
    ev = state.evaluation
    dt = _cfl_dt(config, ev, state.u.chart.h_min)
    for halving in range(config.max_halvings + 1):
        try:
            u1 = u + dt * ev.speed
            if config.scheme == "heun":
                e1 = ev_fn(u1)
                u1 = 0.5 * (u + u1 + dt * e1.speed)
            e_new = ev_fn(u1)
        except (SpacelikeViolation, DegenerateGeometryError, _Inadmissible):
            dt *= 0.5
            continue
        return FlowState(state.t + dt, GraphFunction(state.u.chart, u1), e_new, dt,
                         state.steps + 1, state.halvings + halving, ev_fn)
    raise FlowBreakdown(f"step rejected after {config.max_halvings} halvings at t = {state.t:.6g}",
                        state)


def _max_vtilde(ev: Evaluation) -> float:
    return float(1.0 / np.min(ev.v))


def _max_kappa(ev: Evaluation) -> float:
    return float(np.max(ev.kappa_max))


def run(config: FlowConfig, metric: AmbientMetric, f: PrescribedCurvature):
    """Flow from the upper barrier until convergence, timeout or breakdown.

    Returns ``(state, trace, report)``.  Monitor failures raise
    InvariantViolation carrying the state and trace.
    """
    wall0 = time.perf_counter()
    f_eff = _target(config, metric, f)
    state = initialize(config, metric, f_eff)
    trace = FlowTrace()
    trace.append(state)

    vt0, k0 = _max_vtilde(state.evaluation), _max_kappa(state.evaluation)
    vt_ceiling = config.vtilde_ceiling or config.ceiling_factor * vt0
    k_ceiling = config.kappa_ceiling or config.ceiling_factor * max(k0, 0.0)
    upper = config.upper.values
    lower = None if config.lower is None else config.lower.values
    btol = config.barrier_tol
    vt_run, k_run = vt0, k0

    def fail(monitor, msg):
        trace.append(state)
        raise InvariantViolation(f"{monitor}: {msg} at t = {state.t:.6g}", monitor, state, trace)

    verdict, message = None, ""
    while True:
        ev = state.evaluation
        sup_res = float(np.max(np.abs(ev.residual)))
        sup_speed = float(np.max(np.abs(ev.speed)))
        if sup_res < config.tol_converge and sup_speed < config.tol_converge:
            verdict = "converged"
            break
        if state.t >= config.t_max or (config.max_steps is not None
                                       and state.steps >= config.max_steps):
            verdict = "timeout"
            break
        prev = state
        try:
            state = step(state, config)
        except FlowBreakdown as exc:
            verdict, message = "breakdown", str(exc)
            break
        u_new, u_old = state.u.values, prev.u.values
        ev = state.evaluation
        if np.max(u_new - upper) > btol:
            fail("barrier", f"u above upper barrier by {np.max(u_new - upper):.3g}")
        if lower is not None and np.min(u_new - lower) < -btol:
            fail("barrier", f"u below lower barrier by {-np.min(u_new - lower):.3g}")
        min_res = float(np.min(ev.residual))
        if min_res < -config.tol_sign:
            fail("sign", f"min(F - f) = {min_res:.3g}")
        if np.max(u_new - u_old) > config.tol_sign:
            fail("monotonicity", f"u increased by {np.max(u_new - u_old):.3g}")
        vt, kn = _max_vtilde(ev), _max_kappa(ev)
        vt_run, k_run = max(vt_run, vt), max(k_run, kn)
        if vt > vt_ceiling:
            fail("vtilde_ceiling", f"max tilde_v = {vt:.6g} > {vt_ceiling:.6g}")
        if kn > k_ceiling:
            fail("kappa_ceiling", f"max kappa_n = {kn:.6g} > {k_ceiling:.6g}")
        if state.steps % config.monitor_every == 0:
            trace.append(state)

    if trace.rows[-1][0] != state.t:
        trace.append(state)
    ev = state.evaluation
    report = RunReport(
        verdict=verdict, steps=state.steps, t_final=state.t,
        wall_time=time.perf_counter() - wall0, halvings=state.halvings,
        sup_res=float(np.max(np.abs(ev.residual))), sup_speed=float(np.max(np.abs(ev.speed))),
        max_vtilde_run=vt_run, max_kappa_run=k_run, vtilde_ceiling=vt_ceiling,
        kappa_ceiling=k_ceiling, cutoff_k=None if config.cutoff is None else config.cutoff.k,
        message=message)
    return state, trace, report


def stationary_residual(state: FlowState) -> float:
    """sup |sigma_2 - f_eff| re-evaluated from scratch on the state's surface."""
    ev = state._evaluator(state.u.values.copy(), strict=True)
    return float(np.max(np.abs(ev.residual)))
