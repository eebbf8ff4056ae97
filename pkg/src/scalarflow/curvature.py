"""Symmetric curvature functions of the principal curvatures.

All functions take ``kappa`` with the principal curvatures on the last
axis, so a single call can evaluate a whole grid of points.  Inputs are
sorted ascending before any arithmetic: the symmetric functions are then
bitwise invariant under permutations of the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConeViolationError, ContractViolation

# below this gap the divided difference (F_i - F_j)/(k_i - k_j) is replaced by its limit
DIVIDED_DIFF_EPS = 1e-9
# relative slack for the inequality battery (rounding only)
BATTERY_RTOL = 1e-12


def _canonical(kappa) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if k.ndim == 0 or k.shape[-1] < 1:
        raise ContractViolation("kappa must have at least one component on its last axis")
    if not np.all(np.isfinite(k)):
        raise ContractViolation("kappa has non-finite entries")
    return np.sort(k, axis=-1, kind="stable")


def elementary_all(kappa) -> np.ndarray:
    """Return H_0, ..., H_n stacked on the last axis.

    Uses the product recurrence for prod_i (1 + kappa_i t), i.e. the
    coefficients of the characteristic polynomial, in O(n^2) flops.
    """
    k = _canonical(kappa)
    n = k.shape[-1]
    e = np.zeros(k.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        ki = k[..., i]
        for j in range(i + 1, 0, -1):
            e[..., j] = e[..., j] + ki * e[..., j - 1]
    return e


def h_k(kappa, k: int) -> np.ndarray | float:
    """Elementary symmetric polynomial H_k of the principal curvatures."""
    n = np.shape(kappa)[-1]
    if not 1 <= k <= n:
        raise ContractViolation(f"k={k} outside 1..{n}")
    out = elementary_all(kappa)[..., k]
    return float(out) if out.ndim == 0 else out


def gamma_k_member(kappa, k: int):
    """True where H_1 > 0, ..., H_k > 0 (strict, no tolerance)."""
    n = np.shape(kappa)[-1]
    if not 1 <= k <= n:
        raise ContractViolation(f"k={k} outside 1..{n}")
    e = elementary_all(kappa)
    out = np.all(e[..., 1:k + 1] > 0.0, axis=-1)
    return bool(out) if out.ndim == 0 else out


def sigma_k(kappa, k: int):
    """k-th root of H_k on the cone Gamma_k; homogeneous of degree one."""
    inside = gamma_k_member(kappa, k)
    if not np.all(inside):
        raise ConeViolationError(f"kappa not in Gamma_{k}")
    out = elementary_all(kappa)[..., k] ** (1.0 / k)
    return float(out) if out.ndim == 0 else out


def grad_h2(kappa) -> np.ndarray:
    """Gradient of H_2: (H - kappa_i)_i.  Returned in the input order."""
    k = np.asarray(kappa, dtype=float)
    H = np.sum(np.sort(k, axis=-1), axis=-1, keepdims=True)
    return H - k


def grad_sigma2(kappa) -> np.ndarray:
    """Gradient of sigma_2 = H_2^(1/2), defined on Gamma_2."""
    s2 = sigma_k(kappa, 2)
    return 0.5 * grad_h2(kappa) / np.asarray(s2)[..., None]


def hess_h2(n: int) -> np.ndarray:
    return np.ones((n, n)) - np.eye(n)


def hess_sigma2(kappa) -> np.ndarray:
    """Matrix of second partials of sigma_2 in eigenvalue coordinates."""
    k = np.asarray(kappa, dtype=float)
    n = k.shape[-1]
    H2 = np.asarray(h_k(k, 2))[..., None, None]
    Fi = grad_h2(k)
    outer = Fi[..., :, None] * Fi[..., None, :]
    return -0.25 * H2 ** -1.5 * outer + 0.5 * H2 ** -0.5 * hess_h2(n)


def hessian_quadratic_form(kappa, eta, which: str = "sigma2") -> float:
    """Second derivative of F along a symmetric direction eta.

    ``kappa`` is a single point (1-D).  ``which`` selects "sigma2" or "H2".
    Off-diagonal divided differences use their limit F_ii - F_ij when the
    two curvatures coincide to within DIVIDED_DIFF_EPS.
    """
    k = np.asarray(kappa, dtype=float)
    eta = np.asarray(eta, dtype=float)
    n = k.shape[0]
    if eta.shape != (n, n) or not np.allclose(eta, eta.T, rtol=0, atol=1e-14):
        raise ContractViolation("eta must be a symmetric n x n matrix")
    if which == "sigma2":
        if not gamma_k_member(k, 2):
            raise ConeViolationError("kappa not in Gamma_2")
        grad, hess = grad_sigma2(k), hess_sigma2(k)
    elif which == "H2":
        grad, hess = grad_h2(k), hess_h2(n)
    else:
        raise ContractViolation(f"unknown curvature function {which!r}")
    d = np.diag(eta)
    total = float(d @ hess @ d)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gap = k[i] - k[j]
            if abs(gap) < DIVIDED_DIFF_EPS:
                ratio = hess[i, i] - hess[i, j]
            else:
                ratio = (grad[i] - grad[j]) / gap
            total += ratio * eta[i, j] ** 2
    return total


def concavity_probe(kappa_a, kappa_b, t: float) -> bool:
    """Check sigma_2(t a + (1-t) b) >= t sigma_2(a) + (1-t) sigma_2(b)."""
    if not 0.0 <= t <= 1.0:
        raise ContractViolation("t must lie in [0, 1]")
    a = np.asarray(kappa_a, dtype=float)
    b = np.asarray(kappa_b, dtype=float)
    mid = sigma_k(t * a + (1.0 - t) * b, 2)
    return bool(mid >= t * sigma_k(a, 2) + (1.0 - t) * sigma_k(b, 2) - 1e-12)


@dataclass
class BatteryItem:
    name: str
    function: str  # "H2" or "sigma2": which curvature function the inequality refers to
    passed: bool
    margin: float


@dataclass
class BatteryReport:
    kappa: np.ndarray
    items: list[BatteryItem] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def __getitem__(self, name: str) -> BatteryItem:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)


def _ok(margin, scale):
    return margin >= -BATTERY_RTOL * (1.0 + np.abs(scale))


def lemma_4_9_margin(kappa):
    """Worst margin of sum F_i k_i^2 >= (1/n) sum F_i k_{i0}^2 with F = sigma_2.

    i0 ranges over the smallest component and every negative component;
    since the right side grows with k_{i0}^2, the binding choice is the
    component of largest modulus among those candidates.
    """
    k = np.asarray(kappa, dtype=float)
    n = k.shape[-1]
    F = grad_sigma2(k)
    lhs = np.sum(F * k ** 2, axis=-1)
    cand = np.where((k < 0) | (k == np.min(k, axis=-1, keepdims=True)), k * k, 0.0)
    out = lhs - np.sum(F, axis=-1) * np.max(cand, axis=-1) / n
    return float(out) if out.ndim == 0 else out


def cone_nesting_margin(kappa, n_segment: int = 33):
    """Probe Gamma_j => Gamma_{j-1} for every j with kappa in Gamma_j.

    For each such j, H_{j-1}(kappa) must be positive and H_j must stay
    positive on the segment joining kappa to the positive diagonal, i.e.
    kappa lies in the component of {H_j > 0} containing the positive cone.
    Returns the smallest probed value, or +inf when kappa is in no Gamma_j
    with j >= 2.
    """
    k = np.asarray(kappa, dtype=float)
    n = k.shape[-1]
    e = elementary_all(k)
    diag = (np.max(np.abs(k), axis=-1, keepdims=True) + 1.0)
    t = np.linspace(0.0, 1.0, n_segment)
    seg = elementary_all(t[:, None] * k[..., None, :] + (1.0 - t[:, None]) * diag[..., None, :])
    worst = np.full(k.shape[:-1], np.inf)
    for j in range(2, n + 1):
        inside = np.all(e[..., 1:j + 1] > 0, axis=-1)
        probe = np.minimum(e[..., j - 1], np.min(seg[..., j], axis=-1))
        worst = np.where(inside, np.minimum(worst, probe), worst)
    return float(worst) if worst.ndim == 0 else worst


BATTERY_ITEMS = (
    ("a_H2_over_n_le_A2", "H2"),
    ("b_A2_le_H2", "H2"),
    ("c_H_gt_kappa", "H2"),
    ("d_H_Fi_ge_F", "H2"),
    ("e_lemma_4_9", "sigma2"),
    ("f_trace_ge_sigma2_ones", "sigma2"),
    ("g_cone_nesting", "H_k"),
)


def battery_margins(kappa) -> dict:
    """Margins and pass flags of every battery item for samples in Gamma_2.

    ``kappa`` has shape (m, n).  Returns ``{name: (margin, passed)}`` with
    arrays of length m; a margin >= 0 means the inequality holds.
    """
    k = np.atleast_2d(np.asarray(kappa, dtype=float))
    n = k.shape[-1]
    if not np.all(gamma_k_member(k, 2)):
        raise ConeViolationError("battery samples must lie in Gamma_2")
    e = elementary_all(k)
    H, F = e[:, 1], e[:, 2]
    A2 = np.sum(np.sort(k, axis=-1) ** 2, axis=-1)
    Fi = grad_h2(k)
    scale = H * H
    out = {}
    m = A2 - H * H / n
    out["a_H2_over_n_le_A2"] = (m, _ok(m, scale))
    m = np.minimum(H * H - A2, 0.5 * H * H - F)
    out["b_A2_le_H2"] = (m, _ok(m, scale))
    m = np.min(H[:, None] - k, axis=-1)
    out["c_H_gt_kappa"] = (m, m > 0.0)
    m = np.min(H[:, None] * Fi - F[:, None], axis=-1)
    out["d_H_Fi_ge_F"] = (m, _ok(m, scale))
    m = lemma_4_9_margin(k)
    out["e_lemma_4_9"] = (m, _ok(m, np.sum(Fi * k ** 2, axis=-1)))
    s_ones = math.sqrt(n * (n - 1) / 2.0)
    m = np.sum(grad_sigma2(k), axis=-1) - s_ones
    out["f_trace_ge_sigma2_ones"] = (m, _ok(m, s_ones))
    m = cone_nesting_margin(k)
    out["g_cone_nesting"] = (m, m > 0.0)
    return out


def inequality_battery(kappa) -> BatteryReport:
    """Evaluate the curvature-function inequalities at one point.

    Items (a)-(d) are the H_2 facts, (e)-(f) concern sigma_2, and (g) is the
    cone nesting Gamma_k => Gamma_{k-1}.  Item (g) is evaluated for any
    kappa; the others require kappa in Gamma_2.
    """
    k = np.asarray(kappa, dtype=float)
    rep = BatteryReport(kappa=k.copy())
    if not gamma_k_member(k, 2):
        m = cone_nesting_margin(k)
        rep.items.append(BatteryItem("g_cone_nesting", "H_k", m > 0.0, m))
        return rep
    res = battery_margins(k[None, :])
    for name, fn in BATTERY_ITEMS:
        m, ok = res[name]
        rep.items.append(BatteryItem(name, fn, bool(ok[0]), float(m[0])))
    return rep


def sample_gamma2(rng: np.random.Generator, n: int, size: int, box: float = 2.0) -> np.ndarray:
    """Uniform samples from [-box, box]^n intersected with Gamma_2 (rejection)."""
    out = np.empty((0, n))
    while out.shape[0] < size:
        cand = rng.uniform(-box, box, size=(max(2 * size, 64), n))
        out = np.vstack([out, cand[gamma_k_member(cand, 2)]])
    return out[:size]
