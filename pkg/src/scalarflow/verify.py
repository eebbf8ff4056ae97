"""Property suites behind ``scalarflow verify``.

Each suite returns a list of :class:`SuiteItem` rows: how many samples an
item saw, how many failed, and the worst margin (>= 0 means satisfied).
Everything is driven by a single seed, so reruns are identical.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import curvature as cv
from .ambient import make_metric
from .prescribe import CutoffConfig, cutoff_theta, cutoff_theta_prime, modified_normal
from .surface import (GridChart, codazzi_residual, gauss_scalar_check, reference_geometry,
                      surface_geometry, unit_normal_residual, vtilde_residual)

SUITES = ("curvature", "geometry", "cutoff")
ORDER_BAND = (3.5, 4.5)


@dataclass
class SuiteItem:
    suite: str
    item: str
    samples: int
    failures: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _item(suite, name, margins, passed=None) -> SuiteItem:
    margins = np.atleast_1d(np.asarray(margins, float))
    ok = margins >= 0.0 if passed is None else np.atleast_1d(passed)
    return SuiteItem(suite, name, int(margins.size), int(np.count_nonzero(~ok)),
                     float(np.min(margins)))


def curvature_suite(rng: np.random.Generator, samples: int = 10_000,
                    dims=(2, 3, 5)) -> list[SuiteItem]:
    out = []
    for n in dims:
        K = cv.sample_gamma2(rng, n, samples)
        for name, (m, ok) in cv.battery_margins(K).items():
            out.append(_item("curvature", f"{name}[n={n}]", m, ok))

        # gradient of sigma_2 against central differences; the step follows the
        # distance H_2 / |grad H_2| to the cone boundary
        sub = K[: min(samples, 2000)]
        g = cv.grad_sigma2(sub)
        fd = np.empty_like(sub)
        dist = cv.h_k(sub, 2) / np.linalg.norm(cv.grad_h2(sub), axis=-1)
        for i in range(n):
            h = 1e-3 * np.minimum(dist, 1.0)
            e = np.zeros(n)
            e[i] = 1.0
            fd[:, i] = (cv.sigma_k(sub + h[:, None] * e, 2)
                        - cv.sigma_k(sub - h[:, None] * e, 2)) / (2.0 * h)
        rel = np.max(np.abs(fd - g), axis=-1) / np.maximum(np.max(np.abs(g), axis=-1), 1e-300)
        out.append(_item("curvature", f"grad_sigma2_fd[n={n}]", 1e-6 - rel))

        # concavity along random chords (Gamma_2 is convex)
        a, b = K[: samples // 2], K[samples // 2: 2 * (samples // 2)]
        t = rng.uniform(0.0, 1.0, size=(a.shape[0], 1))
        mid = cv.sigma_k(t * a + (1 - t) * b, 2)
        chord = t[:, 0] * cv.sigma_k(a, 2) + (1 - t[:, 0]) * cv.sigma_k(b, 2)
        out.append(_item("curvature", f"sigma2_concavity[n={n}]",
                         mid - chord + 1e-12 * (1 + np.abs(chord))))

        # second variation in a random symmetric direction is nonpositive
        vals = []
        for kap in K[:200]:
            A = rng.normal(size=(n, n))
            vals.append(-cv.hessian_quadratic_form(kap, A + A.T) + 1e-10)
        out.append(_item("curvature", f"sigma2_hessian_nonpositive[n={n}]", vals))

        # permutation invariance is exact
        perm = rng.permuted(K[:500], axis=1)
        same = cv.elementary_all(perm) == cv.elementary_all(K[:500])
        out.append(_item("curvature", f"permutation_exact[n={n}]",
                         np.where(np.all(same, axis=-1), 0.0, -1.0)))

    # H_k against brute-force enumeration; dyadic entries keep both sides exact
    bad, count = 0, 0
    for n in range(1, 9):
        for _ in range(25):
            kap = rng.integers(-16, 17, size=n) / 8.0
            for k in range(1, n + 1):
                brute = sum(math.prod(c) for c in itertools.combinations(kap.tolist(), k))
                bad += cv.h_k(kap, k) != brute
                count += 1
    out.append(SuiteItem("curvature", "h_k_brute_force[n<=8]", count, int(bad),
                         0.0 if bad == 0 else -1.0))
    return out


def _flat_wave(points):
    chart = GridChart.torus(2, points)
    return chart.sample(lambda X: 0.1 * np.sin(X[..., 0]) * np.sin(X[..., 1]))


def geometry_suite(rng: np.random.Generator, samples: int = 4) -> list[SuiteItem]:
    out = []
    flat = make_metric("flat-static", 2)
    coarse, fine = _flat_wave(32), _flat_wave(64)
    for name, fn in (("codazzi", codazzi_residual), ("gauss", gauss_scalar_check)):
        rc, rf = float(np.max(fn(coarse, flat))), float(np.max(fn(fine, flat)))
        ratio = rc / rf
        margin = min(ratio - ORDER_BAND[0], ORDER_BAND[1] - ratio)
        out.append(SuiteItem("geometry", f"{name}_order_ratio={ratio:.4f}", 2,
                             int(margin < 0), margin))

    warp = {n: make_metric("exp-warp", n) for n in (2, 3)}
    errs = []
    for n, m in warp.items():
        for a in (0.0, 0.5, 1.0):
            geo = surface_geometry(GridChart.torus(n, 8 if n == 3 else 16).constant(a), m)
            errs.append(1e-10 - np.max(np.abs(geo.kappa - 1.0)))
            errs.append(1e-10 - np.max(np.abs(geo.H2 - n * (n - 1) / 2)))
    out.append(_item("geometry", "umbilic_slices", errs))

    custom = make_metric("custom", 2, psi_time=0.3, psi_space=0.1, sigma_rate=0.2, sigma_aniso=0.1)
    fast_ref, normals, vtildes, inverses = [], [], [], []
    for _ in range(samples):
        chart = GridChart.torus(2, 24)
        c = rng.uniform(-0.05, 0.05, size=4)
        u = chart.sample(lambda X: 1.0 + c[0] * np.sin(X[..., 0] + c[1])
                         + c[2] * np.cos(2 * X[..., 1]) + c[3] * np.sin(X[..., 0] - X[..., 1]))
        a, b = surface_geometry(u, custom), reference_geometry(u, custom)
        gap = max(float(np.max(np.abs(getattr(a, f) - getattr(b, f))))
                  for f in ("g", "ginv", "h", "H", "A2"))
        fast_ref.append(1e-10 - gap)
        normals.append(1e-10 - unit_normal_residual(a, custom))
        vtildes.append(1e-10 - vtilde_residual(a))
        inverses.append(1e-10 - a.ginv_discrepancy)
    out.append(_item("geometry", "compiled_vs_reference", fast_ref))
    out.append(_item("geometry", "unit_normal", normals))
    out.append(_item("geometry", "vtilde_identity", vtildes))
    out.append(_item("geometry", "closed_form_inverse", inverses))
    return out


def cutoff_suite(rng: np.random.Generator, samples: int = 10_000) -> list[SuiteItem]:
    out = []
    for k in (1.5, 2.0, 4.0, 10.0):
        cfg = CutoffConfig(k)
        lo = rng.uniform(0.0, k, samples)
        hi = rng.uniform(2 * k, 20 * k, samples)
        out.append(_item("cutoff", f"identity_branch[k={k:g}]",
                         -np.abs(cutoff_theta(lo, cfg) - lo), cutoff_theta(lo, cfg) == lo))
        out.append(_item("cutoff", f"constant_branch[k={k:g}]",
                         -np.abs(cutoff_theta(hi, cfg) - 2 * k), cutoff_theta(hi, cfg) == 2 * k))
        eps = 1e-9
        jumps = [abs(cutoff_theta(x + eps, cfg) - cutoff_theta(x, cfg)) - eps * cutoff_theta_prime(x, cfg)
                 for x in (k, 2 * k)]
        jumps += [abs(cutoff_theta(x, cfg) - cutoff_theta(x - eps, cfg))
                  - eps * cutoff_theta_prime(x - eps, cfg) for x in (k, 2 * k)]
        out.append(_item("cutoff", f"junction_continuity[k={k:g}]", 1e-12 - np.abs(jumps)))
        t = np.linspace(0.0, 3 * k, samples)
        slope = np.diff(cutoff_theta(t, cfg)) / np.diff(t)
        out.append(_item("cutoff", f"slope_in_0_4[k={k:g}]", np.minimum(slope, 4.0 - slope)))
        tv = rng.uniform(1.0, k, 200)
        nu = rng.normal(size=(200, 3))
        same = np.all(modified_normal(nu, tv, cfg) == nu, axis=-1)
        out.append(_item("cutoff", f"normal_identity[k={k:g}]", np.where(same, 0.0, -1.0)))
    return out


def run_suites(suite: str, seed: int = 0, samples: int | None = None) -> list[SuiteItem]:
    names = SUITES if suite == "all" else (suite,)
    rows = []
    for name in names:
        rng = np.random.default_rng([seed, SUITES.index(name)])
        if name == "curvature":
            rows += curvature_suite(rng, samples or 10_000)
        elif name == "geometry":
            rows += geometry_suite(rng, samples or 4)
        elif name == "cutoff":
            rows += cutoff_suite(rng, samples or 10_000)
        else:
            raise ValueError(f"unknown suite {name!r}")
    return rows


def write_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["suite", "item", "samples", "failures", "worst_margin"])
        for r in rows:
            w.writerow([r.suite, r.item, r.samples, r.failures, repr(r.worst_margin)])
