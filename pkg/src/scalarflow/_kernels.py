"""Compiled stencil passes for the graph geometry.

Arrays are flattened over grid nodes; ``nbr_p[p, k]`` and ``nbr_m[p, k]``
hold the periodic +1 / -1 neighbours of node ``p`` along axis ``k``.
The arithmetic mirrors :func:`scalarflow.surface.reference_geometry`.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def neighbour_tables(shape):
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    n = len(shape)
    nbr_p = np.empty((idx.size, n), dtype=np.int64)
    nbr_m = np.empty((idx.size, n), dtype=np.int64)
    for k in range(n):
        nbr_p[:, k] = np.roll(idx, -1, axis=k).ravel()
        nbr_m[:, k] = np.roll(idx, 1, axis=k).ravel()
    return nbr_p, nbr_m


@njit(cache=True, error_model="numpy")
def _inverse_2x2(a, out, ok):
    for p in range(a.shape[0]):
        det = a[p, 0, 0] * a[p, 1, 1] - a[p, 0, 1] * a[p, 1, 0]
        ok[p] = a[p, 0, 0] > 0.0 and det > 0.0
        out[p, 0, 0] = a[p, 1, 1] / det
        out[p, 1, 1] = a[p, 0, 0] / det
        out[p, 0, 1] = -a[p, 0, 1] / det
        out[p, 1, 0] = -a[p, 1, 0] / det


@njit(cache=True, error_model="numpy")
def _inverse_cholesky(a, out, ok):
    n = a.shape[1]
    L = np.empty((n, n))
    Li = np.empty((n, n))
    for p in range(a.shape[0]):
        L[:, :] = 0.0
        Li[:, :] = 0.0
        good = True
        for i in range(n):
            for j in range(i + 1):
                s = a[p, i, j]
                for k in range(j):
                    s -= L[i, k] * L[j, k]
                if i == j:
                    if s <= 0.0:
                        good = False
                        s = 1.0
                    L[i, i] = np.sqrt(s)
                else:
                    L[i, j] = s / L[j, j]
        ok[p] = good
        for i in range(n):
            Li[i, i] = 1.0 / L[i, i]
            for j in range(i):
                s = 0.0
                for k in range(j, i):
                    s -= L[i, k] * Li[k, j]
                Li[i, j] = s / L[i, i]
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(max(i, j), n):
                    s += Li[k, i] * Li[k, j]
                out[p, i, j] = s


def spd_inverse(a):
    """Batched inverse of SPD matrices (N, n, n); also returns the per-node SPD flag."""
    out = np.empty_like(a)
    ok = np.empty(a.shape[0], dtype=np.bool_)
    if a.shape[1] == 2:
        _inverse_2x2(a, out, ok)
    else:
        _inverse_cholesky(a, out, ok)
    return out, ok


@njit(cache=True, error_model="numpy")
def first_pass(u, psi, sig, siginv, spacing, nbr_p, nbr_m):
    """Gradient, |Du|^2 and the induced metric at every node."""
    N = u.shape[0]
    n = spacing.shape[0]
    Du = np.empty((N, n))
    grad_sq = np.empty(N)
    g = np.empty((N, n, n))
    for p in range(N):
        for i in range(n):
            Du[p, i] = (u[nbr_p[p, i]] - u[nbr_m[p, i]]) / (2.0 * spacing[i])
        s = 0.0
        for i in range(n):
            for j in range(n):
                s += Du[p, i] * siginv[p, i, j] * Du[p, j]
        grad_sq[p] = s
        e2 = np.exp(2.0 * psi[p])
        for i in range(n):
            for j in range(n):
                g[p, i, j] = e2 * (sig[p, i, j] - Du[p, i] * Du[p, j])
    return Du, grad_sq, g


@njit(cache=True, error_model="numpy")
def second_pass(u, psi, dpsi, sig, dsig0, v, Du, g, ginv, spacing, nbr_p, nbr_m):
    """Induced Christoffels, second fundamental form, H and |A|^2.

    The ambient symbols with upper index 0 are formed inline from the
    partials: Gamma^0_00 = d_0 psi, Gamma^0_0i = d_i psi,
    Gamma^0_ij = d_0 psi sigma_ij + 1/2 d_0 sigma_ij.
    """
    N = u.shape[0]
    n = spacing.shape[0]
    Gam = np.empty((N, n, n, n))
    h = np.empty((N, n, n))
    hmixed = np.empty((N, n, n))
    H = np.empty(N)
    A2 = np.empty(N)
    dg = np.empty((n, n, n))
    hess = np.empty((n, n))
    for p in range(N):
        for k in range(n):
            q, r = nbr_p[p, k], nbr_m[p, k]
            inv2h = 1.0 / (2.0 * spacing[k])
            for i in range(n):
                for j in range(n):
                    dg[k, i, j] = (g[q, i, j] - g[r, i, j]) * inv2h
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for l in range(n):
                        s += ginv[p, k, l] * (dg[i, l, j] + dg[j, l, i] - dg[l, i, j])
                    Gam[p, k, i, j] = 0.5 * s
        for i in range(n):
            hi = spacing[i]
            hess[i, i] = (u[nbr_p[p, i]] - 2.0 * u[p] + u[nbr_m[p, i]]) / (hi * hi)
            for j in range(i + 1, n):
                val = (Du[nbr_p[p, j], i] - Du[nbr_m[p, j], i]) / (2.0 * spacing[j])
                hess[i, j] = val
                hess[j, i] = val
        scale = np.exp(psi[p]) * v[p]
        for i in range(n):
            for j in range(n):
                c = hess[i, j]
                for k in range(n):
                    c -= Gam[p, k, i, j] * Du[p, k]
                g0ij = dpsi[p, 0] * sig[p, i, j] + 0.5 * dsig0[p, i, j]
                rhs = (-c - dpsi[p, 0] * Du[p, i] * Du[p, j] - Du[p, i] * dpsi[p, j + 1]
                       - dpsi[p, i + 1] * Du[p, j] - g0ij)
                h[p, i, j] = scale * rhs
        tr = 0.0
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += ginv[p, i, k] * h[p, k, j]
                hmixed[p, i, j] = s
            tr += hmixed[p, i, i]
        a2 = 0.0
        for i in range(n):
            for j in range(n):
                a2 += hmixed[p, i, j] * hmixed[p, j, i]
        H[p] = tr
        A2[p] = a2
    return Gam, h, hmixed, H, A2


@njit(cache=True, error_model="numpy")
def second_pass_2d(u, psi, dpsi, sig, dsig0, v, Du, g, ginv, spacing, nbr_p, nbr_m):
    """Unrolled n = 2 version of :func:`second_pass`."""
    return _second_2d(u, np.exp(psi), dpsi, sig, dsig0, v, Du, g, ginv, spacing, nbr_p, nbr_m)


@njit(cache=True, error_model="numpy")
def _second_2d(u, ep, dpsi, sig, dsig0, v, Du, g, ginv, spacing, nbr_p, nbr_m):
    N = u.shape[0]
    Gam = np.empty((N, 2, 2, 2))
    h = np.empty((N, 2, 2))
    hmixed = np.empty((N, 2, 2))
    H = np.empty(N)
    A2 = np.empty(N)
    i2h0 = 1.0 / (2.0 * spacing[0])
    i2h1 = 1.0 / (2.0 * spacing[1])
    ih00 = 1.0 / (spacing[0] * spacing[0])
    ih11 = 1.0 / (spacing[1] * spacing[1])
    for p in range(N):
        q0, r0, q1, r1 = nbr_p[p, 0], nbr_m[p, 0], nbr_p[p, 1], nbr_m[p, 1]
        # d_k g_00, d_k g_01, d_k g_11
        a0 = (g[q0, 0, 0] - g[r0, 0, 0]) * i2h0
        a1 = (g[q1, 0, 0] - g[r1, 0, 0]) * i2h1
        b0 = (g[q0, 0, 1] - g[r0, 0, 1]) * i2h0
        b1 = (g[q1, 0, 1] - g[r1, 0, 1]) * i2h1
        c0 = (g[q0, 1, 1] - g[r0, 1, 1]) * i2h0
        c1 = (g[q1, 1, 1] - g[r1, 1, 1]) * i2h1
        # first kind Gamma_{l,ij}
        f000 = 0.5 * a0
        f001 = 0.5 * a1
        f011 = b1 - 0.5 * c0
        f100 = b0 - 0.5 * a1
        f101 = 0.5 * c0
        f111 = 0.5 * c1
        gi00, gi01, gi10, gi11 = ginv[p, 0, 0], ginv[p, 0, 1], ginv[p, 1, 0], ginv[p, 1, 1]
        G000 = gi00 * f000 + gi01 * f100
        G001 = gi00 * f001 + gi01 * f101
        G011 = gi00 * f011 + gi01 * f111
        G100 = gi10 * f000 + gi11 * f100
        G101 = gi10 * f001 + gi11 * f101
        G111 = gi10 * f011 + gi11 * f111
        Gam[p, 0, 0, 0] = G000
        Gam[p, 0, 0, 1] = G001
        Gam[p, 0, 1, 0] = G001
        Gam[p, 0, 1, 1] = G011
        Gam[p, 1, 0, 0] = G100
        Gam[p, 1, 0, 1] = G101
        Gam[p, 1, 1, 0] = G101
        Gam[p, 1, 1, 1] = G111
        ux, uy = Du[p, 0], Du[p, 1]
        hxx = (u[q0] - 2.0 * u[p] + u[r0]) * ih00
        hyy = (u[q1] - 2.0 * u[p] + u[r1]) * ih11
        hxy = (Du[q1, 0] - Du[r1, 0]) * i2h1
        cxx = hxx - G000 * ux - G100 * uy
        cxy = hxy - G001 * ux - G101 * uy
        cyy = hyy - G011 * ux - G111 * uy
        s = ep[p] * v[p]
        t0, e0, e1 = dpsi[p, 0], dpsi[p, 1], dpsi[p, 2]
        k00 = t0 * sig[p, 0, 0] + 0.5 * dsig0[p, 0, 0]
        k01 = t0 * sig[p, 0, 1] + 0.5 * dsig0[p, 0, 1]
        k11 = t0 * sig[p, 1, 1] + 0.5 * dsig0[p, 1, 1]
        hx = s * (-cxx - t0 * ux * ux - 2.0 * ux * e0 - k00)
        hxy_ = s * (-cxy - t0 * ux * uy - ux * e1 - e0 * uy - k01)
        hy = s * (-cyy - t0 * uy * uy - 2.0 * uy * e1 - k11)
        h[p, 0, 0] = hx
        h[p, 0, 1] = hxy_
        h[p, 1, 0] = hxy_
        h[p, 1, 1] = hy
        m00 = gi00 * hx + gi01 * hxy_
        m01 = gi00 * hxy_ + gi01 * hy
        m10 = gi10 * hx + gi11 * hxy_
        m11 = gi10 * hxy_ + gi11 * hy
        hmixed[p, 0, 0] = m00
        hmixed[p, 0, 1] = m01
        hmixed[p, 1, 0] = m10
        hmixed[p, 1, 1] = m11
        H[p] = m00 + m11
        A2[p] = m00 * m00 + 2.0 * m01 * m10 + m11 * m11
    return Gam, h, hmixed, H, A2


@njit(cache=True, error_model="numpy")
def geometry_2d(u, ep, dpsi, sig, dsig0, spacing, nbr_p, nbr_m):
    """Fused n = 2 pipeline: first pass, SPD inverses and second pass.

    ``ep`` is exp(psi).  Returns (siginv, Du, grad_sq, v, g, ginv, Gam, h,
    hmixed, H, A2, status) where status is 0 on success, 1 + p if sigma is
    not positive definite at node p, -(1 + p) if g is not.  Nodes with
    |Du|^2 >= 1 get v = nan; the caller checks grad_sq.
    """
    N = u.shape[0]
    siginv = np.empty((N, 2, 2))
    Du = np.empty((N, 2))
    grad_sq = np.empty(N)
    v = np.empty(N)
    g = np.empty((N, 2, 2))
    ginv = np.empty((N, 2, 2))
    i2h0 = 1.0 / (2.0 * spacing[0])
    i2h1 = 1.0 / (2.0 * spacing[1])
    status = 0
    for p in range(N):
        s00, s01, s11 = sig[p, 0, 0], sig[p, 0, 1], sig[p, 1, 1]
        det = s00 * s11 - s01 * s01
        if not (s00 > 0.0 and det > 0.0) and status == 0:
            status = 1 + p
        a00, a01, a11 = s11 / det, -s01 / det, s00 / det
        siginv[p, 0, 0] = a00
        siginv[p, 0, 1] = a01
        siginv[p, 1, 0] = a01
        siginv[p, 1, 1] = a11
        ux = (u[nbr_p[p, 0]] - u[nbr_m[p, 0]]) * i2h0
        uy = (u[nbr_p[p, 1]] - u[nbr_m[p, 1]]) * i2h1
        Du[p, 0] = ux
        Du[p, 1] = uy
        gs = a00 * ux * ux + 2.0 * a01 * ux * uy + a11 * uy * uy
        grad_sq[p] = gs
        v[p] = np.sqrt(1.0 - gs) if gs < 1.0 else np.nan
        e2 = ep[p] * ep[p]
        g00 = e2 * (s00 - ux * ux)
        g01 = e2 * (s01 - ux * uy)
        g11 = e2 * (s11 - uy * uy)
        g[p, 0, 0] = g00
        g[p, 0, 1] = g01
        g[p, 1, 0] = g01
        g[p, 1, 1] = g11
        dg = g00 * g11 - g01 * g01
        if not (g00 > 0.0 and dg > 0.0) and status == 0:
            status = -(1 + p)
        ginv[p, 0, 0] = g11 / dg
        ginv[p, 0, 1] = -g01 / dg
        ginv[p, 1, 0] = -g01 / dg
        ginv[p, 1, 1] = g00 / dg
    Gam, h, hmixed, H, A2 = _second_2d(u, ep, dpsi, sig, dsig0, v, Du, g, ginv, spacing,
                                       nbr_p, nbr_m)
    return siginv, Du, grad_sq, v, g, ginv, Gam, h, hmixed, H, A2, status


@njit(cache=True, error_model="numpy")
def flow_terms_2d(u, ep, dpsi, sig, dsig, spacing, nbr_p, nbr_m):
    """The n = 2 quantities the flow needs, without storing the tensors.

    Same arithmetic as :func:`geometry_2d`.  ``dsig`` is the full
    (N, 3, 2, 2) partials array.  Returns (Du, grad_sq, H, H2, lam_min,
    status) with status as in :func:`geometry_2d`; H2 = (H^2 - |A|^2)/2 and
    lam_min is the smallest eigenvalue of g.
    """
    N = u.shape[0]
    Du = np.empty((N, 2))
    grad_sq = np.empty(N)
    gc = np.empty((N, 3))
    H = np.empty(N)
    H2 = np.empty(N)
    lam = np.empty(N)
    i2h0 = 1.0 / (2.0 * spacing[0])
    i2h1 = 1.0 / (2.0 * spacing[1])
    ih00 = 1.0 / (spacing[0] * spacing[0])
    ih11 = 1.0 / (spacing[1] * spacing[1])
    status = 0
    for p in range(N):
        s00, s01, s11 = sig[p, 0, 0], sig[p, 0, 1], sig[p, 1, 1]
        det = s00 * s11 - s01 * s01
        if not (s00 > 0.0 and det > 0.0) and status == 0:
            status = 1 + p
        ux = (u[nbr_p[p, 0]] - u[nbr_m[p, 0]]) * i2h0
        uy = (u[nbr_p[p, 1]] - u[nbr_m[p, 1]]) * i2h1
        Du[p, 0] = ux
        Du[p, 1] = uy
        grad_sq[p] = (s11 * ux * ux - 2.0 * s01 * ux * uy + s00 * uy * uy) / det
        e2 = ep[p] * ep[p]
        g00 = e2 * (s00 - ux * ux)
        g01 = e2 * (s01 - ux * uy)
        g11 = e2 * (s11 - uy * uy)
        gc[p, 0] = g00
        gc[p, 1] = g01
        gc[p, 2] = g11
        if not (g00 > 0.0 and g00 * g11 - g01 * g01 > 0.0) and status == 0:
            status = -(1 + p)
    for p in range(N):
        q0, r0, q1, r1 = nbr_p[p, 0], nbr_m[p, 0], nbr_p[p, 1], nbr_m[p, 1]
        a0 = (gc[q0, 0] - gc[r0, 0]) * i2h0
        a1 = (gc[q1, 0] - gc[r1, 0]) * i2h1
        b0 = (gc[q0, 1] - gc[r0, 1]) * i2h0
        b1 = (gc[q1, 1] - gc[r1, 1]) * i2h1
        c0 = (gc[q0, 2] - gc[r0, 2]) * i2h0
        c1 = (gc[q1, 2] - gc[r1, 2]) * i2h1
        f000 = 0.5 * a0
        f001 = 0.5 * a1
        f011 = b1 - 0.5 * c0
        f100 = b0 - 0.5 * a1
        f101 = 0.5 * c0
        f111 = 0.5 * c1
        g00, g01, g11 = gc[p, 0], gc[p, 1], gc[p, 2]
        dg = g00 * g11 - g01 * g01
        gi00, gi01, gi11 = g11 / dg, -g01 / dg, g00 / dg
        G000 = gi00 * f000 + gi01 * f100
        G001 = gi00 * f001 + gi01 * f101
        G011 = gi00 * f011 + gi01 * f111
        G100 = gi01 * f000 + gi11 * f100
        G101 = gi01 * f001 + gi11 * f101
        G111 = gi01 * f011 + gi11 * f111
        ux, uy = Du[p, 0], Du[p, 1]
        hxx = (u[q0] - 2.0 * u[p] + u[r0]) * ih00
        hyy = (u[q1] - 2.0 * u[p] + u[r1]) * ih11
        hxy = (Du[q1, 0] - Du[r1, 0]) * i2h1
        cxx = hxx - G000 * ux - G100 * uy
        cxy = hxy - G001 * ux - G101 * uy
        cyy = hyy - G011 * ux - G111 * uy
        gs = grad_sq[p]
        s = ep[p] * np.sqrt(1.0 - gs) if gs < 1.0 else np.nan
        t0, e0, e1 = dpsi[p, 0], dpsi[p, 1], dpsi[p, 2]
        k00 = t0 * sig[p, 0, 0] + 0.5 * dsig[p, 0, 0, 0]
        k01 = t0 * sig[p, 0, 1] + 0.5 * dsig[p, 0, 0, 1]
        k11 = t0 * sig[p, 1, 1] + 0.5 * dsig[p, 0, 1, 1]
        hx = s * (-cxx - t0 * ux * ux - 2.0 * ux * e0 - k00)
        hxy_ = s * (-cxy - t0 * ux * uy - ux * e1 - e0 * uy - k01)
        hy = s * (-cyy - t0 * uy * uy - 2.0 * uy * e1 - k11)
        m00 = gi00 * hx + gi01 * hxy_
        m01 = gi00 * hxy_ + gi01 * hy
        m10 = gi01 * hx + gi11 * hxy_
        m11 = gi01 * hxy_ + gi11 * hy
        tr = m00 + m11
        H[p] = tr
        H2[p] = 0.5 * (tr * tr - (m00 * m00 + 2.0 * m01 * m10 + m11 * m11))
        half = 0.5 * (g00 + g11)
        lam[p] = half - np.sqrt(0.25 * (g00 - g11) ** 2 + g01 * g01)
    return Du, grad_sq, H, H2, lam, status


@njit(cache=True, error_model="numpy")
def flow_rates(ep, v, H, H2, lam, fval, n, h2_floor, strict):
    """sigma_2, du/dt and the CFL diffusion scale per node.

    Returns (F, speed, diffusion, bad) where ``bad`` is the first node
    outside the admissible set, or -1.
    """
    N = ep.size
    F = np.empty(N)
    speed = np.empty(N)
    diffusion = np.empty(N)
    for p in range(N):
        h, h2 = H[p], H2[p]
        if h <= 0.0 or (h2 <= 0.0 if strict else h2 < h2_floor):
            return F, speed, diffusion, p
        s = np.sqrt(h2)
        e = v[p] / ep[p]
        F[p] = s
        speed[p] = -e * (s - fval[p])
        diffusion[p] = max(e, v[p] * v[p]) * (n - 1) * h / (2.0 * s) / lam[p]
    return F, speed, diffusion, -1
