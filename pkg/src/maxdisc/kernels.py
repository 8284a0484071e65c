"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names at the bottom dispatch on ``MAXDISC_NUMBA`` (see
:mod:`maxdisc._accel`). Implementations draw random numbers in exactly the
same order, so switching backends changes results only by rounding.

Brownian bridge maximum: for a bridge from ``a`` to ``b`` with variance
``v`` accumulated over the interval, ``P(max > m) = exp(-2 (m-a)(m-b) / v)``,
so ``max = (a + b + sqrt((a-b)^2 - 2 v ln U)) / 2`` with ``U ~ U(0, 1]``.
"""

import math

import numpy as np
from scipy.signal import lfilter

from ._accel import njit, pick


def bridge_weights(rho: float, K: int) -> np.ndarray:
    """Weights turning a free AR(1) path into the exact OU bridge.

    With ``y_0 = a`` and ``y_j = rho y_{j-1} + sqrt(1-rho^2) e_j`` the bridge
    to ``y_K = b`` is ``y_j + (b - y_K) w_j`` where
    ``w_j = rho^(K-j) (1 - rho^(2j)) / (1 - rho^(2K))``.
    """
    j = np.arange(K + 1, dtype=float)
    lr = math.log(rho)
    num = np.exp(lr * (K - j)) * -np.expm1(2.0 * lr * j)
    return num / -math.expm1(2.0 * lr * K)


# --------------------------------------------------------------------------
# OU joint maxima


@njit
def _ou_joint_maxima_nb(gen, n_skel, K, m, tail, rho, bb_var, thr, bw):
    s = math.sqrt(1.0 - rho * rho)
    rc = rho**K
    sc = math.sqrt(1.0 - rc * rc)
    x = np.empty(n_skel + 1)
    x[0] = gen.standard_normal()
    for i in range(n_skel):
        x[i + 1] = rc * x[i] + sc * gen.standard_normal()
    S = x[0]
    Sg = -np.inf
    for i in range(n_skel + 1):
        if x[i] > S:
            S = x[i]
        if (i * K) % m == 0 and x[i] > Sg:
            Sg = x[i]
    mc = S
    mg = Sg

    # tail after the last skeleton point: free forward path
    base = n_skel * K
    tp = np.empty(tail + 1)
    tp[0] = x[n_skel]
    for j in range(1, tail + 1):
        tp[j] = rho * tp[j - 1] + s * gen.standard_normal()
    for j in range(tail):
        u = 1.0 - gen.random()
        a = tp[j]
        b = tp[j + 1]
        cm = 0.5 * (a + b + math.sqrt((a - b) * (a - b) - 2.0 * bb_var * math.log(u)))
        if cm > mc:
            mc = cm
        if (base + j + 1) % m == 0 and b > mg:
            mg = b

    path = np.empty(K + 1)
    nref = 0
    nskip = 0
    for i in range(n_skel):
        a = x[i]
        b = x[i + 1]
        lo = i * K
        St = S
        if (lo // m + 1) * m < lo + K and Sg < St:
            St = Sg
        if a < St and b < St and (St - a) * (St - b) > thr:
            nskip += 1
            continue
        nref += 1
        path[0] = a
        for j in range(1, K + 1):
            path[j] = rho * path[j - 1] + s * gen.standard_normal()
        d = b - path[K]
        for j in range(1, K):
            path[j] += d * bw[j]
        path[K] = b
        for j in range(K):
            u = 1.0 - gen.random()
            p = path[j]
            q = path[j + 1]
            cm = 0.5 * (p + q + math.sqrt((p - q) * (p - q) - 2.0 * bb_var * math.log(u)))
            if cm > mc:
                mc = cm
            if (lo + j) % m == 0 and p > mg:
                mg = p
    return mc, mg, nref, nskip


def _ar1(x0, rho, innov):
    """``y_j = rho y_{j-1} + innov_j`` started from ``x0``; returns ``y_1..y_n``."""
    return lfilter([1.0], [1.0, -rho], innov, zi=[rho * x0])[0]


def _bb_max(a, b, bb_var, u):
    return 0.5 * (a + b + np.sqrt((a - b) * (a - b) - 2.0 * bb_var * np.log(u)))


def _ou_joint_maxima_np(gen, n_skel, K, m, tail, rho, bb_var, thr, bw):
    s = math.sqrt(1.0 - rho * rho)
    rc = rho**K
    sc = math.sqrt(1.0 - rc * rc)
    x = np.empty(n_skel + 1)
    x[0] = gen.standard_normal()
    x[1:] = _ar1(x[0], rc, sc * gen.standard_normal(n_skel))
    S = float(x.max())
    on_grid = (np.arange(n_skel + 1) * K) % m == 0
    Sg = float(x[on_grid].max()) if on_grid.any() else -np.inf
    mc, mg = S, Sg

    base = n_skel * K
    if tail:
        tp = np.empty(tail + 1)
        tp[0] = x[n_skel]
        tp[1:] = _ar1(tp[0], rho, s * gen.standard_normal(tail))
        u = 1.0 - gen.random(tail)
        mc = max(mc, float(_bb_max(tp[:-1], tp[1:], bb_var, u).max()))
        idx = base + np.arange(1, tail + 1)
        sel = idx % m == 0
        if sel.any():
            mg = max(mg, float(tp[1:][sel].max()))

    lo = np.arange(n_skel) * K
    has_grid = (lo // m + 1) * m < lo + K
    St = np.where(has_grid, min(S, Sg), S)
    a, b = x[:-1], x[1:]
    refine = (a >= St) | (b >= St) | ((St - a) * (St - b) <= thr)
    nref = int(refine.sum())
    offs = np.arange(K)
    grid_off = None
    for i in np.flatnonzero(refine):
        path = np.empty(K + 1)
        path[0] = x[i]
        path[1:] = _ar1(x[i], rho, s * gen.standard_normal(K))
        path += (x[i + 1] - path[K]) * bw
        path[K] = x[i + 1]
        u = 1.0 - gen.random(K)
        mc = max(mc, float(_bb_max(path[:-1], path[1:], bb_var, u).max()))
        grid_off = (lo[i] + offs) % m == 0
        if grid_off.any():
            mg = max(mg, float(path[:-1][grid_off].max()))
    return mc, mg, nref, n_skel - nref


# --------------------------------------------------------------------------
# fBm window statistics for the Pickands-type constants

SUP_MESH = 0
SUP_BRIDGE = 1  # alpha = 1: exact Brownian bridge maxima between mesh points
SUP_LINEAR = 2  # alpha = 2: B(t) = t N, supremum of a parabola


@njit
def _window_stats_nb(B, U, nlam, taus, m, alpha, h, mode):
    nw = nlam.shape[0]
    L = np.empty(nw)
    c = np.empty(nw)
    g = np.empty(nw)
    r2 = math.sqrt(2.0)
    slope = B[1] / h if B.shape[0] > 1 else 0.0
    nmax = 0
    for w in range(nw):
        nmax = max(nmax, nlam[w])
    # bridge noise does not depend on the tilt: compute once per path
    lu = np.empty(nmax if mode == SUP_BRIDGE else 0)
    for i in range(lu.shape[0]):
        lu[i] = -4.0 * h * math.log(U[i])
    y = np.empty(nmax + 1)
    for w in range(nw):
        n = nlam[w]
        j = taus[w]
        bj = B[j]
        for i in range(n + 1):
            t = abs(i - j) * h
            if alpha == 1.0:
                drift = t
            elif alpha == 2.0:
                drift = t * t
            else:
                drift = t**alpha
            y[i] = r2 * (B[i] - bj) - drift
        ymax = y[0]
        for i in range(1, n + 1):
            ymax = max(ymax, y[i])
        gmax = y[0]
        for i in range(m, n + 1, m):
            gmax = max(gmax, y[i])
        acc = 0.0
        for i in range(n + 1):
            acc += math.exp(y[i] - ymax)
        L[w] = ymax + math.log(acc)
        g[w] = gmax
        if mode == SUP_BRIDGE:
            cmax = ymax
            for i in range(n):
                dy = y[i] - y[i + 1]
                cmax = max(cmax, 0.5 * (y[i] + y[i + 1] + math.sqrt(dy * dy + lu[i])))
            c[w] = cmax
        elif mode == SUP_LINEAR:
            lo = -j * h
            hi = (n - j) * h
            s = slope / r2
            if s < lo:
                s = lo
            elif s > hi:
                s = hi
            # the mesh values lie on the parabola; keep c >= g under rounding
            c[w] = max(r2 * slope * s - s * s, ymax)
        else:
            c[w] = ymax
    return L, c, g


def _window_stats_np(B, U, nlam, taus, m, alpha, h, mode):
    nw = len(nlam)
    L = np.empty(nw)
    c = np.empty(nw)
    g = np.empty(nw)
    r2 = math.sqrt(2.0)
    slope = B[1] / h if len(B) > 1 else 0.0
    for w in range(nw):
        n = int(nlam[w])
        j = int(taus[w])
        i = np.arange(n + 1)
        y = r2 * (B[: n + 1] - B[j]) - (np.abs(i - j) * h) ** alpha
        ymax = float(y.max())
        L[w] = ymax + math.log(float(np.exp(y - ymax).sum()))
        g[w] = float(y[::m].max())
        if mode == SUP_BRIDGE:
            cm = 0.5 * (y[:-1] + y[1:] + np.sqrt((y[:-1] - y[1:]) ** 2 - 4.0 * h * np.log(U[:n])))
            c[w] = max(float(cm.max()) if n else -np.inf, ymax)
        elif mode == SUP_LINEAR:
            s = min(max(slope / r2, -j * h), (n - j) * h)
            c[w] = max(r2 * slope * s - s * s, ymax)
        else:
            c[w] = ymax
    return L, c, g


# --------------------------------------------------------------------------
# lattice counting


@njit
def _lattice_counts_nb(X, Y, xs, ys):
    n, p = X.shape
    npts = xs.shape[0]
    out = np.zeros(npts, dtype=np.int64)
    for q in range(npts):
        cnt = 0
        for r in range(n):
            ok = True
            for k in range(p):
                if X[r, k] > xs[q, k] or Y[r, k] > ys[q, k]:
                    ok = False
                    break
            if ok:
                cnt += 1
        out[q] = cnt
    return out


def _lattice_counts_np(X, Y, xs, ys):
    inside = (X[None, :, :] <= xs[:, None, :]) & (Y[None, :, :] <= ys[:, None, :])
    return inside.all(axis=2).sum(axis=1).astype(np.int64)


ou_joint_maxima = pick(_ou_joint_maxima_nb, _ou_joint_maxima_np)
window_stats = pick(_window_stats_nb, _window_stats_np)
lattice_counts = pick(_lattice_counts_nb, _lattice_counts_np)

BACKENDS = {
    "numba": {
        "ou_joint_maxima": _ou_joint_maxima_nb,
        "window_stats": _window_stats_nb,
        "lattice_counts": _lattice_counts_nb,
    },
    "numpy": {
        "ou_joint_maxima": _ou_joint_maxima_np,
        "window_stats": _window_stats_np,
        "lattice_counts": _lattice_counts_np,
    },
}
