"""Hot numeric kernels, jitted under the numba backend.

Two inner loops dominate runtime: the per-edge Riemannian SGD epoch of the
ball embedding and the exhaustive four-point scan used by the hyperbolicity
measure. Each has a numba path and a numpy fallback; ``poindp bench`` times
both. Dispatch follows :mod:`poindp.backend`.
"""

import math

import numpy as np

from .backend import HAS_NUMBA, use_numba

if HAS_NUMBA:
    from numba import njit


def _embed_epoch_impl(points, edge_u, edge_v, negs, lr, c, margin):
    """One epoch of per-sample Riemannian SGD on the distance softmax loss.

    ``points`` (n, dim) is updated in place, one directed edge at a time:
    gradients for the anchor, the positive and the pre-drawn negatives are
    computed against the current table, then applied with the conformal
    rescaling ((1 - c||t||^2)^2 / 4) and projected back into the ball.
    Returns the summed loss over the epoch.
    """
    m = edge_u.shape[0]
    k = negs.shape[1]
    dim = points.shape[1]
    sqc = math.sqrt(c)
    bound = 1.0 / sqc - margin
    inv_sqc = 1.0 / sqc

    nt = k + 1
    tidx = np.empty(nt, dtype=np.int64)
    dist = np.empty(nt)
    ginv = np.empty(nt)  # 1/sqrt(gamma^2 - 1) per target
    betas = np.empty(nt)
    diff2s = np.empty(nt)
    grad_u = np.empty(dim)
    grad_t = np.empty((nt, dim))
    total_loss = 0.0

    for i in range(m):
        u = edge_u[i]
        tidx[0] = edge_v[i]
        for j in range(k):
            tidx[j + 1] = negs[i, j]

        u2 = 0.0
        for d in range(dim):
            u2 += points[u, d] * points[u, d]
        alpha = 1.0 - c * u2

        for j in range(nt):
            t = tidx[j]
            t2 = 0.0
            diff2 = 0.0
            for d in range(dim):
                td = points[t, d]
                t2 += td * td
                dd = points[u, d] - td
                diff2 += dd * dd
            beta = 1.0 - c * t2
            gamma = 1.0 + 2.0 * c * diff2 / (alpha * beta)
            dist[j] = inv_sqc * math.acosh(gamma)
            ginv[j] = 1.0 / math.sqrt(max(gamma * gamma - 1.0, 1e-15))
            betas[j] = beta
            diff2s[j] = diff2

        # softmax over negated distances, log-sum-exp stabilised
        mx = -dist[0]
        for j in range(1, nt):
            if -dist[j] > mx:
                mx = -dist[j]
        s = 0.0
        for j in range(nt):
            s += math.exp(-dist[j] - mx)
        total_loss += dist[0] + mx + math.log(s)

        for d in range(dim):
            grad_u[d] = 0.0
        for j in range(nt):
            t = tidx[j]
            p = math.exp(-dist[j] - mx) / s
            coeff = (1.0 - p) if j == 0 else -p
            beta = betas[j]
            diff2 = diff2s[j]
            common = coeff * 4.0 * sqc * ginv[j]
            cu = common / beta
            ct = common / alpha
            for d in range(dim):
                ud = points[u, d]
                td = points[t, d]
                grad_u[d] += cu * ((ud - td) / alpha + c * diff2 * ud / (alpha * alpha))
                grad_t[j, d] = ct * ((td - ud) / beta + c * diff2 * td / (beta * beta))

        # apply updates: anchor once, every target row
        scale_u = lr * alpha * alpha / 4.0
        nrm = 0.0
        for d in range(dim):
            points[u, d] -= scale_u * grad_u[d]
            nrm += points[u, d] * points[u, d]
        nrm = math.sqrt(nrm)
        if nrm >= bound:
            f = bound / nrm
            for d in range(dim):
                points[u, d] *= f
        for j in range(nt):
            t = tidx[j]
            scale_t = lr * betas[j] * betas[j] / 4.0
            nrm = 0.0
            for d in range(dim):
                points[t, d] -= scale_t * grad_t[j, d]
                nrm += points[t, d] * points[t, d]
            nrm = math.sqrt(nrm)
            if nrm >= bound:
                f = bound / nrm
                for d in range(dim):
                    points[t, d] *= f

    return total_loss


def _gromov_scan_impl(D):
    """Max over quadruples of (largest - second largest pairing sum) / 2."""
    n = D.shape[0]
    best = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            dab = D[a, b]
            for x in range(b + 1, n):
                dax = D[a, x]
                dbx = D[b, x]
                for y in range(x + 1, n):
                    s1 = dab + D[x, y]
                    s2 = dax + D[b, y]
                    s3 = D[a, y] + dbx
                    if s1 >= s2:
                        hi = s1
                        mid = s2
                    else:
                        hi = s2
                        mid = s1
                    if s3 > hi:
                        mid = hi
                        hi = s3
                    elif s3 > mid:
                        mid = s3
                    diff = hi - mid
                    if diff > best:
                        best = diff
    return 0.5 * best


def gromov_scan_numpy(D):
    """Blockwise numpy evaluation of the four-point scan.

    Vectorises over (x, y) for each anchor pair (a, b). Degenerate
    quadruples with repeated vertices contribute 0 and never affect the max.
    """
    n = D.shape[0]
    best = 0.0
    for a in range(n):
        ra = D[a]
        for b in range(a + 1, n):
            rb = D[b]
            s1 = D[a, b] + D
            s2 = ra[:, None] + rb[None, :]
            s3 = rb[:, None] + ra[None, :]
            hi = np.maximum(np.maximum(s1, s2), s3)
            lo = np.minimum(np.minimum(s1, s2), s3)
            mid = s1 + s2 + s3 - hi - lo
            m = np.max(hi - mid)
            if m > best:
                best = m
    return 0.5 * best


if HAS_NUMBA:
    _embed_epoch_numba = njit(cache=True)(_embed_epoch_impl)
    _gromov_scan_numba = njit(cache=True)(_gromov_scan_impl)


def embed_epoch(points, edge_u, edge_v, negs, lr, c, margin):
    if use_numba():
        return _embed_epoch_numba(points, edge_u, edge_v, negs, lr, c, margin)
    return _embed_epoch_impl(points, edge_u, edge_v, negs, lr, c, margin)


def gromov_scan(D):
    if use_numba():
        return _gromov_scan_numba(D)
    return gromov_scan_numpy(D)
