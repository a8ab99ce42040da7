"""L1-regularized max-margin separators between two proposed clusters.

The objective for a pair ``(l, m)`` is

    sum_{i in l} h(theta . x_i) + sum_{i in m} h(-theta . x_i) + lam * |theta|_1

with ``h`` the hinge ``[1 - u]_+``.  For ``huber_delta > 0`` the hinge is
replaced by its Huber smoothing, quadratic on ``[1 - delta, 1 + delta]``,
which makes the loss differentiable.  There is no intercept; inputs are
expected to be column-standardized.

The solver is cyclic coordinate descent in which every coordinate step is
the *exact* minimizer of the one-dimensional piecewise-quadratic objective,
found among its sorted breakpoints.  Zero coordinates whose loss gradient is
inside ``[-lam, lam]`` are skipped, and sweeps alternate between the active
set and full passes.  Features that cannot enter the support at ``lam`` by
the strong rule are screened out first; the optimality conditions are then
checked on every feature and violators are added back.

Pairs on which coordinate descent stalls, and every plain-hinge fit, are
solved as a quadratic (or linear) program by an interior-point method and
polished by coordinate descent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numba
import numpy as np

from .core import SPARSITY_EPS, ClusterProposal, DataMatrix, Separator, child_seed, make_rng
from .errors import EmptyCluster, NotConverged

_JIT = dict(cache=True, nogil=True)


@dataclass(frozen=True)
class SolverSettings:
    lam: float = 1.0
    max_iters: int | None = None  # None -> 10 * D sweeps
    tol: float = 1e-7
    huber_delta: float = 0.01

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.huber_delta >= 0:
            raise ValueError("huber_delta must be >= 0")

    def sweeps(self, n_features):
        return self.max_iters if self.max_iters is not None else 10 * n_features


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(**_JIT)
def _loss(u, delta):
    if delta > 0.0:
        if u <= 1.0 - delta:
            return 1.0 - u
        if u >= 1.0 + delta:
            return 0.0
        v = 1.0 + delta - u
        return v * v / (4.0 * delta)
    return 1.0 - u if u < 1.0 else 0.0


@numba.njit(**_JIT)
def _dloss(u, delta, right):
    # one-sided derivative of the (smoothed) hinge at margin u
    if delta > 0.0:
        if u <= 1.0 - delta:
            return -1.0
        if u >= 1.0 + delta:
            return 0.0
        return (u - 1.0 - delta) / (2.0 * delta)
    if right:
        return -1.0 if u < 1.0 else 0.0
    return -1.0 if u <= 1.0 else 0.0


@numba.njit(**_JIT)
def _line_deriv(xd, y, r, t, lam, delta, right):
    # one-sided derivative in t of sum_i loss(r_i + c_i t) + lam |t|, c_i = y_i x_di
    s = 0.0
    for i in range(r.shape[0]):
        c = y[i] * xd[i]
        if c == 0.0:
            continue
        u = r[i] + c * t
        if c > 0.0:
            s += c * _dloss(u, delta, right)
        else:
            s += c * _dloss(u, delta, not right)
    if right:
        s += lam if t >= 0.0 else -lam
    else:
        s += lam if t > 0.0 else -lam
    return s


@numba.njit(**_JIT)
def _coord_min(xd, y, r, lam, delta, bp):
    nb = 0
    for i in range(r.shape[0]):
        c = y[i] * xd[i]
        if c == 0.0:
            continue
        bp[nb] = (1.0 - delta - r[i]) / c
        nb += 1
        if delta > 0.0:
            bp[nb] = (1.0 + delta - r[i]) / c
            nb += 1
    if lam > 0.0:
        bp[nb] = 0.0
        nb += 1
    if nb == 0:
        return 0.0
    if delta == 0.0:
        b = np.unique(bp[:nb])
        nu = b.shape[0]
        lo = 0
        hi = nu - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _line_deriv(xd, y, r, 0.5 * (b[mid] + b[mid + 1]), lam, delta, True) >= 0.0:
                hi = mid
            else:
                lo = mid + 1
        return b[lo]
    b = np.sort(bp[:nb])
    lo = 0
    hi = nb
    while lo < hi:
        mid = (lo + hi) // 2
        if _line_deriv(xd, y, r, b[mid], lam, delta, True) >= 0.0:
            hi = mid
        else:
            lo = mid + 1
    if lo == nb:
        return b[nb - 1]
    hi_t = b[lo]
    f_hi = _line_deriv(xd, y, r, hi_t, lam, delta, False)
    if f_hi <= 0.0 or lo == 0:
        return hi_t
    lo_t = b[lo - 1]
    f_lo = _line_deriv(xd, y, r, lo_t, lam, delta, True)
    # derivative is affine on (lo_t, hi_t); written symmetrically so that
    # negating the labels negates the result bit for bit
    t = (lo_t * f_hi - hi_t * f_lo) / (f_hi - f_lo)
    if t < lo_t:
        t = lo_t
    elif t > hi_t:
        t = hi_t
    return t


@numba.njit(**_JIT)
def _ray_deriv(r, q, a, b, na, s, lam, delta, right):
    # one-sided derivative in s of sum_i loss(r_i + s q_i) + lam sum_j |a_j + s b_j|
    tot = 0.0
    for i in range(r.shape[0]):
        c = q[i]
        if c == 0.0:
            continue
        u = r[i] + c * s
        if c > 0.0:
            tot += c * _dloss(u, delta, right)
        else:
            tot += c * _dloss(u, delta, not right)
    pen = 0.0
    for j in range(na):
        bj = b[j]
        if bj == 0.0:
            continue
        v = a[j] + s * bj
        if v > 0.0:
            pen += bj
        elif v < 0.0:
            pen -= bj
        elif right:
            pen += abs(bj)
        else:
            pen -= abs(bj)
    return tot + lam * pen


@numba.njit(**_JIT)
def _ray_min(r, q, a, b, na, lam, delta, bp):
    """Exact minimizer over s of the convex piecewise quadratic along a ray."""
    nb = 0
    for i in range(r.shape[0]):
        c = q[i]
        if c == 0.0:
            continue
        bp[nb] = (1.0 - delta - r[i]) / c
        nb += 1
        if delta > 0.0:
            bp[nb] = (1.0 + delta - r[i]) / c
            nb += 1
    if lam > 0.0:
        for j in range(na):
            if b[j] != 0.0:
                bp[nb] = -a[j] / b[j]
                nb += 1
    if nb == 0:
        return 0.0
    if delta == 0.0:
        # piecewise linear: probe between kinks, never on them
        srt = np.unique(bp[:nb])
        nu = srt.shape[0]
        lo = 0
        hi = nu - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _ray_deriv(r, q, a, b, na, 0.5 * (srt[mid] + srt[mid + 1]), lam, delta, True) >= 0.0:
                hi = mid
            else:
                lo = mid + 1
        return srt[lo]
    srt = np.sort(bp[:nb])
    lo = 0
    hi = nb
    while lo < hi:
        mid = (lo + hi) // 2
        if _ray_deriv(r, q, a, b, na, srt[mid], lam, delta, True) >= 0.0:
            hi = mid
        else:
            lo = mid + 1
    if lo == nb:
        return srt[nb - 1]
    hi_s = srt[lo]
    f_hi = _ray_deriv(r, q, a, b, na, hi_s, lam, delta, False)
    if f_hi <= 0.0 or lo == 0:
        return hi_s
    lo_s = srt[lo - 1]
    f_lo = _ray_deriv(r, q, a, b, na, lo_s, lam, delta, True)
    t = (lo_s * f_hi - hi_s * f_lo) / (f_hi - f_lo)
    if t < lo_s:
        t = lo_s
    elif t > hi_s:
        t = hi_s
    return t


@numba.njit(**_JIT)
def _objective(m, theta, lam, delta):
    s = 0.0
    for i in range(m.shape[0]):
        s += _loss(m[i], delta)
    a = 0.0
    for d in range(theta.shape[0]):
        a += abs(theta[d])
    return s + lam * a


@numba.njit(**_JIT)
def _newton_step(xt, y, lam, delta, theta, m, w, bp):
    """Generalized Newton step on the nonzero coordinates, exact line search.

    Returns True if the iterate moved.
    """
    D, n = xt.shape
    na = 0
    for d in range(D):
        if theta[d] != 0.0:
            na += 1
    if na < 2:
        return False
    act = np.empty(na, np.int64)
    j = 0
    for d in range(D):
        if theta[d] != 0.0:
            act[j] = d
            j += 1
    nbnd = 0
    for i in range(n):
        if 1.0 - delta < m[i] < 1.0 + delta:
            nbnd += 1
    band = np.empty(nbnd, np.int64)
    j = 0
    for i in range(n):
        if 1.0 - delta < m[i] < 1.0 + delta:
            band[j] = i
            j += 1
    h = np.zeros((na, na))
    grad = np.empty(na)
    scale = 1.0 / (2.0 * delta)
    for a in range(na):
        xa = xt[act[a]]
        gsum = 0.0
        for i in range(n):
            gsum += xa[i] * w[i]
        grad[a] = gsum + (lam if theta[act[a]] > 0.0 else -lam)
        for c in range(a, na):
            xc = xt[act[c]]
            acc = 0.0
            for k in range(nbnd):
                i = band[k]
                acc += xa[i] * xc[i]
            h[a, c] = acc * scale
            h[c, a] = acc * scale
    ridge = 0.0
    for a in range(na):
        if h[a, a] > ridge:
            ridge = h[a, a]
    ridge = 1e-9 * max(ridge, 1.0)
    for a in range(na):
        h[a, a] += ridge
    p = np.linalg.solve(h, -grad)
    q = np.zeros(n)
    for a in range(na):
        xa = xt[act[a]]
        pa = p[a]
        for i in range(n):
            q[i] += y[i] * xa[i] * pa
    av = np.empty(na)
    for a in range(na):
        av[a] = theta[act[a]]
    step = _ray_min(m, q, av, p, na, lam, delta, bp)
    if step == 0.0:
        return False
    for a in range(na):
        v = av[a] + step * p[a]
        # land exactly on zero when the line search stopped at a sign change
        if abs(v) <= 1e-14 * abs(av[a]):
            v = 0.0
        theta[act[a]] = v
    for i in range(n):
        acc = 0.0
        for d in range(D):
            if theta[d] != 0.0:
                acc += xt[d, i] * theta[d]
        m[i] = y[i] * acc
        w[i] = y[i] * _dloss(m[i], delta, True)
    return True


@numba.njit(**_JIT)
def _cd_fit(xt, y, lam, delta, max_iters, tol, theta, warm=False, nnz_cap=-1):
    """Fit one separator. ``xt`` is the D x n transposed pair matrix.

    ``theta`` is the output buffer; with ``warm`` its content is the
    starting point.  Returns (objective, sweeps used, status, max KKT
    violation) with status 1 = converged, 0 = out of sweeps and 2 = gave up
    because a full sweep ended with more than ``nnz_cap`` nonzeros.
    """
    D, n = xt.shape
    m = np.zeros(n)
    w = np.empty(n)  # y_i * loss'(m_i)
    r = np.empty(n)
    bp = np.empty(2 * n + D + 1)
    if warm:
        for d in range(D):
            td = theta[d]
            if td != 0.0:
                for i in range(n):
                    m[i] += xt[d, i] * td
        for i in range(n):
            m[i] *= y[i]
    else:
        for d in range(D):
            theta[d] = 0.0
    for i in range(n):
        w[i] = y[i] * _dloss(m[i], delta, True)
    obj = _objective(m, theta, lam, delta)
    full = True
    it = 0
    kkt = 0.0
    while it < max_iters:
        it += 1
        kkt = 0.0
        if not full and delta > 0.0:
            _newton_step(xt, y, lam, delta, theta, m, w, bp)
        for d in range(D):
            td = theta[d]
            if not full and td == 0.0:
                continue
            xd = xt[d]
            if delta > 0.0:
                g = 0.0
                for i in range(n):
                    g += xd[i] * w[i]
                if td == 0.0:
                    v = abs(g) - lam
                    if v <= 0.0:
                        continue
                else:
                    v = abs(g + lam) if td > 0.0 else abs(g - lam)
                if v > kkt:
                    kkt = v
            for i in range(n):
                r[i] = m[i] - y[i] * xd[i] * td
            t = _coord_min(xd, y, r, lam, delta, bp)
            if t == td:
                continue
            theta[d] = t
            for i in range(n):
                m[i] = r[i] + y[i] * xd[i] * t
                w[i] = y[i] * _dloss(m[i], delta, True)
        new_obj = _objective(m, theta, lam, delta)
        rel = (obj - new_obj) / obj if obj > 0.0 else 0.0
        obj = new_obj
        if full:
            if rel < tol and kkt <= tol:
                return obj, it, 1, kkt
            if nnz_cap >= 0:
                cnt = 0
                for d in range(D):
                    if theta[d] != 0.0:
                        cnt += 1
                if cnt > nnz_cap:
                    return obj, it, 2, kkt
            full = False
        elif rel < tol:
            full = True
    return obj, it, 0, kkt


@numba.njit(**_JIT)
def _pair_members(rows, labels, l, mm):
    # data rows of clusters l and m in proposal order; l is labelled +1
    n = 0
    for i in range(rows.shape[0]):
        if labels[i] == l or labels[i] == mm:
            n += 1
    prow = np.empty(n, np.int64)
    y = np.empty(n)
    j = 0
    for i in range(rows.shape[0]):
        lab = labels[i]
        if lab == l or lab == mm:
            prow[j] = rows[i]
            y[j] = 1.0 if lab == l else -1.0
            j += 1
    return prow, y


@numba.njit(**_JIT)
def _screened_fit(x, prow, y, grad0, lam, lam_max, delta, max_iters, tol, theta, nnz_cap):
    """Fit one pair into ``theta`` (length D), screening features first.

    Only features passing the strong rule ``|grad0_d| >= 2 lam - lam_max``
    enter the solver; afterwards the loss gradient is checked on every
    feature and violators are added back until none remain, so the result
    is the solution of the full problem.  Screening is off for the plain
    hinge, whose gradient is not unique.  Returns (objective, status,
    sweeps) with the status codes of ``_cd_fit``.
    """
    D = x.shape[1]
    n = prow.shape[0]
    active = np.ones(D, np.bool_)
    thr = 2.0 * lam - lam_max
    if delta > 0.0 and thr > 0.0:
        for d in range(D):
            active[d] = abs(grad0[d]) >= thr
    for d in range(D):
        theta[d] = 0.0
    used = 0
    while True:
        nf = 0
        for d in range(D):
            if active[d]:
                nf += 1
        feats = np.empty(nf, np.int64)
        k = 0
        for d in range(D):
            if active[d]:
                feats[k] = d
                k += 1
        xt = np.empty((nf, n))
        for i in range(n):
            r = prow[i]
            for k in range(nf):
                xt[k, i] = x[r, feats[k]]
        th = np.empty(nf)
        for k in range(nf):
            th[k] = theta[feats[k]]
        budget = max_iters - used
        if budget < 1:
            return _objective_full(xt, y, th, lam, delta), 0, used
        obj, it, status, kkt = _cd_fit(xt, y, lam, delta, budget, tol, th, True, nnz_cap)
        used += it
        for k in range(nf):
            theta[feats[k]] = th[k]
        if status != 1 or nf == D:
            return obj, status, used
        grad = np.zeros(D)
        for i in range(n):
            u = 0.0
            for k in range(nf):
                if th[k] != 0.0:
                    u += xt[k, i] * th[k]
            w = _dloss(y[i] * u, delta, True) * y[i]
            if w == 0.0:
                continue
            r = prow[i]
            for d in range(D):
                grad[d] += w * x[r, d]
        added = False
        for d in range(D):
            if not active[d] and abs(grad[d]) - lam > tol:
                active[d] = True
                added = True
        if not added:
            return obj, 1, used


@numba.njit(**_JIT)
def _objective_full(xt, y, th, lam, delta):
    n = y.shape[0]
    m = np.zeros(n)
    for k in range(th.shape[0]):
        if th[k] != 0.0:
            for i in range(n):
                m[i] += xt[k, i] * th[k]
    for i in range(n):
        m[i] *= y[i]
    return _objective(m, th, lam, delta)


@numba.njit(**_JIT)
def _fit_pairs(x, rows, labels, k, pairs, lam, delta, max_iters, tol, normalize,
               eps, g_out, support_out, failed, nnz_budget=-1, mode=0):
    """Fit every listed pair of one proposal and accumulate into the outputs.

    Pairs the solver could not finish are flagged in ``failed`` and left
    out of the outputs.  Returns (n_zero, total nnz, capped flag).  With
    ``nnz_budget >= 0`` the loop stops, setting the flag, once the running
    nnz total is known to exceed the budget.  With ``mode`` 1 the L1 weight
    of a pair is ``lam * (n_l + n_m)``, with mode 2 it is
    ``lam * lambda_max``; mode 0 uses ``lam`` as is.
    """
    D = x.shape[1]
    sums = np.zeros((k, D))
    sizes = np.zeros(k)
    for i in range(rows.shape[0]):
        row = rows[i]
        lab = labels[i]
        sizes[lab] += 1.0
        for d in range(D):
            sums[lab, d] += x[row, d]
    theta = np.zeros(D)
    grad0 = np.empty(D)
    n_zero = 0
    nnz_total = 0
    for p in range(pairs.shape[0]):
        l = pairs[p, 0]
        mm = pairs[p, 1]
        lam_max = 0.0
        for d in range(D):
            grad0[d] = sums[l, d] - sums[mm, d]
            v = abs(grad0[d])
            if v > lam_max:
                lam_max = v
        lam_p = lam
        if mode == 1:
            lam_p = lam * (sizes[l] + sizes[mm])
        elif mode == 2:
            lam_p = lam * lam_max
        if lam_p >= lam_max:
            n_zero += 1
            continue
        prow, y = _pair_members(rows, labels, l, mm)
        cap = -1
        if nnz_budget >= 0:
            cap = nnz_budget - nnz_total
        obj, status, it = _screened_fit(x, prow, y, grad0, lam_p, lam_max, delta, max_iters,
                                        tol, theta, cap)
        if status == 2:
            return n_zero, nnz_budget + 1, True
        if status == 0:
            failed[p] = True
            continue
        if _norm(theta) == 0.0:
            n_zero += 1
            continue
        nnz_total += _accumulate(theta, normalize, eps, g_out, support_out)
        if nnz_budget >= 0 and nnz_total > nnz_budget:
            return n_zero, nnz_total, True
    return n_zero, nnz_total, False


@numba.njit(**_JIT)
def _norm(theta):
    s = 0.0
    for d in range(theta.shape[0]):
        s += theta[d] * theta[d]
    return math.sqrt(s)


@numba.njit(**_JIT)
def _accumulate(theta, normalize, eps, g_out, support_out):
    nrm = _norm(theta)
    if nrm == 0.0:
        return 0
    nnz = 0
    for d in range(theta.shape[0]):
        a = abs(theta[d])
        if a > eps:
            support_out[d] += 1
            nnz += 1
        if normalize:
            a /= nrm
        g_out[d] += a
    return nnz


def _qp_fit(xp, y, lam, delta):
    """Solve the pair problem as a convex QP with an interior-point method.

    With ``c = 1 + delta - u`` the smoothed hinge equals
    ``min s^2 / (4 delta) + t`` over ``s, t >= 0`` with ``s + t >= c``, so
    the problem becomes a QP in ``(p, q, s, t)`` where ``theta = p - q``.
    """
    import clarabel
    from scipy import sparse

    n, D = xp.shape
    yx = y[:, None] * xp
    ns = n if delta > 0 else 0
    nv = 2 * D + ns + n
    cost = np.r_[np.full(2 * D, lam), np.zeros(ns), np.ones(n)]
    pdiag = np.r_[np.zeros(2 * D), np.full(ns, 1.0 / (2.0 * delta) if delta > 0 else 0.0), np.zeros(n)]
    P = sparse.diags(pdiag).tocsc()
    blocks = [-yx, yx]
    if ns:
        blocks.append(-sparse.eye(n))
    blocks.append(-sparse.eye(n))
    margin = sparse.hstack([sparse.csc_matrix(b) for b in blocks])
    A = sparse.vstack([margin, -sparse.eye(nv)]).tocsc()
    b = np.r_[np.full(n, -(1.0 + delta)), np.zeros(nv)]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    sol = clarabel.DefaultSolver(P, cost, A, b, [clarabel.NonnegativeConeT(n + nv)], settings)
    res = sol.solve()
    if str(res.status) not in ("Solved", "AlmostSolved"):
        return None
    z = np.asarray(res.x)
    return z[:D] - z[D:2 * D]


def _rescue(x, prow, y, lam, delta, max_iters, tol):
    """Fallback for pairs coordinate descent cannot finish.

    The interior-point solution is rounded to exact zeros and polished by
    warm-started coordinate descent.  If polishing stalls too, the rounded
    solution is kept when its objective is within ``tol`` of the QP optimum.
    Returns ``(theta, objective)`` or ``None``.
    """
    xp = x[prow]
    theta = _qp_fit(xp, y, lam, delta)
    if theta is None:
        return None
    qp_obj = separator_objective(xp, y, theta, lam, delta)
    theta[np.abs(theta) <= 1e-7 * max(np.abs(theta).max(), 1e-300)] = 0.0
    warm = theta.copy()
    obj, _, status, _ = _cd_fit(np.ascontiguousarray(xp.T), y, lam, delta, max_iters, tol, warm, True)
    if status == 1:
        return warm, float(obj)
    obj = separator_objective(xp, y, theta, lam, delta)
    if obj <= qp_obj + tol * max(qp_obj, 1.0):
        return theta, obj
    return None


# ---------------------------------------------------------------------------
# public API


def _pair_rows(proposal: ClusterProposal, pair):
    l, m = (int(p) for p in pair)
    sizes = proposal.cluster_sizes()
    for c in (l, m):
        if c < 0 or c >= proposal.k_p or sizes[c] == 0:
            raise EmptyCluster(c)
    return l, m


def _as_array(m):
    return m.values if isinstance(m, DataMatrix) else np.asarray(m, float)


SCALES = ("global", "pair_size", "relative")


def pair_size(proposal: ClusterProposal, pair) -> int:
    sizes = proposal.cluster_sizes()
    return int(sizes[pair[0]] + sizes[pair[1]])


def pair_factor(x, proposal, pair, scale) -> float:
    """Multiplier turning a calibrated weight into the pair's L1 weight."""
    if scale == "global":
        return 1.0
    if scale == "pair_size":
        return float(pair_size(proposal, pair))
    if scale == "relative":
        lm = lambda_max(x, proposal, pair)
        return lm if lm > 0 else 1.0
    raise ValueError(f"scale must be one of {SCALES}")


def lambda_max(m, proposal: ClusterProposal, pair) -> float:
    """Smallest L1 weight at which the zero separator is optimal."""
    l, mm = _pair_rows(proposal, pair)
    x = _as_array(m)
    diff = x[proposal.members(l)].sum(axis=0) - x[proposal.members(mm)].sum(axis=0)
    return float(np.max(np.abs(diff)))


def fit_separator(m, proposal: ClusterProposal, pair, settings: SolverSettings) -> Separator:
    """Solve the pair problem; cluster ``pair[0]`` is labelled +1."""
    l, mm = _pair_rows(proposal, pair)
    x = np.ascontiguousarray(_as_array(m))
    prow, y = _pair_members(np.ascontiguousarray(proposal.row_indices),
                            np.ascontiguousarray(proposal.assignments), l, mm)
    grad0 = x[prow].T @ y
    lam_max = float(np.max(np.abs(grad0)))
    lam = float(settings.lam)
    theta = np.zeros(x.shape[1])
    max_iters = settings.sweeps(x.shape[1])
    delta = float(settings.huber_delta)
    if lam >= lam_max:
        obj, it, status = float(prow.size), 0, 1
    elif delta == 0:
        # coordinate descent can stall on the plain hinge; solve the LP
        obj, it, status = float(prow.size), 0, 0
    else:
        obj, status, it = _screened_fit(x, prow, y, grad0, lam, lam_max, delta, max_iters,
                                        float(settings.tol), theta, -1)
    if status != 1:
        rescued = _rescue(x, prow, y, lam, delta, max_iters, float(settings.tol))
        if rescued is None:
            raise NotConverged(max_iters, best=Separator(theta, (l, mm), float(obj),
                                                         Separator.count_nonzero(theta), int(it)))
        theta, obj = rescued
    return Separator(theta, (l, mm), float(obj), Separator.count_nonzero(theta), int(it))


def separator_objective(x, y, theta, lam, huber_delta):
    """Objective of ``theta`` on rows ``x`` with +-1 labels ``y`` (reference path)."""
    u = y * (np.asarray(x, float) @ np.asarray(theta, float))
    if huber_delta > 0:
        loss = np.where(u <= 1 - huber_delta, 1 - u,
                        np.where(u >= 1 + huber_delta, 0.0, (1 + huber_delta - u) ** 2 / (4 * huber_delta)))
    else:
        loss = np.maximum(0.0, 1 - u)
    return float(loss.sum() + lam * np.abs(theta).sum())


def loss_gradient(x, y, theta, huber_delta):
    """Gradient of the smoothed loss (no penalty) at ``theta``."""
    x = np.asarray(x, float)
    u = y * (x @ theta)
    if huber_delta > 0:
        d = np.where(u <= 1 - huber_delta, -1.0,
                     np.where(u >= 1 + huber_delta, 0.0, (u - 1 - huber_delta) / (2 * huber_delta)))
    else:
        d = np.where(u < 1, -1.0, 0.0)
    return x.T @ (y * d)


def all_pairs(k):
    return np.array(list(combinations(range(k), 2)), dtype=np.int64).reshape(-1, 2)


def fit_pairs(x, proposal: ClusterProposal, pairs, settings: SolverSettings,
              normalize=True, eps=SPARSITY_EPS, nnz_budget=None, scale="global"):
    """Batch-fit ``pairs`` of one proposal.

    Returns ``(g, support, n_zero, nnz_total)`` where ``g`` sums the absolute
    (optionally unit-normalized) separator components.  Raises
    :class:`NotConverged` if a pair cannot be solved.  With ``nnz_budget``
    the fit stops early once the nnz total is certain to exceed it; the
    returned total is then ``nnz_budget + 1`` and ``g`` is partial.

    ``scale`` sets each pair's L1 weight from ``settings.lam``: ``"global"``
    uses it unchanged, ``"pair_size"`` multiplies it by ``n_l + n_m`` and
    ``"relative"`` by the pair's :func:`lambda_max`.
    """
    x = np.ascontiguousarray(x, dtype=float)
    D = x.shape[1]
    g = np.zeros(D)
    support = np.zeros(D, dtype=np.int64)
    pairs = np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2)
    failed = np.zeros(len(pairs), dtype=bool)
    max_iters = settings.sweeps(D)
    budget = -1 if nnz_budget is None else int(nnz_budget)
    if settings.huber_delta == 0:
        failed[:] = True
        n_zero, nnz, capped = 0, 0, False
    else:
        n_zero, nnz, capped = _fit_pairs(
        x, np.ascontiguousarray(proposal.row_indices), np.ascontiguousarray(proposal.assignments),
            proposal.k_p, pairs, float(settings.lam), float(settings.huber_delta), max_iters,
            float(settings.tol), bool(normalize), float(eps), g, support, failed, budget,
            SCALES.index(scale))
    if capped:
        return g, support, int(n_zero), budget + 1
    for l, mm in pairs[failed]:
        lam = settings.lam * pair_factor(x, proposal, (l, mm), scale)
        sep = fit_separator(x, proposal, (l, mm), replace(settings, lam=lam))
        nnz += _accumulate(np.array(sep.theta), bool(normalize), float(eps), g, support)
        if not np.any(sep.theta):
            n_zero += 1
    if budget >= 0 and nnz > budget:
        nnz = budget + 1
    return g, support, int(n_zero), int(nnz)


def pilot_pairs(proposals, max_pairs, seed):
    """All (proposal index, l, m) triples, subsampled to at most ``max_pairs``."""
    triples = []
    for p, prop in enumerate(proposals):
        occ = prop.occupied()
        for a, b in combinations(occ, 2):
            triples.append((p, int(a), int(b)))
    triples = np.array(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) > max_pairs:
        pick = make_rng(child_seed(seed, "pilot-pairs")).choice(len(triples), max_pairs, replace=False)
        triples = triples[np.sort(pick)]
    return triples


def mean_nnz(x, proposals, triples, settings: SolverSettings, limit=None, scale="global"):
    """Mean separator support over pilot ``triples``.

    With ``limit`` the evaluation stops as soon as the mean is certain to
    exceed it and returns a lower bound just above ``limit``.
    """
    n = len(triples)
    budget = None if limit is None else int(math.floor(limit * n))
    total = 0
    for p in np.unique(triples[:, 0]):
        pairs = triples[triples[:, 0] == p, 1:]
        left = None if budget is None else budget - total
        _, _, _, nnz = fit_pairs(x, proposals[p], pairs, settings, nnz_budget=left, scale=scale)
        total += nnz
        if budget is not None and total > budget:
            break
    return total / n


def calibrate_lambda(m, pilot_proposals, target_nnz: float, settings: SolverSettings,
                     *, max_pairs=100, depth=20, seed=0, tolerance=0.25, extend=True,
                     scale="global", return_trace=False):
    """Choose the L1 weight so that pilot separators average ``target_nnz`` nonzeros.

    Bisection on ``log lam`` over ``[1e-4 * lam_bar, lam_bar]`` where
    ``lam_bar`` is the median ``lambda_max`` across pilot pairs.  Stops as
    soon as the mean support is within ``tolerance`` of the target;
    otherwise returns the evaluated value whose mean support came closest.

    With a ``scale`` other than ``"global"`` the search runs over the
    multiplier of :func:`fit_pairs` and ``lambda_max`` values are expressed
    in the same units.

    If the median itself is too dense and ``extend`` is set, the bracket
    becomes ``[lam_bar, max lambda_max]`` instead.

    Too-dense trial values are abandoned once the pilot mean is certain to
    exceed ``target_nnz + tolerance``, and the lower endpoint is only fitted
    if bisection never gets dense enough.  Neither shortcut changes the
    bisection path.
    """
    if target_nnz < 1:
        raise ValueError("target_nnz must be >= 1")
    proposals = list(pilot_proposals)
    if not proposals:
        raise ValueError("pilot set is empty")
    x = np.ascontiguousarray(_as_array(m))
    triples = pilot_pairs(proposals, max_pairs, seed)
    lmax = [lambda_max(x, proposals[p], (a, b)) / pair_factor(x, proposals[p], (a, b), scale)
            for p, a, b in triples]
    lam_bar = float(np.median(lmax))
    trace = []
    upper = target_nnz + tolerance

    def evaluate(log_lam):
        lam = math.exp(log_lam)
        s = SolverSettings(lam, settings.max_iters, settings.tol, settings.huber_delta)
        nnz = mean_nnz(x, proposals, triples, s, limit=upper, scale=scale)
        trace.append((lam, nnz))
        return nnz

    def finish(log_lam):
        lam_hat = math.exp(log_lam)
        return (lam_hat, trace) if return_trace else lam_hat

    if lam_bar <= 0:
        return (0.0, trace) if return_trace else 0.0
    lo, hi = math.log(1e-4 * lam_bar), math.log(lam_bar)
    nnz = evaluate(hi)
    best = (hi, nnz)
    if abs(nnz - target_nnz) <= tolerance:
        return finish(hi)
    if nnz > target_nnz:
        top = float(np.max(lmax))
        if not extend or top <= lam_bar:
            return finish(hi)
        # target lies above the median: widen the bracket to the largest
        # lambda_max, where every pilot separator is zero
        lo, hi = hi, math.log(top)
        if target_nnz < nnz - target_nnz:
            best = (hi, 0.0)
        trace.append((top, 0.0))
        lo_tried = True
    else:
        lo_tried = False
    for _ in range(depth):
        mid = 0.5 * (lo + hi)
        nnz = evaluate(mid)
        if abs(nnz - target_nnz) < abs(best[1] - target_nnz):
            best = (mid, nnz)
        if abs(nnz - target_nnz) <= tolerance:
            return finish(mid)
        if nnz > target_nnz:
            lo = mid
            lo_tried = True
        else:
            hi = mid
    if not lo_tried:
        # never dense enough: the lower endpoint may be closest
        end = math.log(1e-4 * lam_bar)
        nnz = evaluate(end)
        if abs(nnz - target_nnz) < abs(best[1] - target_nnz):
            best = (end, nnz)
    return finish(best[0])
