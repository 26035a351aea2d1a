# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a twin in ``_pykernels`` with the same signature and
the same floating-point operation order.  All randomness arrives as
pre-drawn arrays so the two backends consume identical inputs.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, M_PI

cnp.import_array()


cdef inline Py_ssize_t _search(const double[::1] cum, double u) noexcept nogil:
    cdef Py_ssize_t j = 0, last = cum.shape[0] - 1
    while j < last and u >= cum[j]:
        j += 1
    return j


def sample_chain(const double[:, ::1] cumP, const double[::1] cum0, const double[::1] u):
    cdef Py_ssize_t n = u.shape[0], k, x, j, last = cumP.shape[1] - 1
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] path = out
    with nogil:
        x = _search(cum0, u[0])
        path[0] = x
        for k in range(1, n):
            j = 0
            while j < last and u[k] >= cumP[x, j]:
                j += 1
            x = j
            path[k] = x
    return out


def hmm_filter(const double[:, ::1] P, const double[:, ::1] B, const double[::1] pi0,
               const long long[::1] ys):
    """Run the normalised forward recursion; returns (beliefs, sigmas, fail_index).

    ``fail_index`` is -1 on success, otherwise the step whose normaliser fell
    below 1e-300 (rows from that step on are left as zeros).
    """
    cdef Py_ssize_t X = P.shape[0], n = ys.shape[0], k, i, j
    cdef double s, acc
    cdef long long y
    beliefs = np.zeros((n + 1, X))
    sig = np.zeros(n)
    cdef double[:, ::1] pb = beliefs
    cdef double[::1] ps = sig
    cdef Py_ssize_t fail = -1
    with nogil:
        for i in range(X):
            pb[0, i] = pi0[i]
        for k in range(n):
            y = ys[k]
            s = 0.0
            for j in range(X):
                acc = 0.0
                for i in range(X):
                    acc = acc + pb[k, i] * P[i, j]
                acc = acc * B[j, y]
                pb[k + 1, j] = acc
                s = s + acc
            if not (s > 1e-300):
                fail = k
                for j in range(X):
                    pb[k + 1, j] = 0.0
                break
            ps[k] = s
            for j in range(X):
                pb[k + 1, j] = pb[k + 1, j] / s
    return beliefs, sig, fail


def ruler_chain(long long theta0, const long long[::1] ks, const double[:, ::1] m,
                const double[::1] u, const double[::1] ut, int antithetic):
    """Search-ruler moves; candidate at step k is (theta + 1 + ks[k]) mod S."""
    cdef Py_ssize_t n = ks.shape[0], S = m.shape[1], k
    cdef long long th = theta0, cand
    cdef double lc, lt, mc, mt
    out = np.empty(n + 1, dtype=np.int64)
    mv = np.zeros(n, dtype=np.int8)
    cdef long long[::1] path = out
    cdef signed char[::1] moved = mv
    with nogil:
        path[0] = th
        for k in range(n):
            cand = (th + 1 + ks[k]) % S
            mc = m[k, th]
            mt = m[k, cand]
            lc = 1.0 if mc - u[k] > 0.0 else 0.0
            lt = 1.0 if mt - ut[k] > 0.0 else 0.0
            if antithetic:
                lc = 0.5 * (lc + (1.0 if mc - (1.0 - u[k]) > 0.0 else 0.0))
                lt = 0.5 * (lt + (1.0 if mt - (1.0 - ut[k]) > 0.0 else 0.0))
            if lt < lc:
                th = cand
                moved[k] = 1
            path[k + 1] = th
    return out, mv


def regret_matching(const double[:, ::1] rewards, long long U, const long long[::1] u0,
                    double eps, double mu, const double[:, ::1] draws):
    """Multi-player regret matching.

    ``rewards[l, J]`` is player l's reward at joint index J (player 0 most
    significant digit, base U).  ``draws[n, l]`` are the uniforms used to pick
    actions.  Returns (joint, max_regret, ce_violation, R, z).
    """
    cdef Py_ssize_t L = rewards.shape[0], J = rewards.shape[1], n = draws.shape[0]
    cdef Py_ssize_t k, l, i, j, a, jt, base, cur
    cdef double gain, mr, cv, acc, p, r
    Rarr = np.zeros((L, U, U))
    Garr = np.zeros((L, U, U))
    zarr = np.zeros(J)
    joint_out = np.empty(n, dtype=np.int64)
    mr_out = np.empty(n)
    cv_out = np.empty(n)
    act_arr = np.array(u0, dtype=np.int64)
    stride_arr = np.empty(L, dtype=np.int64)
    cdef double[:, :, ::1] R = Rarr
    cdef double[:, :, ::1] G = Garr
    cdef double[::1] z = zarr
    cdef long long[::1] jo = joint_out
    cdef double[::1] mro = mr_out
    cdef double[::1] cvo = cv_out
    cdef long long[::1] act = act_arr
    cdef long long[::1] stride = stride_arr
    with nogil:
        stride[L - 1] = 1
        for l in range(L - 2, -1, -1):
            stride[l] = stride[l + 1] * U
        cur = 0
        for l in range(L):
            cur = cur + act[l] * stride[l]
        z[cur] = 1.0
        # deviation gaps of z0 = e_{u0}
        for l in range(L):
            i = act[l]
            base = cur - i * stride[l]
            for j in range(U):
                G[l, i, j] = rewards[l, base + j * stride[l]] - rewards[l, cur]
        for k in range(n):
            # choose actions from R_n and the previous action
            for l in range(L):
                i = act[l]
                acc = 0.0
                a = i
                for j in range(U):
                    if j == i:
                        continue
                    r = R[l, i, j]
                    p = r / mu if r > 0.0 else 0.0
                    acc = acc + p
                    if a == i and draws[k, l] < acc:
                        a = j
                act[l] = a
            cur = 0
            for l in range(L):
                cur = cur + act[l] * stride[l]
            jo[k] = cur
            # regret and gap updates share the same per-step increment
            mr = 0.0
            cv = 0.0
            for l in range(L):
                base = cur - act[l] * stride[l]
                for i in range(U):
                    for j in range(U):
                        if i == act[l]:
                            gain = rewards[l, base + j * stride[l]] - rewards[l, cur]
                        else:
                            gain = 0.0
                        R[l, i, j] = R[l, i, j] + eps * (gain - R[l, i, j])
                        G[l, i, j] = G[l, i, j] + eps * (gain - G[l, i, j])
                        if R[l, i, j] > mr:
                            mr = R[l, i, j]
                        if G[l, i, j] > cv:
                            cv = G[l, i, j]
            for jt in range(J):
                z[jt] = z[jt] - eps * z[jt]
            z[cur] = z[cur] + eps
            mro[k] = mr
            cvo[k] = cv
    return joint_out, mr_out, cv_out, Rarr, zarr


def recem_gaussian(const double[:, ::1] P, const double[::1] pi0, const double[::1] g0,
                   const double[::1] info0, const double[::1] ys, double sigma, double eps,
                   double delta, long long batch, double lo, double hi, int forgetting):
    """Recursive EM for Gaussian state levels with a diagonal information matrix.

    Returns (levels (n+1, X), prediction errors, log-likelihood increments,
    floor events, fail index).
    """
    cdef Py_ssize_t X = P.shape[0], n = ys.shape[0], k, i, j
    cdef double y, pe, m, s, acc, d, H, s2 = sigma * sigma
    cdef double lnorm = log(sqrt(2.0 * M_PI) * sigma)
    cdef long long floors = 0
    cdef Py_ssize_t fail = -1
    gs_arr = np.zeros((n + 1, X))
    pe_arr = np.zeros(n)
    ll_arr = np.zeros(n)
    cdef double[:, ::1] gs = gs_arr
    cdef double[::1] pes = pe_arr, lls = ll_arr
    cdef double[::1] pi = np.array(pi0, dtype=float)
    cdef double[::1] g = np.array(g0, dtype=float)
    cdef double[::1] info = np.array(info0, dtype=float)
    cdef double[::1] gbar = np.array(g0, dtype=float)
    cdef double[::1] pred = np.zeros(X)
    cdef double[::1] lw = np.zeros(X)
    with nogil:
        for i in range(X):
            gs[0, i] = g[i]
        for k in range(n):
            y = ys[k]
            if k % batch == 0:
                for i in range(X):
                    gbar[i] = g[i]
            pe = y
            m = -1e308
            for j in range(X):
                acc = 0.0
                for i in range(X):
                    acc = acc + pi[i] * P[i, j]
                pred[j] = acc
                pe = pe - g[j] * acc
                d = y - gbar[j]
                lw[j] = -(d * d) / (2.0 * s2)
                if pred[j] > 0.0 and lw[j] > m:
                    m = lw[j]
            s = 0.0
            for j in range(X):
                lw[j] = pred[j] * exp(lw[j] - m)
                s = s + lw[j]
            if not (s > 1e-300):
                fail = k
                break
            pes[k] = pe
            lls[k] = log(s) + m - lnorm
            for i in range(X):
                pi[i] = lw[i] / s
                H = pi[i] / s2
                if forgetting:
                    info[i] = (1.0 - eps) * info[i] + eps * H
                else:
                    info[i] = info[i] + eps * H
                if info[i] < delta:
                    info[i] = delta
                    floors += 1
                d = pi[i] * (y - g[i]) / s2 / info[i]
                if forgetting:
                    d = eps * d
                g[i] = g[i] + d
                if g[i] < lo:
                    g[i] = lo
                elif g[i] > hi:
                    g[i] = hi
                gs[k + 1, i] = g[i]
    return gs_arr, pe_arr, ll_arr, floors, fail
