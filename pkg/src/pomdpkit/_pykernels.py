"""Pure-Python twins of the compiled kernels (same signatures, same op order)."""
import numpy as np


def sample_chain(cumP, cum0, u):
    cumP = np.asarray(cumP)
    n = len(u)
    last = cumP.shape[1] - 1
    path = np.empty(n, dtype=np.int64)
    rows = cumP.tolist()
    uu = np.asarray(u).tolist()
    c0 = np.asarray(cum0).tolist()
    x = 0
    while x < last and uu[0] >= c0[x]:
        x += 1
    out = [x]
    for k in range(1, n):
        row = rows[x]
        j = 0
        uk = uu[k]
        while j < last and uk >= row[j]:
            j += 1
        x = j
        out.append(x)
    path[:] = out
    return path


def hmm_filter(P, B, pi0, ys):
    P = np.asarray(P)
    B = np.asarray(B)
    X = P.shape[0]
    n = len(ys)
    beliefs = np.zeros((n + 1, X))
    sig = np.zeros(n)
    Pl = P.tolist()
    Bl = B.tolist()
    cur = [float(v) for v in pi0]
    beliefs[0] = cur
    for k in range(n):
        y = int(ys[k])
        nxt = []
        s = 0.0
        for j in range(X):
            acc = 0.0
            for i in range(X):
                acc = acc + cur[i] * Pl[i][j]
            acc = acc * Bl[j][y]
            nxt.append(acc)
            s = s + acc
        if not (s > 1e-300):
            return beliefs, sig, k
        sig[k] = s
        cur = [v / s for v in nxt]
        beliefs[k + 1] = cur
    return beliefs, sig, -1


def ruler_chain(theta0, ks, m, u, ut, antithetic):
    m = np.asarray(m)
    n = len(ks)
    S = m.shape[1]
    path = np.empty(n + 1, dtype=np.int64)
    moved = np.zeros(n, dtype=np.int8)
    th = int(theta0)
    path[0] = th
    ksl = np.asarray(ks).tolist()
    ul = np.asarray(u).tolist()
    utl = np.asarray(ut).tolist()
    for k in range(n):
        cand = (th + 1 + ksl[k]) % S
        mc = m[k, th]
        mt = m[k, cand]
        lc = 1.0 if mc - ul[k] > 0.0 else 0.0
        lt = 1.0 if mt - utl[k] > 0.0 else 0.0
        if antithetic:
            lc = 0.5 * (lc + (1.0 if mc - (1.0 - ul[k]) > 0.0 else 0.0))
            lt = 0.5 * (lt + (1.0 if mt - (1.0 - utl[k]) > 0.0 else 0.0))
        if lt < lc:
            th = cand
            moved[k] = 1
        path[k + 1] = th
    return path, moved


def regret_matching(rewards, U, u0, eps, mu, draws):
    rewards = np.asarray(rewards, dtype=float)
    L, J = rewards.shape
    n = draws.shape[0]
    U = int(U)
    R = np.zeros((L, U, U))
    G = np.zeros((L, U, U))
    z = np.zeros(J)
    joint = np.empty(n, dtype=np.int64)
    mr_out = np.empty(n)
    cv_out = np.empty(n)
    act = [int(a) for a in u0]
    stride = [U ** (L - 1 - l) for l in range(L)]
    rw = rewards.tolist()
    dr = np.asarray(draws).tolist()
    Rl = R.tolist()
    Gl = G.tolist()
    cur = sum(a * s for a, s in zip(act, stride))
    z[cur] = 1.0
    for l in range(L):
        i = act[l]
        base = cur - i * stride[l]
        for j in range(U):
            Gl[l][i][j] = rw[l][base + j * stride[l]] - rw[l][cur]
    for k in range(n):
        for l in range(L):
            i = act[l]
            acc = 0.0
            a = i
            row = Rl[l][i]
            for j in range(U):
                if j == i:
                    continue
                r = row[j]
                p = r / mu if r > 0.0 else 0.0
                acc = acc + p
                if a == i and dr[k][l] < acc:
                    a = j
            act[l] = a
        cur = 0
        for l in range(L):
            cur = cur + act[l] * stride[l]
        joint[k] = cur
        mr = 0.0
        cv = 0.0
        for l in range(L):
            base = cur - act[l] * stride[l]
            rl = rw[l]
            for i in range(U):
                Ri = Rl[l][i]
                Gi = Gl[l][i]
                for j in range(U):
                    gain = rl[base + j * stride[l]] - rl[cur] if i == act[l] else 0.0
                    Ri[j] = Ri[j] + eps * (gain - Ri[j])
                    Gi[j] = Gi[j] + eps * (gain - Gi[j])
                    if Ri[j] > mr:
                        mr = Ri[j]
                    if Gi[j] > cv:
                        cv = Gi[j]
        z -= eps * z
        z[cur] += eps
        mr_out[k] = mr
        cv_out[k] = cv
    return joint, mr_out, cv_out, np.array(Rl), z


def recem_gaussian(P, pi0, g0, info0, ys, sigma, eps, delta, batch, lo, hi, forgetting):
    from math import exp, log, pi as PI, sqrt
    Pl = np.asarray(P, dtype=float).tolist()
    X = len(Pl)
    yl = np.asarray(ys, dtype=float).tolist()
    n = len(yl)
    s2 = sigma * sigma
    lnorm = log(sqrt(2.0 * PI) * sigma)
    gs = np.zeros((n + 1, X))
    pes = np.zeros(n)
    lls = np.zeros(n)
    pi = [float(v) for v in pi0]
    g = [float(v) for v in g0]
    info = [float(v) for v in info0]
    gbar = g[:]
    pred = [0.0] * X
    lw = [0.0] * X
    floors = 0
    fail = -1
    gs[0] = g
    rows = []
    for k in range(n):
        y = yl[k]
        if k % batch == 0:
            gbar = g[:]
        pe = y
        m = -1e308
        for j in range(X):
            acc = 0.0
            for i in range(X):
                acc = acc + pi[i] * Pl[i][j]
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
        rows.append(g[:])
    if rows:
        gs[1:len(rows) + 1] = rows
    return gs, pes, lls, floors, fail
