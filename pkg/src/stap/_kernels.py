"""Compiled inner loops of the blocked Gibbs sampler.

Random draws never happen inside the jitted code; backward sampling consumes
uniforms generated by the caller so runs stay bit-reproducible for a given
seed regardless of compilation.
"""

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def forward_filter(pi, log_pi, lik, logE):
    """Scaled forward messages for an HMM whose state at step 0 follows
    row 0 of ``pi`` (the chain is anchored at state 0 before the data).

    The recursion runs in scaled linear space (lik rows are the emission
    likelihoods scaled to a finite maximum); a step whose message underflows
    to zero is redone in log space from logE, which keeps the fast path cheap
    while surviving the huge likelihood spreads of early sweeps.

    Returns (alpha, status); status is -1 on success, otherwise the index of
    the step whose message vanished even in log space.
    """
    n, L = lik.shape
    alpha = np.empty((n, L))
    a = pi[0] * lik[0]
    s = a.sum()
    if s <= 0.0 or not np.isfinite(s):
        m = NEG_INF
        for k in range(L):
            lv = log_pi[0, k] + logE[0, k]
            if lv > m:
                m = lv
        if not np.isfinite(m):
            return alpha, 0
        s = 0.0
        for k in range(L):
            a[k] = np.exp(log_pi[0, k] + logE[0, k] - m)
            s += a[k]
    a /= s
    alpha[0] = a

    la = np.empty(L)
    for i in range(1, n):
        nxt = np.dot(a, pi) * lik[i]
        s = nxt.sum()
        if s <= 0.0 or not np.isfinite(s):
            # log-space rescue of this single step
            for j in range(L):
                la[j] = np.log(a[j]) if a[j] > 0.0 else NEG_INF
            m = NEG_INF
            for k in range(L):
                best = NEG_INF
                for j in range(L):
                    lv = la[j] + log_pi[j, k]
                    if lv > best:
                        best = lv
                if np.isfinite(best):
                    acc = 0.0
                    for j in range(L):
                        lv = la[j] + log_pi[j, k] - best
                        if lv > -745.0:
                            acc += np.exp(lv)
                    nxt[k] = best + np.log(acc) + logE[i, k]
                else:
                    nxt[k] = NEG_INF
                if nxt[k] > m:
                    m = nxt[k]
            if not np.isfinite(m):
                return alpha, i
            s = 0.0
            for k in range(L):
                nxt[k] = np.exp(nxt[k] - m) if np.isfinite(nxt[k]) else 0.0
                s += nxt[k]
            if s <= 0.0 or not np.isfinite(s):
                return alpha, i
        a = nxt / s
        alpha[i] = a
    return alpha, -1


@njit(cache=True)
def backward_sample(pi, log_pi, alpha, u):
    """Joint draw of the state sequence given forward messages.

    u is a vector of N uniforms; element i resolves the draw at step i.
    Returns (z, status) with status as in forward_filter.
    """
    n, L = alpha.shape
    z = np.empty(n, dtype=np.int64)
    w = np.empty(L)
    acc = 0.0
    target = u[n - 1]
    pick = L - 1
    for k in range(L):
        acc += alpha[n - 1, k]
        if target <= acc:
            pick = k
            break
    z[n - 1] = pick
    for i in range(n - 2, -1, -1):
        nxt = z[i + 1]
        tot = 0.0
        for k in range(L):
            w[k] = alpha[i, k] * pi[k, nxt]
            tot += w[k]
        if tot <= 0.0 or not np.isfinite(tot):
            # log-space rescue
            m = NEG_INF
            for k in range(L):
                lv = (np.log(alpha[i, k]) if alpha[i, k] > 0.0 else NEG_INF) + log_pi[k, nxt]
                w[k] = lv
                if lv > m:
                    m = lv
            if not np.isfinite(m):
                return z, i
            tot = 0.0
            for k in range(L):
                w[k] = np.exp(w[k] - m) if np.isfinite(w[k]) else 0.0
                tot += w[k]
        acc = 0.0
        target = u[i] * tot
        pick = L - 1
        for k in range(L):
            acc += w[k]
            if target <= acc:
                pick = k
                break
        z[i] = pick
    return z, -1
