"""Independent reference computations used by the tests.

Nothing here imports the package under test: each oracle is written from
the textbook formula, by brute force, or by numerical integration.
"""

from __future__ import annotations

from collections import deque

import mpmath
import numpy as np
from scipy import integrate, linalg, special, stats
from scipy.optimize import minimize


# --- mixture models ---------------------------------------------------------------

def nw_log_evidence(x, m0, lambda0, W0, nu0) -> float:
    """Exact log p(X) for one Gaussian with a Normal-Wishart prior on
    (mu, Lambda): mu | Lambda ~ N(m0, (lambda0 Lambda)^-1), Lambda ~ W(W0, nu0)."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    xbar = x.mean(axis=0)
    S = (x - xbar).T @ (x - xbar)
    lam_n = lambda0 + n
    nu_n = nu0 + n
    dm = xbar - m0
    Winv_n = linalg.inv(W0) + S + (lambda0 * n / lam_n) * np.outer(dm, dm)
    logdet_W0 = np.linalg.slogdet(W0)[1]
    logdet_Wn = -np.linalg.slogdet(Winv_n)[1]
    return float(-0.5 * n * d * np.log(np.pi)
                 + special.multigammaln(0.5 * nu_n, d) - special.multigammaln(0.5 * nu0, d)
                 + 0.5 * nu_n * logdet_Wn - 0.5 * nu0 * logdet_W0
                 + 0.5 * d * (np.log(lambda0) - np.log(lam_n)))


def bishop_m_step(r, x, alpha0, lambda0, m0, W0, nu0):
    """Conjugate updates written out term by term, one component at a time."""
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    k = r.shape[1]
    out = {"alpha": [], "lambda": [], "m": [], "W": [], "nu": []}
    for j in range(k):
        nk = sum(r[n, j] for n in range(x.shape[0]))
        xbar = sum(r[n, j] * x[n] for n in range(x.shape[0])) / nk
        Sk = sum(r[n, j] * np.outer(x[n] - xbar, x[n] - xbar) for n in range(x.shape[0])) / nk
        lam = lambda0[j] + nk
        out["alpha"].append(alpha0[j] + nk)
        out["lambda"].append(lam)
        out["nu"].append(nu0 + nk)
        out["m"].append((lambda0[j] * m0[j] + nk * xbar) / lam)
        winv = (np.linalg.inv(W0) + nk * Sk
                + (lambda0[j] * nk / (lambda0[j] + nk)) * np.outer(xbar - m0[j], xbar - m0[j]))
        out["W"].append(np.linalg.inv(winv))
    return {key: np.array(v) for key, v in out.items()}


def responsibilities_mp(x, alpha, lam, m, W, nu, dps: int = 50) -> np.ndarray:
    """Responsibilities from the unnormalised log formula, exponentiated and
    normalised in extended precision."""
    mpmath.mp.dps = dps
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    k = len(alpha)
    a_sum = mpmath.mpf(sum(float(a) for a in alpha))
    logs = []
    for i in range(n):
        row = []
        for j in range(k):
            e_log_pi = mpmath.digamma(mpmath.mpf(float(alpha[j]))) - mpmath.digamma(a_sum)
            e_log_det = sum(mpmath.digamma((mpmath.mpf(float(nu[j])) + 1 - t) / 2) for t in range(1, d + 1))
            e_log_det += d * mpmath.log(2) + mpmath.log(mpmath.det(mpmath.matrix(W[j].tolist())))
            diff = mpmath.matrix((x[i] - m[j]).tolist())
            maha = (diff.T * mpmath.matrix(W[j].tolist()) * diff)[0]
            row.append(e_log_pi + e_log_det / 2 - mpmath.mpf(d) / (2 * mpmath.mpf(float(lam[j])))
                       - mpmath.mpf(float(nu[j])) / 2 * maha - mpmath.mpf(d) / 2 * mpmath.log(2 * mpmath.pi))
        logs.append(row)
    out = np.empty((n, k))
    for i in range(n):
        ex = [mpmath.exp(v) for v in logs[i]]
        tot = sum(ex)
        out[i] = [float(e / tot) for e in ex]
    return out


def em_gmm(x, means, n_iter: int = 500):
    """Plain maximum-likelihood EM for a full-covariance mixture."""
    x = np.asarray(x, dtype=float)
    means = np.array(means, dtype=float)
    k, d = means.shape
    covs = np.array([np.cov(x.T) for _ in range(k)])
    w = np.full(k, 1.0 / k)
    for _ in range(n_iter):
        logp = np.column_stack([np.log(w[j]) + stats.multivariate_normal(means[j], covs[j]).logpdf(x)
                                for j in range(k)])
        r = np.exp(logp - special.logsumexp(logp, axis=1, keepdims=True))
        nk = r.sum(axis=0)
        w = nk / nk.sum()
        means = (r.T @ x) / nk[:, None]
        covs = np.array([((x - means[j]) * r[:, [j]]).T @ (x - means[j]) / nk[j] for j in range(k)])
    return means, covs, w, r.argmax(axis=1)


# --- initialisers -----------------------------------------------------------------

def dbscan_reachability(x, eps: float, min_pts: int):
    """O(N^2) DBSCAN: the full pairwise distance table, a core set, connected
    components of the core graph, then border attachment.  Returns the
    clusters as a set of frozensets (core members only) plus the noise set
    and, per border point, the set of clusters it could legally join."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))
    adj = dist <= eps
    core = adj.sum(axis=1) >= min_pts
    comp = -np.ones(n, dtype=int)
    c = 0
    for i in range(n):
        if not core[i] or comp[i] >= 0:
            continue
        comp[i] = c
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in np.flatnonzero(adj[p] & core):
                if comp[q] < 0:
                    comp[q] = c
                    queue.append(q)
        c += 1
    core_clusters = {frozenset(np.flatnonzero(comp == j).tolist()) for j in range(c)}
    border_options = {}
    noise = set()
    for i in range(n):
        if core[i]:
            continue
        options = {int(comp[q]) for q in np.flatnonzero(adj[i] & core)}
        if options:
            border_options[i] = {frozenset(np.flatnonzero(comp == o).tolist()) for o in options}
        else:
            noise.add(i)
    return core_clusters, noise, border_options


def lloyd_restarts(x, k: int, restarts: int = 100, seed: int = 0, max_iter: int = 300) -> float:
    """Best within-cluster sum of squares over random-restart Lloyd runs,
    each seeded with k distinct data points drawn uniformly."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(restarts):
        c = x[rng.choice(x.shape[0], size=k, replace=False)].copy()
        for _ in range(max_iter):
            lab = np.argmin(((x[:, None, :] - c[None]) ** 2).sum(axis=2), axis=1)
            new = np.array([x[lab == j].mean(axis=0) if np.any(lab == j) else c[j] for j in range(k)])
            if np.allclose(new, c):
                break
            c = new
        lab = np.argmin(((x[:, None, :] - c[None]) ** 2).sum(axis=2), axis=1)
        wss = sum(((x[lab == j] - x[lab == j].mean(axis=0)) ** 2).sum() for j in range(k) if np.any(lab == j))
        best = min(best, wss)
    return float(best)


def same_partition(a, b) -> bool:
    """True when two label vectors describe the same partition."""
    a, b = np.asarray(a), np.asarray(b)
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


# --- regressions ------------------------------------------------------------------

def nig_posterior_mean(X, y, mu0, V0, a0, b0):
    """Closed-form Normal-Inverse-Gamma posterior for y = X beta + e,
    beta | s2 ~ N(mu0, s2 V0), s2 ~ InvGamma(a0, b0)."""
    V0_inv = np.linalg.inv(V0)
    Vn = np.linalg.inv(V0_inv + X.T @ X)
    mun = Vn @ (V0_inv @ mu0 + X.T @ y)
    an = a0 + 0.5 * len(y)
    bn = b0 + 0.5 * (y @ y + mu0 @ V0_inv @ mu0 - mun @ np.linalg.inv(Vn) @ mun)
    return mun, Vn, an, bn


def independent_prior_posterior_mean(X, y, mu, Sigma, c, d):
    """Exact posterior mean of beta under beta ~ N(mu, Sigma) independent of
    tau2 ~ InvGamma(c, d): integrate the conditional Gaussian mean over the
    marginal posterior of tau2 on a log grid."""
    n = len(y)
    Sinv = np.linalg.inv(Sigma)
    log_t = np.linspace(-12, 8, 4001)
    logw = np.empty_like(log_t)
    means = np.empty((log_t.size, X.shape[1]))
    for i, lt in enumerate(log_t):
        t2 = np.exp(lt)
        marg_cov = X @ Sigma @ X.T + t2 * np.eye(n)
        logw[i] = (stats.multivariate_normal(X @ mu, marg_cov).logpdf(y)
                   + stats.invgamma(c, scale=d).logpdf(t2) + lt)
        prec = Sinv + X.T @ X / t2
        means[i] = np.linalg.solve(prec, Sinv @ mu + X.T @ y / t2)
    w = np.exp(logw - logw.max())
    return (w[:, None] * means).sum(axis=0) / w.sum()


def logit_posterior_mean(X, y, m0, S0, half_width: float = 8.0):
    """Posterior mean of a 2-coefficient Bayesian logistic regression by
    adaptive 2-D quadrature of the exact log posterior."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    S0_inv = np.linalg.inv(S0)

    def logpost(b):
        eta = X @ b
        return float(np.sum(y * special.log_expit(eta) + (1 - y) * special.log_expit(-eta))
                     - 0.5 * (b - m0) @ S0_inv @ (b - m0))

    # centre the integration box on the mode
    mode = minimize(lambda b: -logpost(b), np.zeros(2), method="BFGS").x
    shift = logpost(mode)
    lo, hi = mode - half_width, mode + half_width

    def f(b1, b0, power):
        b = np.array([b0, b1])
        return np.exp(logpost(b) - shift) * (1.0 if power is None else b[power])

    opts = {"epsabs": 1e-10, "epsrel": 1e-8}
    z = integrate.dblquad(f, lo[0], hi[0], lo[1], hi[1], args=(None,), **opts)[0]
    e0 = integrate.dblquad(f, lo[0], hi[0], lo[1], hi[1], args=(0,), **opts)[0]
    e1 = integrate.dblquad(f, lo[0], hi[0], lo[1], hi[1], args=(1,), **opts)[0]
    return np.array([e0 / z, e1 / z]), mode
