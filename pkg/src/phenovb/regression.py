"""Variational Bayesian regressions used downstream of the latent-class fit.

* Logistic regression with a Gaussian prior, fitted by CAVI on the
  Jaakkola-Jordan quadratic bound of the logistic likelihood.
* Linear regression with a Gaussian coefficient prior and an
  Inverse-Gamma noise-variance prior, fitted by mean-field CAVI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import digamma, expit, gammaln, log_expit

from .trace import ElboTrace, StopReason

DEFAULT_DELTA = 1e-8
DEFAULT_MAX_ITERS = 1000


def _spd(a: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    try:
        return linalg.cho_factor(a, lower=True)
    except linalg.LinAlgError:
        raise ValueError(f"{name} must be symmetric positive definite") from None


def _spd_inv(a: np.ndarray, name: str) -> np.ndarray:
    inv = linalg.cho_solve(_spd(a, name), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def _logdet(a: np.ndarray) -> float:
    c, _ = _spd(a, "matrix")
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(c)))))


def gaussian_kl(m: np.ndarray, S: np.ndarray, m0: np.ndarray, S0: np.ndarray) -> float:
    """KL( N(m, S) || N(m0, S0) )."""
    p = m.size
    S0_inv = _spd_inv(S0, "prior covariance")
    dm = m - m0
    return 0.5 * (float(np.sum(S0_inv * S)) + float(dm @ S0_inv @ dm) - p
                  + _logdet(S0) - _logdet(S))


def _design(X, y, n_cols: int):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, n_cols) if X.size else np.empty((0, n_cols))
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != n_cols:
        raise ValueError(f"design matrix must have {n_cols} columns, got shape {X.shape}")
    if X.shape[0] != y.size:
        raise ValueError(f"design has {X.shape[0]} rows but response has {y.size}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite entries")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite entries")
    return X, y


def _iterate(step, elbo, delta, max_iters):
    values = []
    reason = StopReason.MAX_ITERS
    for _ in range(max_iters):
        step()
        values.append(elbo())
        if len(values) > 1 and abs(values[-1] - values[-2]) < delta:
            reason = StopReason.DELTA_THRESHOLD
            break
    return ElboTrace(tuple(values), reason)


# --- logistic regression ----------------------------------------------------------

@dataclass(frozen=True)
class LogitPrior:
    m0: np.ndarray
    S0: np.ndarray

    def __post_init__(self):
        m0 = np.atleast_1d(np.asarray(self.m0, dtype=float))
        S0 = np.atleast_2d(np.asarray(self.S0, dtype=float))
        if S0.shape != (m0.size, m0.size):
            raise ValueError(f"S0 must be {m0.size} x {m0.size}, got {S0.shape}")
        _spd(S0, "S0")
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "S0", S0)

    @property
    def n_coef(self) -> int:
        return self.m0.size

    @classmethod
    def isotropic(cls, p: int, variance: float = 10.0, mean=0.0) -> "LogitPrior":
        return cls(np.broadcast_to(np.asarray(mean, dtype=float), (p,)).copy(), variance * np.eye(p))


@dataclass(frozen=True)
class LogitFit:
    m: np.ndarray
    S: np.ndarray
    xi: np.ndarray
    trace: ElboTrace


def jj_lambda(xi: np.ndarray) -> np.ndarray:
    """tanh(xi / 2) / (4 xi), with the limit 1/8 at xi = 0."""
    xi = np.abs(np.asarray(xi, dtype=float))
    out = np.full(xi.shape, 0.125)
    nz = xi > 1e-6
    out[nz] = np.tanh(0.5 * xi[nz]) / (4.0 * xi[nz])
    small = ~nz
    # series: 1/8 - xi^2/96
    out[small] = 0.125 - xi[small] ** 2 / 96.0
    return out


def _quad_forms(X, A):
    """Row-wise x_i^T A x_i."""
    return np.sum((X @ A) * X, axis=1)


def _optimal_xi(X, m, S):
    return np.sqrt(np.maximum(_quad_forms(X, S + np.outer(m, m)), 0.0))


def logit_elbo(fit: LogitFit, X, y, prior: LogitPrior) -> float:
    """Quadratic-bound ELBO: the bounded expected log-likelihood minus
    KL(q(beta) || p(beta))."""
    X, y = _design(X, y, prior.n_coef)
    m, S, xi = fit.m, fit.S, np.asarray(fit.xi, dtype=float)
    bound = 0.0
    if X.shape[0]:
        lam = jj_lambda(xi)
        quad = _quad_forms(X, S + np.outer(m, m))
        bound = float(np.sum(log_expit(xi) + (y - 0.5) * (X @ m) - 0.5 * xi - lam * (quad - xi ** 2)))
    return bound - gaussian_kl(m, S, prior.m0, prior.S0)


def fit_logit_cavi(X, y, prior: LogitPrior, *, delta: float = DEFAULT_DELTA,
                   max_iters: int = DEFAULT_MAX_ITERS) -> LogitFit:
    """Variational Bayesian logistic regression.

    ``y`` may hold hard 0/1 labels or soft probabilities in [0, 1].  Each
    sweep updates q(beta) = N(m, S) given the local bound parameters xi and
    then sets every xi to its optimum given q(beta).
    """
    X, y = _design(X, y, prior.n_coef)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("response values must lie in [0, 1]")
    if X.shape[0] == 0:
        return LogitFit(prior.m0.copy(), prior.S0.copy(), np.empty(0), ElboTrace((0.0,), StopReason.DELTA_THRESHOLD))

    S0_inv = _spd_inv(prior.S0, "S0")
    lin = S0_inv @ prior.m0 + X.T @ (y - 0.5)
    cur = {"m": prior.m0.copy(), "S": prior.S0.copy()}
    cur["xi"] = _optimal_xi(X, cur["m"], cur["S"])

    def step():
        precision = S0_inv + 2.0 * (X.T * jj_lambda(cur["xi"])) @ X
        S = _spd_inv(precision, "posterior precision")
        cur["S"] = S
        cur["m"] = S @ lin
        cur["xi"] = _optimal_xi(X, cur["m"], S)

    def elbo():
        return logit_elbo(LogitFit(cur["m"], cur["S"], cur["xi"], None), X, y, prior)

    trace = _iterate(step, elbo, delta, max_iters)
    return LogitFit(cur["m"], cur["S"], cur["xi"], trace)


def predict_prob(fit: LogitFit, X) -> np.ndarray:
    """Plug-in predictive probability ``expit(X @ m)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != fit.m.size:
        raise ValueError(f"X must have {fit.m.size} columns")
    return expit(X @ fit.m)


def sens_spec(fit: LogitFit) -> tuple[float, float]:
    """Sensitivity and specificity of a binary indicator for the latent class.

    The fit must come from the covariate-free design ``[1, D]``:
    sensitivity is expit(b0 + b1) and specificity 1 - expit(b0).
    """
    if fit.m.size != 2:
        raise ValueError(f"sens_spec needs an [intercept, class] fit with 2 coefficients, got {fit.m.size}")
    b0, b1 = float(fit.m[0]), float(fit.m[1])
    return float(expit(b0 + b1)), float(1.0 - expit(b0))


# --- linear regression ------------------------------------------------------------

@dataclass(frozen=True)
class LinRegPrior:
    """beta ~ N(mu, Sigma), tau^2 ~ InvGamma(c, d) (shape c, scale d)."""

    mu: np.ndarray
    Sigma: np.ndarray
    c: float = 1.0
    d: float = 1.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if Sigma.shape != (mu.size, mu.size):
            raise ValueError(f"Sigma must be {mu.size} x {mu.size}, got {Sigma.shape}")
        _spd(Sigma, "Sigma")
        if not (self.c > 0 and self.d > 0):
            raise ValueError("inverse-gamma shape c and scale d must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "d", float(self.d))

    @property
    def n_coef(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class LinRegFit:
    m: np.ndarray
    S: np.ndarray
    a: float
    b: float
    trace: ElboTrace

    @property
    def expected_precision(self) -> float:
        return self.a / self.b

    def coef_sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.S))


def inv_gamma_kl(a: float, b: float, c: float, d: float) -> float:
    """KL( InvGamma(a, b) || InvGamma(c, d) ), equal to the KL between the
    corresponding Gamma(shape, rate) laws of the precision."""
    return ((a - c) * digamma(a) - gammaln(a) + gammaln(c)
            + c * (np.log(b) - np.log(d)) + a * (d - b) / b)


def linreg_elbo(fit: LinRegFit, X, y, prior: LinRegPrior) -> float:
    X, y = _design(X, y, prior.n_coef)
    n = y.size
    resid = y - X @ fit.m
    e_sq = float(resid @ resid + np.sum((X.T @ X) * fit.S))
    e_log_tau2 = np.log(fit.b) - digamma(fit.a)
    e_loglik = -0.5 * n * np.log(2 * np.pi) - 0.5 * n * e_log_tau2 - 0.5 * (fit.a / fit.b) * e_sq
    return float(e_loglik - gaussian_kl(fit.m, fit.S, prior.mu, prior.Sigma)
                 - inv_gamma_kl(fit.a, fit.b, prior.c, prior.d))


def fit_linreg_vb(X, y, prior: LinRegPrior, *, delta: float = DEFAULT_DELTA,
                  max_iters: int = DEFAULT_MAX_ITERS) -> LinRegFit:
    """Mean-field q(beta) q(tau^2) for y = X beta + noise, noise ~ N(0, tau^2)."""
    X, y = _design(X, y, prior.n_coef)
    n = y.size
    if n == 0:
        return LinRegFit(prior.mu.copy(), prior.Sigma.copy(), prior.c, prior.d,
                         ElboTrace((0.0,), StopReason.DELTA_THRESHOLD))
    Sigma_inv = _spd_inv(prior.Sigma, "Sigma")
    xtx, xty = X.T @ X, X.T @ y
    a = prior.c + 0.5 * n
    cur = {"m": prior.mu.copy(), "S": prior.Sigma.copy(), "b": prior.d}
    e_prec = prior.c / prior.d

    def step():
        nonlocal e_prec
        S = _spd_inv(Sigma_inv + e_prec * xtx, "posterior precision")
        m = S @ (Sigma_inv @ prior.mu + e_prec * xty)
        resid = y - X @ m
        cur["m"], cur["S"] = m, S
        cur["b"] = prior.d + 0.5 * float(resid @ resid + np.sum(xtx * S))
        e_prec = a / cur["b"]

    def elbo():
        return linreg_elbo(LinRegFit(cur["m"], cur["S"], a, cur["b"], None), X, y, prior)

    trace = _iterate(step, elbo, delta, max_iters)
    return LinRegFit(cur["m"], cur["S"], a, cur["b"], trace)
