"""Variational Bayesian Gaussian mixture fitted by coordinate ascent (CAVI).

The mixing weights carry a Dirichlet prior and each component an
independent Normal-Wishart prior over its mean and precision.  Updates and
the evidence lower bound follow the standard conjugate derivation (Bishop,
PRML ch. 10.2), with per-component Dirichlet concentrations and mean
precision scalings.

Component means are stored row-wise, shape ``(K, D)``, and component labels
are 0-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import digamma, gammaln, multigammaln, xlogy

from .trace import ElboTrace, StopReason

logger = logging.getLogger(__name__)

#: effective counts below this are treated as empty components
EMPTY_COMPONENT_TOL = 1e-10


class DegenerateComponentError(np.linalg.LinAlgError):
    """A component's inverse-scale matrix could not be made positive definite."""

    def __init__(self, component: int, message: str = ""):
        self.component = component
        super().__init__(message or f"component {component}: scale matrix is not positive definite")


def _as_2d(data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"data must be a 2-D (N, D) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    return x


def _per_component(value, k: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(k, float(arr))
    if arr.shape != (k,):
        raise ValueError(f"{name} must be a scalar or have length {k}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class GmmPrior:
    """Dirichlet + Normal-Wishart hyperparameters.

    Parameters
    ----------
    alpha0 : (K,) array
        Dirichlet concentration per component.
    lambda0 : (K,) array
        Scaling of the precision of the component means (``beta`` in
        Bishop's notation).
    m0 : (K, D) array
        Prior component means.
    W0 : (D, D) array
        Wishart scale matrix, symmetric positive definite.
    nu0 : float
        Wishart degrees of freedom, must exceed ``D - 1``.
    """

    alpha0: np.ndarray
    lambda0: np.ndarray
    m0: np.ndarray
    W0: np.ndarray
    nu0: float
    log_det_W0: float = field(init=False)
    W0_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m0 = np.atleast_2d(np.asarray(self.m0, dtype=float))
        k, d = m0.shape
        alpha0 = _per_component(self.alpha0, k, "alpha0")
        lambda0 = _per_component(self.lambda0, k, "lambda0")
        W0 = np.asarray(self.W0, dtype=float)
        if W0.shape != (d, d):
            raise ValueError(f"W0 must be ({d}, {d}), got {W0.shape}")
        if np.any(alpha0 <= 0):
            raise ValueError("alpha0 entries must be positive")
        if np.any(lambda0 <= 0):
            raise ValueError("lambda0 entries must be positive")
        if not float(self.nu0) > d - 1:
            raise ValueError(f"nu0 must exceed D - 1 = {d - 1}, got {self.nu0}")
        if not np.allclose(W0, W0.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W0).max())):
            raise ValueError("W0 must be symmetric")
        try:
            chol = linalg.cholesky(W0, lower=True)
        except linalg.LinAlgError:
            raise ValueError("W0 must be positive definite") from None
        object.__setattr__(self, "alpha0", alpha0)
        object.__setattr__(self, "lambda0", lambda0)
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "W0", W0)
        object.__setattr__(self, "nu0", float(self.nu0))
        object.__setattr__(self, "log_det_W0", 2.0 * float(np.sum(np.log(np.diag(chol)))))
        object.__setattr__(self, "W0_inv", linalg.cho_solve((chol, True), np.eye(d)))

    @property
    def n_components(self) -> int:
        return self.m0.shape[0]

    @property
    def dim(self) -> int:
        return self.m0.shape[1]

    @classmethod
    def default(cls, data, k: int, alpha=None, lambda0=None, m0=None, W0=None, nu0=None) -> "GmmPrior":
        """Fill omitted hyperparameters with the package defaults.

        alpha0 = 1/k, lambda0 = 1, m0 = the data mean for every component,
        W0 = identity and nu0 = D + 1.
        """
        x = _as_2d(data)
        d = x.shape[1]
        if alpha is None:
            alpha = 1.0 / k
        if lambda0 is None:
            lambda0 = 1.0
        if m0 is None:
            m0 = np.tile(x.mean(axis=0), (k, 1))
        else:
            m0 = np.asarray(m0, dtype=float)
            if m0.ndim == 1:
                m0 = np.tile(m0, (k, 1))
        if W0 is None:
            W0 = np.eye(d)
        else:
            W0 = np.asarray(W0, dtype=float)
            if W0.ndim == 0:
                W0 = float(W0) * np.eye(d)
        if nu0 is None:
            nu0 = d + 1.0
        return cls(alpha0=alpha, lambda0=lambda0, m0=m0, W0=W0, nu0=nu0)

    def permuted(self, perm) -> "GmmPrior":
        perm = np.asarray(perm)
        return GmmPrior(self.alpha0[perm], self.lambda0[perm], self.m0[perm], self.W0, self.nu0)


@dataclass(frozen=True)
class GmmState:
    """Variational posterior q(pi) q(mu, Lambda) of the mixture."""

    alpha: np.ndarray
    lambda_: np.ndarray
    m: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    log_det_W: np.ndarray

    @property
    def n_components(self) -> int:
        return self.m.shape[0]

    @property
    def dim(self) -> int:
        return self.m.shape[1]

    @property
    def mixing_weights(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()

    def expected_log_pi(self) -> np.ndarray:
        return digamma(self.alpha) - digamma(self.alpha.sum())

    def expected_log_det_precision(self) -> np.ndarray:
        d = self.dim
        i = np.arange(1, d + 1)
        psi = digamma((self.nu[:, None] + 1 - i[None, :]) / 2.0).sum(axis=1)
        return psi + d * np.log(2.0) + self.log_det_W

    def expected_precisions(self) -> np.ndarray:
        return self.nu[:, None, None] * self.W

    def expected_covariances(self) -> np.ndarray:
        """Inverse of the expected precision, ``(nu_k W_k)^-1``, per component."""
        return np.linalg.inv(self.expected_precisions())

    def effective_components(self, threshold: float = 0.05) -> int:
        return int(np.sum(self.mixing_weights > threshold))

    def permuted(self, perm) -> "GmmState":
        perm = np.asarray(perm)
        return GmmState(self.alpha[perm], self.lambda_[perm], self.m[perm], self.W[perm],
                        self.nu[perm], self.log_det_W[perm])


@dataclass(frozen=True)
class Responsibilities:
    """Soft assignments ``r[n, k] = q(z_n = k)``."""

    r: np.ndarray

    @property
    def Nk(self) -> np.ndarray:
        return self.r.sum(axis=0)

    @property
    def hard_labels(self) -> np.ndarray:
        # argmax returns the first maximum, so ties go to the lowest index
        return np.argmax(self.r, axis=1)

    @classmethod
    def from_labels(cls, labels, k: int) -> "Responsibilities":
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"labels must lie in [0, {k - 1}]")
        r = np.zeros((labels.size, k))
        r[np.arange(labels.size), labels.astype(int)] = 1.0
        return cls(r)


@dataclass(frozen=True)
class GmmFit:
    state: GmmState
    resp: Responsibilities
    trace: ElboTrace
    prior: GmmPrior

    @property
    def labels(self) -> np.ndarray:
        return self.resp.hard_labels


def _log_rho(state: GmmState, x: np.ndarray) -> np.ndarray:
    n, d = x.shape
    out = np.empty((n, state.n_components))
    e_log_pi = state.expected_log_pi()
    e_log_det = state.expected_log_det_precision()
    for k in range(state.n_components):
        chol = linalg.cholesky(state.W[k], lower=True)
        maha = np.sum(((x - state.m[k]) @ chol) ** 2, axis=1)
        out[:, k] = (e_log_pi[k] + 0.5 * e_log_det[k] - 0.5 * d / state.lambda_[k]
                     - 0.5 * state.nu[k] * maha - 0.5 * d * np.log(2 * np.pi))
    return out


def e_step(state: GmmState, data) -> Responsibilities:
    """Optimal q(z) given the current parameter posterior."""
    x = _as_2d(data)
    if x.shape[1] != state.dim:
        raise ValueError(f"data has {x.shape[1]} columns, state expects {state.dim}")
    log_rho = _log_rho(state, x)
    # shift by the row maximum before exponentiating (log-sum-exp), then
    # divide so that equal log-weights give exactly equal responsibilities
    r = np.exp(log_rho - log_rho.max(axis=1, keepdims=True))
    return Responsibilities(r / r.sum(axis=1, keepdims=True))


def _sufficient_stats(r: np.ndarray, x: np.ndarray):
    """Effective counts, weighted means and weighted (unnormalised) scatter."""
    nk = r.sum(axis=0)
    k, d = r.shape[1], x.shape[1]
    xbar = np.zeros((k, d))
    scatter = np.zeros((k, d, d))
    for j in range(k):
        if nk[j] < EMPTY_COMPONENT_TOL:
            continue
        xbar[j] = r[:, j] @ x / nk[j]
        diff = x - xbar[j]
        scatter[j] = (diff * r[:, j, None]).T @ diff
    return nk, xbar, scatter


def _spd_inverse(precision_like: np.ndarray, component: int):
    """Invert an SPD matrix via Cholesky, with one bounded jitter retry.

    Returns the inverse and the log-determinant of the inverse.
    """
    d = precision_like.shape[0]
    a = 0.5 * (precision_like + precision_like.T)
    try:
        chol = linalg.cholesky(a, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-8 * np.trace(a) / d
        logger.warning("component %d: adding jitter %.3g to inverse scale", component, jitter)
        try:
            chol = linalg.cholesky(a + jitter * np.eye(d), lower=True)
        except linalg.LinAlgError:
            raise DegenerateComponentError(component) from None
    inv = linalg.cho_solve((chol, True), np.eye(d))
    return 0.5 * (inv + inv.T), -2.0 * float(np.sum(np.log(np.diag(chol))))


def m_step(resp: Responsibilities, data, prior: GmmPrior) -> GmmState:
    """Conjugate update of q(pi) and q(mu_k, Lambda_k) given responsibilities."""
    x = _as_2d(data)
    r = np.asarray(resp.r, dtype=float)
    if r.shape != (x.shape[0], prior.n_components):
        raise ValueError(f"responsibilities shape {r.shape} does not match "
                         f"data ({x.shape[0]}) and prior ({prior.n_components} components)")
    if x.shape[1] != prior.dim:
        raise ValueError(f"data has {x.shape[1]} columns, prior expects {prior.dim}")
    nk, xbar, scatter = _sufficient_stats(r, x)
    k, d = r.shape[1], x.shape[1]

    alpha = prior.alpha0 + nk
    lam = prior.lambda0 + nk
    nu = prior.nu0 + nk
    m = np.empty((k, d))
    W = np.empty((k, d, d))
    log_det_W = np.empty(k)
    for j in range(k):
        if nk[j] < EMPTY_COMPONENT_TOL:
            logger.debug("component %d is empty (Nk=%.3g); keeping prior", j, nk[j])
            m[j] = prior.m0[j]
            W[j] = prior.W0
            log_det_W[j] = prior.log_det_W0
            continue
        m[j] = (prior.lambda0[j] * prior.m0[j] + nk[j] * xbar[j]) / lam[j]
        dm = xbar[j] - prior.m0[j]
        w_inv = (prior.W0_inv + scatter[j]
                 + (prior.lambda0[j] * nk[j] / (prior.lambda0[j] + nk[j])) * np.outer(dm, dm))
        W[j], log_det_W[j] = _spd_inverse(w_inv, j)
    return GmmState(alpha=alpha, lambda_=lam, m=m, W=W, nu=nu, log_det_W=log_det_W)


def _log_wishart_norm(log_det_W, nu, d):
    """log B(W, nu) of the Wishart normaliser."""
    return (-0.5 * nu * log_det_W - 0.5 * nu * d * np.log(2.0) - multigammaln(0.5 * nu, d))


def _log_dirichlet_norm(alpha):
    return gammaln(alpha.sum()) - gammaln(alpha).sum()


def compute_elbo(state: GmmState, resp: Responsibilities, data, prior: GmmPrior) -> float:
    """Evidence lower bound, including all normalising constants."""
    x = _as_2d(data)
    r = resp.r
    k, d = state.n_components, state.dim
    nk, xbar, scatter = _sufficient_stats(r, x)
    e_log_pi = state.expected_log_pi()
    e_log_det = state.expected_log_det_precision()
    lam, nu, m, W = state.lambda_, state.nu, state.m, state.W

    # E[log p(X | Z, mu, Lambda)]
    e_log_lik = 0.0
    for j in range(k):
        if nk[j] < EMPTY_COMPONENT_TOL:
            continue
        dx = xbar[j] - m[j]
        e_log_lik += 0.5 * (nk[j] * (e_log_det[j] - d / lam[j] - d * np.log(2 * np.pi))
                            - nu[j] * np.sum(scatter[j] * W[j])
                            - nk[j] * nu[j] * dx @ W[j] @ dx)

    e_log_pz = float(np.sum(r @ e_log_pi))
    e_log_ppi = _log_dirichlet_norm(prior.alpha0) + np.sum((prior.alpha0 - 1) * e_log_pi)

    lam0, m0 = prior.lambda0, prior.m0
    e_log_pmu = 0.0
    for j in range(k):
        dm = m[j] - m0[j]
        e_log_pmu += 0.5 * (d * np.log(lam0[j] / (2 * np.pi)) + e_log_det[j]
                            - d * lam0[j] / lam[j] - lam0[j] * nu[j] * dm @ W[j] @ dm)
        e_log_pmu += (0.5 * (prior.nu0 - d - 1) * e_log_det[j]
                      - 0.5 * nu[j] * np.sum(prior.W0_inv * W[j]))
    e_log_pmu += k * _log_wishart_norm(prior.log_det_W0, prior.nu0, d)

    e_log_qz = float(np.sum(xlogy(r, r)))
    e_log_qpi = _log_dirichlet_norm(state.alpha) + np.sum((state.alpha - 1) * e_log_pi)
    wishart_entropy = (-_log_wishart_norm(state.log_det_W, nu, d)
                       - 0.5 * (nu - d - 1) * e_log_det + 0.5 * nu * d)
    e_log_qmu = np.sum(0.5 * e_log_det + 0.5 * d * np.log(lam / (2 * np.pi)) - 0.5 * d
                       - wishart_entropy)

    return float(e_log_lik + e_log_pz + e_log_ppi + e_log_pmu - e_log_qz - e_log_qpi - e_log_qmu)


def fit_gmm(data, k: int, prior: GmmPrior | None = None, init_labels=None, *, delta: float = 1e-8,
            max_iters: int = 1000, stop_if_elbo_reverse: bool = False) -> GmmFit:
    """Fit the variational mixture by alternating m_step / e_step.

    Parameters
    ----------
    data : (N, D) array
    k : int
        Number of mixture components.
    prior : GmmPrior, optional
        Defaults to :meth:`GmmPrior.default`.
    init_labels : (N,) int array, optional
        Initial hard assignment in ``[0, k)``.  Defaults to ``arange(N) % k``.
    delta : float
        Stop once the absolute ELBO change drops below this.
    max_iters : int
    stop_if_elbo_reverse : bool
        Stop as soon as the ELBO decreases and return the state from the
        iteration before the decrease.
    """
    x = _as_2d(data)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of observations N={n}")
    if prior is None:
        prior = GmmPrior.default(x, k)
    if prior.n_components != k or prior.dim != x.shape[1]:
        raise ValueError(f"prior has {prior.n_components} components of dimension {prior.dim}; "
                         f"expected {k} x {x.shape[1]}")
    if init_labels is None:
        init_labels = np.arange(n) % k
    init_labels = np.asarray(init_labels)
    if init_labels.shape != (n,):
        raise ValueError(f"init_labels must have length {n}")
    resp = Responsibilities.from_labels(init_labels, k)

    values: list[float] = []
    state = None
    reason = StopReason.MAX_ITERS
    for it in range(max_iters):
        new_state = m_step(resp, x, prior)
        new_resp = e_step(new_state, x)
        elbo = compute_elbo(new_state, new_resp, x, prior)
        if values:
            change = elbo - values[-1]
            if abs(change) < delta:
                state, resp = new_state, new_resp
                values.append(elbo)
                reason = StopReason.DELTA_THRESHOLD
                break
            if stop_if_elbo_reverse and change < 0:
                logger.info("ELBO reversed at iteration %d (%.10g -> %.10g); keeping previous state",
                            it, values[-1], elbo)
                reason = StopReason.ELBO_REVERSED
                break
        state, resp = new_state, new_resp
        values.append(elbo)
        logger.debug("iteration %d: ELBO %.12g", it, elbo)
    if state is None:
        # max_iters == 0: report the state implied by the initial assignment
        state = m_step(resp, x, prior)
        values.append(compute_elbo(state, resp, x, prior))
    return GmmFit(state=state, resp=resp, trace=ElboTrace(tuple(values), reason), prior=prior)
