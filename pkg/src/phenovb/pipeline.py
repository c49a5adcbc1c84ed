"""Three-stage phenotyping: latent class by variational GMM, biomarker shifts by
variational linear regression, indicator sensitivity/specificity by variational
logistic regression."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .data_io import Cohort, ColumnType, standardize
from .gmm import GmmPrior, GmmState, fit_gmm
from .initialization import InitConfig, initialize
from .regression import LinRegPrior, LogitPrior, fit_linreg_vb, fit_logit_cavi, sens_spec
from .results import BiomarkerShift, IndicatorPerf, PhenoResult

logger = logging.getLogger(__name__)

SMALLEST_WEIGHT = "smallest"
AVAIL_SUFFIX = "_avail"


@dataclass(frozen=True)
class BiomarkerPrior:
    """Prior for one biomarker regression.

    ``healthy`` is the prior mean of the intercept (``None``: the observed
    biomarker mean, which is dominated by non-cases for a rare phenotype).
    All other coefficients, including the class shift, have prior mean 0.
    """

    healthy: float | None = None
    variance: float = 100.0
    c: float = 1.0
    d: float = 1.0


@dataclass
class PhenoConfig:
    gmm_columns: list[str]
    biomarker_columns: list[str]
    indicator_columns: list[str] = field(default_factory=list)
    covariate_columns: list[str] = field(default_factory=list)
    k: int = 2
    gmm_prior: dict[str, Any] = field(default_factory=dict)
    init: InitConfig = field(default_factory=InitConfig)
    gmm_delta: float = 1e-8
    gmm_max_iters: int = 1000
    stop_if_elbo_reverse: bool = False
    standardize: bool = True
    disease_component: str | int = SMALLEST_WEIGHT
    biomarker_priors: dict[str, BiomarkerPrior] = field(default_factory=dict)
    indicator_prior: LogitPrior = field(default_factory=lambda: LogitPrior.isotropic(2, 10.0))
    phenotype_columns: list[str] = field(default_factory=list)
    logit_prior: LogitPrior | None = None
    soft_phenotype_response: bool = True
    regression_delta: float = 1e-8
    regression_max_iters: int = 1000

    def validate(self, cohort: Cohort) -> None:
        needed = (self.gmm_columns + self.biomarker_columns + self.indicator_columns
                  + self.covariate_columns + self.phenotype_columns)
        missing = [c for c in needed if c not in cohort]
        if missing:
            raise ValueError(f"cohort lacks column(s) {missing}")
        for c in self.indicator_columns:
            if cohort.types[c] is not ColumnType.BINARY:
                raise ValueError(f"indicator column {c!r} must be binary")
        if not self.gmm_columns:
            raise ValueError("gmm_columns is empty")
        if self.k > cohort.n:
            raise ValueError(f"k={self.k} exceeds the cohort size {cohort.n}")

    def echo(self) -> dict[str, Any]:
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {str(k): plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "gmm_columns": list(self.gmm_columns),
            "biomarker_columns": list(self.biomarker_columns),
            "indicator_columns": list(self.indicator_columns),
            "covariate_columns": list(self.covariate_columns),
            "phenotype_columns": list(self.phenotype_columns),
            "k": self.k,
            "gmm_prior": plain(self.gmm_prior),
            "init": {"method": self.init.method.value, "seed": self.init.seed,
                     "eps": self.init.eps, "min_pts": self.init.min_pts},
            "gmm_delta": self.gmm_delta,
            "gmm_max_iters": self.gmm_max_iters,
            "stop_if_elbo_reverse": self.stop_if_elbo_reverse,
            "standardize": self.standardize,
            "disease_component": self.disease_component,
        }


def select_disease_component(state: GmmState, rule: str | int = SMALLEST_WEIGHT) -> int:
    """Pick the component representing the phenotype (0-based).

    ``"smallest"`` takes the component with the smallest expected mixing
    weight, ties going to the lowest index; an integer selects that
    component explicitly.
    """
    k = state.n_components
    if rule == SMALLEST_WEIGHT:
        if k < 2:
            raise ValueError("the smallest-weight rule needs at least two components")
        return int(np.argmin(state.mixing_weights))
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool):
        if not 0 <= rule < k:
            raise ValueError(f"disease component {rule} out of range for k={k}")
        return int(rule)
    raise ValueError(f"unknown disease component rule {rule!r}")


def _observed_rows(cohort: Cohort, biomarker: str) -> np.ndarray:
    flag = biomarker + AVAIL_SUFFIX
    if flag in cohort:
        return np.asarray(cohort[flag]) == 1
    return np.ones(cohort.n, dtype=bool)


def build_gmm_prior(x: np.ndarray, k: int, spec: dict[str, Any]) -> GmmPrior:
    """GMM prior from a partial hyperparameter dict, defaults filled in."""
    allowed = {"alpha", "lambda0", "m0", "W0", "nu0"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown GMM prior field(s) {sorted(unknown)}")
    return GmmPrior.default(x, k, **spec)


def fit_biomarker(cohort: Cohort, biomarker: str, latent_class: np.ndarray, covariates: list[str],
                  prior: BiomarkerPrior, *, delta: float = 1e-8, max_iters: int = 1000):
    """Regress one biomarker on ``[1, covariates, D]`` over its observed rows."""
    rows = _observed_rows(cohort, biomarker)
    covs = [c for c in covariates if c != biomarker]
    y = np.asarray(cohort[biomarker], dtype=float)[rows]
    X = np.column_stack([np.ones(rows.sum())] + [np.asarray(cohort[c], dtype=float)[rows] for c in covs]
                        + [latent_class[rows].astype(float)])
    healthy = float(np.mean(y)) if prior.healthy is None and y.size else (prior.healthy or 0.0)
    mu = np.zeros(X.shape[1])
    mu[0] = healthy
    lin_prior = LinRegPrior(mu, prior.variance * np.eye(X.shape[1]), prior.c, prior.d)
    return fit_linreg_vb(X, y, lin_prior, delta=delta, max_iters=max_iters)


def run_model(cohort: Cohort, cfg: PhenoConfig) -> PhenoResult:
    """Run the three phenotyping stages on ``cohort``.

    An empty disease class (no patient with soft probability >= 0.5) is
    reported through ``disease_class_empty`` with stages 2 and 3 skipped.
    """
    cfg.validate(cohort)
    gmm_cohort = standardize(cohort, cfg.gmm_columns) if cfg.standardize else cohort
    x = gmm_cohort.matrix(cfg.gmm_columns)
    prior = build_gmm_prior(x, cfg.k, cfg.gmm_prior)
    start = initialize(x, cfg.k, cfg.init)
    gmm = fit_gmm(x, cfg.k, prior, start.labels, delta=cfg.gmm_delta, max_iters=cfg.gmm_max_iters,
                  stop_if_elbo_reverse=cfg.stop_if_elbo_reverse)
    disease = select_disease_component(gmm.state, cfg.disease_component)
    soft = gmm.resp.r[:, disease].copy()
    latent = (soft >= 0.5).astype(np.int64)
    logger.info("GMM stopped (%s) after %d iterations; disease component %d holds %d patients",
                gmm.trace.stopped_because.value, len(gmm.trace), disease, latent.sum())

    fits: dict[str, Any] = {}
    shifts: dict[str, BiomarkerShift] = {}
    perf: dict[str, IndicatorPerf] = {}
    empty = not latent.any()
    if empty:
        logger.warning("disease class is empty; skipping biomarker and indicator stages")
    else:
        for name in sorted(cfg.biomarker_columns):
            fit = fit_biomarker(cohort, name, latent, cfg.covariate_columns,
                                cfg.biomarker_priors.get(name, BiomarkerPrior()),
                                delta=cfg.regression_delta, max_iters=cfg.regression_max_iters)
            coef = float(fit.m[-1])
            shifts[name] = BiomarkerShift(abs(coef), coef, float(fit.coef_sd()[-1]))
            fits[f"biomarker:{name}"] = fit
        for name in sorted(cfg.indicator_columns):
            X = np.column_stack([np.ones(cohort.n), latent.astype(float)])
            fit = fit_logit_cavi(X, np.asarray(cohort[name], dtype=float), cfg.indicator_prior,
                                 delta=cfg.regression_delta, max_iters=cfg.regression_max_iters)
            perf[name] = IndicatorPerf(*sens_spec(fit))
            fits[f"indicator:{name}"] = fit
        if cfg.phenotype_columns:
            X = np.column_stack([np.ones(cohort.n)] + [np.asarray(cohort[c], dtype=float)
                                                      for c in cfg.phenotype_columns])
            lp = cfg.logit_prior or LogitPrior.isotropic(X.shape[1], 10.0)
            y = soft if cfg.soft_phenotype_response else latent.astype(float)
            fits["phenotype"] = fit_logit_cavi(X, y, lp, delta=cfg.regression_delta,
                                               max_iters=cfg.regression_max_iters)

    return PhenoResult(latent_class=latent, soft_prob=soft, biomarker_shift=shifts, indicator_perf=perf,
                       gmm_trace=gmm.trace, disease_component=disease, disease_class_empty=empty,
                       config_echo=cfg.echo(), regression_fits=fits, gmm_fit=gmm)
