"""Variational Bayes patient phenotyping: latent disease class discovery with a
CAVI Gaussian mixture, followed by variational regressions for biomarker
shifts and indicator sensitivity/specificity."""

from .gmm import (DegenerateComponentError, GmmFit, GmmPrior, GmmState, Responsibilities,
                  compute_elbo, e_step, fit_gmm, m_step)
from .trace import ElboTrace, StopReason

__version__ = "0.1.0"
