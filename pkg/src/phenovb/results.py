"""Result containers produced by the phenotyping pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .trace import ElboTrace


@dataclass(frozen=True)
class BiomarkerShift:
    """Absolute shift, signed coefficient on the latent class and its posterior sd."""

    shift: float
    signed_coef: float
    sd: float


@dataclass(frozen=True)
class IndicatorPerf:
    sensitivity: float
    specificity: float


@dataclass(frozen=True, eq=False)
class PhenoResult:
    latent_class: np.ndarray
    soft_prob: np.ndarray
    biomarker_shift: dict[str, BiomarkerShift]
    indicator_perf: dict[str, IndicatorPerf]
    gmm_trace: ElboTrace
    disease_component: int
    disease_class_empty: bool = False
    config_echo: dict[str, Any] = field(default_factory=dict)
    regression_fits: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)
    gmm_fit: Any = field(default=None, compare=False, repr=False)

    @property
    def n_disease(self) -> int:
        return int(np.sum(self.latent_class))
