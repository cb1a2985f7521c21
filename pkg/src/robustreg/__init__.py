"""Robust linear regression under M-estimation and heavy-tailed error models."""

from .models import ErrorModel, Family, ImproperModelError, lptn_hyperparams, parse_family
from .estimation import (
    Dataset, DesignSpec, CategoricalTerm, FitResult, PriorSpec, build_design,
    fit_m_irls, fit_map, fit_ols, log_posterior, profile_hyperparam,
)

__version__ = "0.1.0"
