"""Gaussian-process prognostics with priors inferred from previous trajectories."""

from priorgp.basis import ParisBasis, ParisLawConfig, PolynomialBasis, VIRKLER, paris_basis, poly_basis
from priorgp.dataset import Dataset, GeneratorSpec, Trajectory, load, read_trajectories, synthesize, synthesize_gp
from priorgp.gp import (
    GpModel,
    Hyperparameters,
    PosteriorPrediction,
    Standardizer,
    log_marginal_likelihood,
    posterior,
    poly_model,
    se_model,
)
from priorgp.igpm import IgpmModel, infer_model
from priorgp.train import ModelFamily, fit_current, fit_previous, select_order

__all__ = [
    "Dataset",
    "GeneratorSpec",
    "GpModel",
    "Hyperparameters",
    "IgpmModel",
    "ModelFamily",
    "ParisBasis",
    "ParisLawConfig",
    "PolynomialBasis",
    "PosteriorPrediction",
    "Standardizer",
    "Trajectory",
    "VIRKLER",
    "fit_current",
    "fit_previous",
    "infer_model",
    "load",
    "log_marginal_likelihood",
    "paris_basis",
    "poly_basis",
    "poly_model",
    "posterior",
    "read_trajectories",
    "se_model",
    "select_order",
    "synthesize",
    "synthesize_gp",
]
