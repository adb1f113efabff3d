"""Supervised PCA on the Grassmannian: LSPCA, LRPCA and their kernel variants."""

from .baselines import pca, pcr_pcc, rrr
from .data import Dataset, SplitPlan, center, read_csv, split, variation_explained
from .grassmann import MCGDOptions, chordal_distance, mcgd
from .harness import ExperimentPlan, metrics, pareto_sweep, run_experiment
from .kernel import KernelSpec, fit_kernel_spca, kpcr_kpcc
from .models import ModelParams, nll, predict
from .nuisance import update_params
from .solvers import FitConfig, FitResult, fit

__all__ = [
    "Dataset",
    "ExperimentPlan",
    "FitConfig",
    "FitResult",
    "KernelSpec",
    "MCGDOptions",
    "ModelParams",
    "SplitPlan",
    "center",
    "chordal_distance",
    "fit",
    "fit_kernel_spca",
    "kpcr_kpcc",
    "mcgd",
    "metrics",
    "nll",
    "pareto_sweep",
    "pca",
    "pcr_pcc",
    "predict",
    "read_csv",
    "rrr",
    "run_experiment",
    "split",
    "update_params",
    "variation_explained",
]
