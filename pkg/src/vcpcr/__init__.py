"""Supervised variable clustering with latent-variable regression (VC-PCR).

Variables are grouped by a weighted sparse orthogonal semi-NMF whose weights
come from a preliminary ridge or lasso fit; each cluster is summarised by a
latent variable and the response is regressed on those latents.
"""

__version__ = "0.1.0"

from .cv import GridSpec, nested_cv
from .data import Dataset, load_csv, standardize
from .model import VcpcrFit, WeightScheme, fit_vcpcr, predict
from .simulation import SimSpec, generate_dataset
from .sosnmf import fit_sosnmf, lambda_max

__all__ = [
    "Dataset", "GridSpec", "SimSpec", "VcpcrFit", "WeightScheme", "fit_sosnmf",
    "fit_vcpcr", "generate_dataset", "lambda_max", "load_csv", "nested_cv", "predict",
    "standardize",
]
