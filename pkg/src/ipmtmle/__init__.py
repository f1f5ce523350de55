"""Cross-validated TMLE for discretized integral projection models."""

from .data import Dataset, IndividualRecord, SizeGrid, build_quantile_grid, read_dataset, write_dataset
from .demography import (DemographicModel, EigenSystem, FitConfig, deflated_pinv, dominant_eigs,
                         empirical_model, estimate_model, evaluate_target, kernel_matrix,
                         mean_kernel)
from .errors import ConfigError, DataError, EstimationError, IpmError
from .influence import coefficient_matrices, eif_grid, eif_record, gateaux_oracle, oracle_suite
from .simgen import SimSpec, generate, truth_model, truth_value
from .tmle import TargetEstimate, TmleConfig, run_cv_tmle

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "Dataset", "DemographicModel", "EigenSystem", "EstimationError",
    "FitConfig", "IndividualRecord", "IpmError", "SimSpec", "SizeGrid", "TargetEstimate",
    "TmleConfig", "build_quantile_grid", "coefficient_matrices", "deflated_pinv",
    "dominant_eigs", "eif_grid", "eif_record", "empirical_model", "estimate_model",
    "evaluate_target", "gateaux_oracle", "generate", "kernel_matrix", "mean_kernel",
    "oracle_suite", "read_dataset", "run_cv_tmle", "truth_model", "truth_value",
    "write_dataset",
]
