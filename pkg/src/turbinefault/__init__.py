"""Wind-turbine power-curve modelling and fault classification.

Main entry points:

* :mod:`turbinefault.powercurve` - operating regions, ideal curve, method of bins
* :mod:`turbinefault.dataio` - CSV ingestion, normalisation, splits, synthetic data
* :class:`turbinefault.svr.GaussianSVR` - epsilon-SVR with an SMO-style solver
* :mod:`turbinefault.neuralnet` - the five numpy fault classifiers
* :mod:`turbinefault.report` - metrics, comparison table, plot data
"""

from .dataio import LabeledDataset, MetNormalizer, MetRecord, NormalizationStats
from .neuralnet import ArchKind, FaultNetClassifier
from .powercurve import Region, TurbineSpec, bin_curve, classify_region, ideal_power, is_fault
from .report import ComparisonReport, EvalRow, build_report, mse
from .svr import GaussianSVR, kfold_cv

__version__ = "0.1.0"

__all__ = [
    "ArchKind",
    "ComparisonReport",
    "EvalRow",
    "FaultNetClassifier",
    "GaussianSVR",
    "LabeledDataset",
    "MetNormalizer",
    "MetRecord",
    "NormalizationStats",
    "Region",
    "TurbineSpec",
    "bin_curve",
    "build_report",
    "classify_region",
    "ideal_power",
    "is_fault",
    "kfold_cv",
    "mse",
]
