"""Aligning a learned image-distance metric with human similarity rankings.

The package fine-tunes the non-negative layer-combination weights of a
perceptual distance on human-ranked image sets (margin ranking loss over
pairs) and quantifies metric-human agreement with Spearman's rank
correlation, the two-way random-effects ICC(2,k), and a paired bootstrap
over sets.
"""

__version__ = "0.1.0"

from rankalign.boot import BootstrapResult, paired_bootstrap
from rankalign.dataset import (PairTuple, RankedSet, SplitPlan, build_pairs,
                               load_rankings, save_rankings, split_sets)
from rankalign.distx import read_archive, write_archive
from rankalign.errors import (FormatError, NumericalError, RankAlignError,
                              SchemaMismatchError, UndefinedStatisticError,
                              ValidationError)
from rankalign.model import (DistanceTensor, LayerSchema, WeightHead,
                             distance, distance_gradient, load_weights,
                             save_weights)
from rankalign.stats import (AlignmentReport, AnovaTable, anova_two_way,
                             evaluate, icc2k, icc_confidence_interval,
                             icc_p_value, interpret_icc, spearman_p,
                             spearman_rho)
from rankalign.synth import SynthConfig, generate
from rankalign.train import (TrainConfig, TrainTrace, batch_loss_and_grad,
                             fit, hinge_loss)

__all__ = [
    "__version__",
    "AlignmentReport", "AnovaTable", "BootstrapResult", "DistanceTensor",
    "FormatError", "LayerSchema", "NumericalError", "PairTuple",
    "RankAlignError", "RankedSet", "SchemaMismatchError", "SplitPlan",
    "SynthConfig", "TrainConfig", "TrainTrace", "UndefinedStatisticError",
    "ValidationError", "WeightHead",
    "anova_two_way", "batch_loss_and_grad", "build_pairs", "distance",
    "distance_gradient", "evaluate", "fit", "generate", "hinge_loss",
    "icc2k", "icc_confidence_interval", "icc_p_value", "interpret_icc",
    "load_rankings", "load_weights", "paired_bootstrap", "read_archive",
    "save_rankings", "save_weights", "spearman_p", "spearman_rho",
    "split_sets", "write_archive",
]
