"""Label-shift adaptation for ordinal classifiers.

K heads share a trunk; head k is trained with a compensating term that
calibrates it toward the k-dominating label distribution. At test time the
heads are mixed with simplex weights fitted by augmentation consistency.
"""
from .calibration import HeadSpec, calibrated_bce, calibrated_prob, compensating_term
from .data import AugmentationSpec, Dataset, GeneratorSpec, augment, generate, resample
from .metrics import MetricsReport, accuracy, binary_auc, obuchowski, split_aucs
from .model import MultiHeadModel, TrainConfig
from .ordinal import (
    DominatingSpec,
    LabelDistribution,
    decode,
    dominating_distribution,
    encode,
    one_dominating_rates,
    positive_rates,
    uniform_rates,
)
from .tta import AdaptConfig, AggregationWeights, adapt, aggregate, consistency_loss, predict

__version__ = "0.1.0"
