"""Distributed quantized detection of sparse signals under Byzantine attacks."""

from .analysis import (
    PerformancePoint,
    StatisticMoments,
    adaptive_threshold,
    crlb_attack_parameter,
    deflection_coefficient,
    predict_performance,
    statistic_moments,
)
from .channel import (
    AttackParams,
    BlindingError,
    blinding_product,
    byzantine_codeword_pmf,
    byzantine_report,
    mixture_codeword_pmf,
)
from .detectors import (
    DetectorVerdict,
    estimate_attack_parameter,
    glrt_decide,
    glrtrs_decide,
    lmpt_decide,
    lmpt_threshold,
    lmpt_weights,
    lmptrs_decide,
    lmptrs_weights,
    lrt_decide,
    lrt_statistic,
)
from .numerics import Interval, OptimizationError, maximize_scalar, normal_pdf, q_tail, q_tail_inverse
from .reputation import ReputationState, enhanced_decide, reputation_filter
from .sensing import (
    Hypothesis,
    Role,
    SensorBank,
    SensorSpec,
    SignalModel,
    assumption_check,
    beta_h,
    equiprobable_thresholds,
    full_thresholds,
    honest_codeword_pmf,
    make_reference_thresholds,
    quantize,
    sample_asymptotic_observation,
    sample_sparse_observation,
)

__version__ = "0.1.0"
