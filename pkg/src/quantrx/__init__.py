"""Error-rate analysis of spatially oversampled low-resolution receivers.

The package models a receiver that observes one transmitted QAM symbol
through N parallel branches, quantizes each branch with a uniform midrise
b-bit quantizer, averages the quantized values per quadrature component,
and decides the symbol from the averaged detection variable. It provides
the exact conditional statistics of that variable, four detectors, exact
analytic symbol error rates, a Monte Carlo verifier, ADC power budgeting,
and a minimum-SER constellation optimizer.
"""

from .channel import (
    AdcPowerSpec,
    LosChannelParams,
    adc_power,
    iso_power_configs,
    los_coefficient,
    snr_from_channel,
)
from .core import (
    Constellation,
    DecisionRule,
    DetectionPmf,
    QuantizerSpec,
    SystemConfig,
    component_noise_std,
    log_multinomial_coeff,
    log_q_function,
    q_function,
)
from .detectors import (
    DETECTOR_CLT,
    DETECTOR_MINDIST,
    DETECTOR_ML,
    DETECTOR_NOFILT,
    NoFiltDecisionSets,
    ThresholdCrossingError,
    build_rule,
    clt_thresholds,
    detect,
    mindist_thresholds,
    ml_thresholds,
    nofilt_decision_sets,
    nofilt_detect,
)
from .montecarlo import DitherPlan, McConfig, McResult, optimum_dither, simulate_ser
from .optimizer import (
    LandscapePoint,
    OptimizeResult,
    SearchBudgetError,
    SearchSpace,
    evaluate_constellation,
    optimize,
    plateau_onset,
)
from .quantizer import (
    LevelStats,
    cond_mean,
    cond_variance,
    level_probability,
    level_stats,
    level_value,
    level_values,
    log_level_probs,
    quantize,
    quantize_index,
    thresholds,
)
from .ser import (
    DETECTOR_UNQUANTIZED,
    MinSer,
    SerPoint,
    SweepResult,
    min_ser_over_snr,
    ser_ask,
    ser_nofilt,
    ser_qam,
    ser_sweep,
    ser_unquantized,
    ser_unquantized_component,
)
from .stats import (
    CltDensity,
    EnumerationLimitError,
    clt_pdf,
    composition_count,
    composition_matrix,
    d_moments,
    detection_grid,
    detection_value,
    enumerate_compositions,
    pmf_of_d,
)

__version__ = "0.1.0"
