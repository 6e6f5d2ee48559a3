from .experiment import ExperimentResult, evaluate, run_synthetic_experiment, score_histogram
from .inject import InjectionConfig, InjectionKind, inject, truth_vector
from .metrics import (
    MetricsReport,
    Throughput,
    build_eval_subset,
    compute_metrics,
    degree_accuracy_correlation,
    measure_throughput,
)
from .synthetic import SyntheticLogConfig, generate_synthetic, synthetic_schema
