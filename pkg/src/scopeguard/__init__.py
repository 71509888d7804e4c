"""Runtime scope-compliance monitoring with ECDF-based two-sample distances."""
from .calibrate import (
    CalibrationArtifact,
    CalibrationConfig,
    MeasureThreshold,
    ScopeCalibrator,
    SweepRow,
    apply_thresholds,
    fit,
    select_threshold,
    sweep,
    write_sweep_csv,
)
from .dataio import read_dataset_csv, write_dataset_csv
from .distances import (
    BatchDistance,
    DistanceMeasure,
    DistanceReport,
    TrainingScope,
    ad_distance,
    batch_distance,
    bootstrap_pvalue,
    cvm_distance,
    distance,
    distance_report,
    ks_distance,
    two_sample_distances,
    wasserstein_distance,
)
from .ecdf import Dataset, Ecdf, TrainingScopeSet, build_ecdf, build_tss, ecdf_eval
from .exceptions import *  # noqa: F401,F403
from .monitor import MonitorConfig, ScopeMonitor, Verdict, VerdictKind, evaluate_batch
from .power import (
    PowerSpec,
    SampleSizePlan,
    cohens_d,
    finalize_sample_size,
    inverse_normal_cdf,
    normal_cdf,
    plan_sample_size,
    required_sample_size,
)
from .refmodel import KnnClassifier, knn_fit, knn_predict
from .synth import ScenarioSpec, StreamSegment, generate, separable_scenario

__version__ = "0.1.0"
