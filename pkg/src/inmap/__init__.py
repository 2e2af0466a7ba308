"""Intra-modal proxy learning from precomputed embeddings.

Given unit-norm image embeddings and text-derived class proxies, the library
refines softmax pseudo labels with entropic optimal transport, hardens
confident rows, and recovers per-class vision proxies by projected gradient
descent on a convex KL objective. A synthetic modality-gap laboratory checks
the method's theoretical guarantees numerically.
"""

from .errors import (
    ConfigError,
    ConstructionError,
    DataError,
    DegenerateRowError,
    EmptyError,
    FormatError,
    InmapError,
    IoError,
    LabelRangeError,
    NumericsError,
    ShapeError,
    TruncationError,
)
from .learn import (
    PgdConfig,
    TrainTrace,
    kl_gradient,
    kl_objective,
    learn_proxies,
    predict,
    project_unit_rows,
)
from .pipeline import Metrics, PipelineConfig, PipelineResult, evaluate, run_inmap
from .pseudo import (
    SinkhornConfig,
    SinkhornTrace,
    sinkhorn_plan,
    sinkhorn_refine,
    smooth_reference,
    softmax_labels,
    text_logits,
    threshold_labels,
    transport_objective,
)
from .store import (
    load_labels,
    load_matrix,
    normalize_rows,
    save_labels,
    save_matrix,
    validate_labels,
)
from .theory import (
    Prop1Report,
    SyntheticModel,
    Thm1Result,
    Thm2Report,
    build_synthetic_model,
    sample_prop1_batches,
    thm2_noise_sweep,
    verify_prop1,
    verify_prop3,
    verify_thm1,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstructionError",
    "DataError",
    "DegenerateRowError",
    "EmptyError",
    "FormatError",
    "InmapError",
    "IoError",
    "LabelRangeError",
    "NumericsError",
    "ShapeError",
    "TruncationError",
    "PgdConfig",
    "TrainTrace",
    "kl_gradient",
    "kl_objective",
    "learn_proxies",
    "predict",
    "project_unit_rows",
    "Metrics",
    "PipelineConfig",
    "PipelineResult",
    "evaluate",
    "run_inmap",
    "SinkhornConfig",
    "SinkhornTrace",
    "sinkhorn_plan",
    "sinkhorn_refine",
    "smooth_reference",
    "softmax_labels",
    "text_logits",
    "threshold_labels",
    "transport_objective",
    "load_labels",
    "load_matrix",
    "normalize_rows",
    "save_labels",
    "save_matrix",
    "validate_labels",
    "Prop1Report",
    "SyntheticModel",
    "Thm1Result",
    "Thm2Report",
    "build_synthetic_model",
    "sample_prop1_batches",
    "thm2_noise_sweep",
    "verify_prop1",
    "verify_prop3",
    "verify_thm1",
    "__version__",
]
