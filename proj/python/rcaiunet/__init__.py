"""Python bindings for the RCA-IUnet C++ core."""

from ._rcaiunet import (  # noqa: F401
    BadConfig,
    Error,
    FormatError,
    IoError,
    Model,
    ModelConfig,
    ShapeMismatch,
    ahd,
    combined_loss,
    confusion,
    count_parameters,
    evaluate_pair,
    fill_holes,
    generate_synthetic,
    gradcheck_layers,
    mae,
    miou,
    read_png,
    refine,
    remove_small_regions,
    separable_cost_ratio,
    threshold,
    write_png,
)

__version__ = "0.1.0"
