"""Attribution maps, iterative evidence augmentation and FROC evaluation."""

from ._evloop import (
    ArgumentError,
    DataError,
    DegenerateError,
    EvloopError,
    FullCoverageError,
    IoError,
    LookupError,
    Model,
    NumericError,
    ShapeError,
    binarize_otsu,
    combine_maps,
    froc_detections,
    generate_dataset,
    generate_scene,
    inpaint,
    load_model,
    preprocess,
    quadratic_weighted_kappa,
    radius_from_percent,
    read_png,
    roc_auc,
    train,
    write_png,
)

__all__ = [name for name in dir() if not name.startswith("_")]
