"""Python bindings for the sald edge-cloud super-resolution simulator."""

from ._sald import (
    BudgetExceeded,
    ConfigError,
    DimensionError,
    FormatError,
    Model,
    NumericError,
    SaldError,
    TransmissionRejected,
    bicubic_upsample,
    edge_iou,
    encode,
    generate_scene,
    make_dataset,
    payload_info,
    psnr,
    ssim,
    transmit,
)

__all__ = [
    "BudgetExceeded",
    "ConfigError",
    "DimensionError",
    "FormatError",
    "Model",
    "NumericError",
    "SaldError",
    "TransmissionRejected",
    "bicubic_upsample",
    "edge_iou",
    "encode",
    "generate_scene",
    "make_dataset",
    "payload_info",
    "psnr",
    "ssim",
    "transmit",
]
