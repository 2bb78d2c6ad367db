"""SAR-optical stereogrammetry: geometry, matching, reconstruction, evaluation."""

from sarstereo.geometry import (
    GroundPoint,
    ImagePoint,
    OpticalSensorModel,
    SarObservation,
    SarSensorModel,
    opt_forward,
    opt_inverse_at_height,
    rotation_from_angles,
    sar_forward,
    sar_inverse_at_height,
)

__version__ = "0.1.0"

__all__ = [
    "GroundPoint",
    "ImagePoint",
    "SarSensorModel",
    "OpticalSensorModel",
    "SarObservation",
    "rotation_from_angles",
    "sar_forward",
    "sar_inverse_at_height",
    "opt_forward",
    "opt_inverse_at_height",
]
