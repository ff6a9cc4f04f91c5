"""Intention sharing for vulnerable road users over V2X awareness messages."""

from .geometry import (
    CHI2_95_2DOF,
    ConvexPolygon,
    Cov2,
    Point2,
    Segment,
    UncertaintyEllipse,
    ellipse_overlap,
    mahalanobis_sq,
    sat_overlap,
    segments_intersect,
    trajectories_collide,
)
from .prediction import (
    MotionHistory,
    PredictedTrajectory,
    QuadraticFit,
    QuadraticMotionModel,
    TrajectoryEncoder,
    fit_quadratic,
    predict,
    to_ellipse,
    to_polygon,
)

__version__ = "0.1.0"

__all__ = [
    "CHI2_95_2DOF",
    "ConvexPolygon",
    "Cov2",
    "MotionHistory",
    "Point2",
    "PredictedTrajectory",
    "QuadraticFit",
    "QuadraticMotionModel",
    "Segment",
    "TrajectoryEncoder",
    "UncertaintyEllipse",
    "ellipse_overlap",
    "fit_quadratic",
    "mahalanobis_sq",
    "predict",
    "sat_overlap",
    "segments_intersect",
    "to_ellipse",
    "to_polygon",
    "trajectories_collide",
]
