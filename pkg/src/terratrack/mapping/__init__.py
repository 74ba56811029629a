from .mapper import (
    BOX_MARGIN,
    InsufficientNeighbors,
    Mapper,
    RemovalReport,
    ResidualParams,
    TrackBox,
    ZeroRange,
    box_removal_mask,
    boxes_from_detections,
    boxes_from_tracks,
    filter_by_residual,
    fit_planes,
    integrate_frame,
    plane_residual,
    plane_residuals,
    points_in_box,
    remove_tracked_dynamic,
    residual_score,
    residual_scores,
)
from .static_map import StaticMap, export_map, import_map, read_map_points

__all__ = [
    "BOX_MARGIN", "InsufficientNeighbors", "Mapper", "RemovalReport", "ResidualParams", "TrackBox",
    "ZeroRange", "box_removal_mask", "boxes_from_detections", "boxes_from_tracks", "filter_by_residual",
    "fit_planes", "integrate_frame", "plane_residual", "plane_residuals", "points_in_box",
    "remove_tracked_dynamic", "residual_score", "residual_scores", "StaticMap", "export_map",
    "import_map", "read_map_points",
]
