"""
Foot contact geometry and the unilateral CoP constraint.
"""
from typing import Tuple

import numpy as np

from models import (
    FootGeometry, GroundPoint, RobotParams, StanceConfig, StanceMode, SupportPolygon
)


class SupportPolygonService:
    """
    Builds axis-aligned support rectangles and saturates the CoP and the
    ankle torque against them.
    """

    def polygon_from_stance(self, foot: FootGeometry, stance_center: Tuple[float, float]) -> SupportPolygon:
        """
        Rectangle of the foot dimensions for an ankle placed at stance_center.

        The foot center sits at stance_center - ankle_offset.
        """
        center_x = stance_center[0] - foot.ankle_offset_m[0]
        center_y = stance_center[1] - foot.ankle_offset_m[1]
        half_length = foot.length_m / 2
        half_width = foot.width_m / 2
        return SupportPolygon(
            min_xy_m=(center_x - half_length, center_y - half_width),
            max_xy_m=(center_x + half_length, center_y + half_width),
        )

    def polygon_for_stance(self, foot: FootGeometry, stance: StanceConfig) -> SupportPolygon:
        """Single-foot rectangle, or the bounding rectangle of both feet in double support."""
        if stance.mode == StanceMode.SINGLE:
            return self.polygon_from_stance(foot, stance.center_m)

        half_sep = stance.feet_separation_m / 2
        left = self.polygon_from_stance(foot, (stance.center_m[0], stance.center_m[1] + half_sep))
        right = self.polygon_from_stance(foot, (stance.center_m[0], stance.center_m[1] - half_sep))
        return SupportPolygon(
            min_xy_m=(min(left.min_xy_m[0], right.min_xy_m[0]), min(left.min_xy_m[1], right.min_xy_m[1])),
            max_xy_m=(max(left.max_xy_m[0], right.max_xy_m[0]), max(left.max_xy_m[1], right.max_xy_m[1])),
        )

    def clamp_cop(self, p: GroundPoint, polygon: SupportPolygon) -> GroundPoint:
        clamped = self.clamp_array(np.asarray(p.xy_m, dtype=float), polygon)
        return p.model_copy(update={'xy_m': (float(clamped[0]), float(clamped[1]))})

    def max_ankle_torque(
        self,
        polygon: SupportPolygon,
        params: RobotParams
    ) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """
        Ankle torque bounds that put the CoP exactly on the polygon edges.

        Returns:
            (lower, upper), each indexed (tau_x, tau_y)
        """
        f_z = params.vertical_force_N
        lower = (f_z * polygon.min_xy_m[1], f_z * polygon.min_xy_m[0])
        upper = (f_z * polygon.max_xy_m[1], f_z * polygon.max_xy_m[0])
        return lower, upper

    def relative_to_center(self, polygon: SupportPolygon) -> SupportPolygon:
        """Same rectangle expressed about its own center."""
        cx, cy = polygon.center
        return SupportPolygon(
            min_xy_m=(polygon.min_xy_m[0] - cx, polygon.min_xy_m[1] - cy),
            max_xy_m=(polygon.max_xy_m[0] - cx, polygon.max_xy_m[1] - cy),
        )

    def clamp_array(self, point: np.ndarray, polygon: SupportPolygon) -> np.ndarray:
        return np.clip(point, polygon.min_xy_m, polygon.max_xy_m)
