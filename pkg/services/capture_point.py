"""
Capture point algebra: CP from state, CP dynamics and recoverability tests.
"""
import math
from typing import Tuple

import numpy as np

from models import (
    CapturePointState, CentroidalState, GroundPoint, RobotParams, SupportPolygon
)


class CapturePointService:
    """
    Capture point xi = x + xd / omega, the divergent component of the LIPM.

    - CoM rate:  xd = omega (xi - x)
    - CP rate:   xi_d = omega (xi - p), with p the CoP or the CMP
    - Constant pivot: xi(t) = p + (xi0 - p) exp(omega t)
    """

    def capture_point(self, state: CentroidalState, params: RobotParams) -> CapturePointState:
        omega = params.omega
        return CapturePointState(xi_m=(
            state.com_pos_m[0] + state.com_vel_mps[0] / omega,
            state.com_pos_m[1] + state.com_vel_mps[1] / omega,
        ))

    def com_rate_from_cp(
        self,
        com: Tuple[float, float],
        xi: CapturePointState,
        params: RobotParams
    ) -> Tuple[float, float]:
        omega = params.omega
        return (omega * (xi.xi_m[0] - com[0]), omega * (xi.xi_m[1] - com[1]))

    def cp_rate(
        self,
        xi: CapturePointState,
        cop: GroundPoint,
        params: RobotParams
    ) -> Tuple[float, float]:
        """
        CP velocity driven by a ground pivot.

        Args:
            xi: Current capture point
            cop: Pivot point (CoP, or CMP when called through cp_rate_cmp)
            params: Robot parameters

        Returns:
            (xi_d_x, xi_d_y) in m/s
        """
        rate = self.cp_rate_array(np.asarray(xi.xi_m, dtype=float), np.asarray(cop.xy_m, dtype=float), params)
        return float(rate[0]), float(rate[1])

    def cp_rate_cmp(
        self,
        xi: CapturePointState,
        cmp: GroundPoint,
        params: RobotParams
    ) -> Tuple[float, float]:
        """CP velocity with the CMP as pivot, the same law as cp_rate."""
        return self.cp_rate(xi, cmp, params)

    def analytic_cp_trajectory(
        self,
        xi0: CapturePointState,
        cop_const: GroundPoint,
        t: float,
        params: RobotParams
    ) -> CapturePointState:
        if t < 0:
            raise ValueError(f"t must be non-negative, got {t}")
        growth = math.exp(params.omega * t)
        return CapturePointState(xi_m=tuple(
            cop_const.xy_m[axis] + (xi0.xi_m[axis] - cop_const.xy_m[axis]) * growth
            for axis in range(2)
        ))

    def is_ankle_recoverable(self, xi: CapturePointState, polygon: SupportPolygon) -> bool:
        """True when the CP lies inside or on the boundary of the support polygon."""
        return polygon.contains(xi.xi_m)

    def capture_region_intersects(
        self,
        xi: CapturePointState,
        radius_m: float,
        polygon: SupportPolygon
    ) -> bool:
        """
        One-step capture test: the disc of radius_m around the CP must
        intersect the support polygon.
        """
        nearest = (
            min(max(xi.xi_m[0], polygon.min_xy_m[0]), polygon.max_xy_m[0]),
            min(max(xi.xi_m[1], polygon.min_xy_m[1]), polygon.max_xy_m[1]),
        )
        return math.hypot(xi.xi_m[0] - nearest[0], xi.xi_m[1] - nearest[1]) <= radius_m

    def cp_array(self, com: np.ndarray, com_vel: np.ndarray, params: RobotParams) -> np.ndarray:
        return com + com_vel / params.omega

    def cp_rate_array(self, xi: np.ndarray, pivot: np.ndarray, params: RobotParams) -> np.ndarray:
        return params.omega * (xi - pivot)
