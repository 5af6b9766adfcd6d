"""
Centroidal dynamics of the linear inverted pendulum with a flywheel.
Computes CoM accelerations and the CoP/CMP relations.
"""
from typing import Tuple

import numpy as np
from scipy.linalg import expm

from models import CentroidalState, GroundPoint, GroundPointRole, RobotParams


class DynamicsService:
    """
    LIPM and LIPM+flywheel equations of motion.

    Per axis, with omega = sqrt(g / z_c) and F_z = m * g:
    - LIPM:      xdd = omega^2 (x - p_x)
    - Flywheel:  xdd = omega^2 (x - p_x) - Hdot_y / (m z_c)
                 ydd = omega^2 (y - p_y) + Hdot_x / (m z_c)
    - CMP:       CMP_x = p_x + Hdot_y / F_z,  CMP_y = p_y - Hdot_x / F_z
    - Ankle CoP: p_x = tau_y / (m g),  p_y = tau_x / (m g)

    Sagittal and frontal axes are decoupled.
    """

    def natural_frequency(self, params: RobotParams) -> float:
        return params.omega

    def com_accel_lipm(
        self,
        state: CentroidalState,
        cop: GroundPoint,
        params: RobotParams
    ) -> Tuple[float, float]:
        """
        CoM acceleration of the plain LIPM.

        Args:
            state: Centroidal state
            cop: Center of pressure
            params: Robot parameters

        Returns:
            (xdd, ydd) in m/s^2
        """
        omega_sq = params.omega ** 2
        return (
            omega_sq * (state.com_pos_m[0] - cop.xy_m[0]),
            omega_sq * (state.com_pos_m[1] - cop.xy_m[1]),
        )

    def com_accel_flywheel(
        self,
        state: CentroidalState,
        cop: GroundPoint,
        hdot: Tuple[float, float],
        params: RobotParams
    ) -> Tuple[float, float]:
        """
        CoM acceleration with a centroidal moment Hdot = (Hdot_x, Hdot_y).

        Args:
            state: Centroidal state
            cop: Center of pressure
            hdot: Rate of centroidal angular momentum in N*m
            params: Robot parameters

        Returns:
            (xdd, ydd) in m/s^2
        """
        accel = self.accel_array(
            np.asarray(state.com_pos_m, dtype=float),
            np.asarray(cop.xy_m, dtype=float),
            np.asarray(hdot, dtype=float),
            params,
        )
        return float(accel[0]), float(accel[1])

    def cmp_from_cop(
        self,
        cop: GroundPoint,
        hdot: Tuple[float, float],
        params: RobotParams
    ) -> GroundPoint:
        """CMP displaced from the CoP by the centroidal moment. Never clamped."""
        cmp_xy = self.cmp_array(np.asarray(cop.xy_m, dtype=float), np.asarray(hdot, dtype=float), params)
        return GroundPoint(xy_m=(float(cmp_xy[0]), float(cmp_xy[1])), role=GroundPointRole.CMP)

    def cop_from_ankle_torque(
        self,
        tau_ankle: Tuple[float, float],
        params: RobotParams
    ) -> GroundPoint:
        """
        CoP produced by an ankle torque (tau_x, tau_y). Not clamped.
        """
        offset = self.torque_to_ground_offset(np.asarray(tau_ankle, dtype=float), params)
        return GroundPoint(xy_m=(float(offset[0]), float(offset[1])), role=GroundPointRole.COP)

    def com_closed_form(
        self,
        state: CentroidalState,
        cop: GroundPoint,
        t: float,
        params: RobotParams
    ) -> CentroidalState:
        """
        Exact LIPM state after t seconds with a constant CoP and no moment.

        Uses the matrix exponential of [[0, 1], [omega^2, 0]], which equals
        x(t) = p + (x0 - p) cosh(omega t) + (xd0 / omega) sinh(omega t).
        """
        if t < 0:
            raise ValueError(f"t must be non-negative, got {t}")
        omega = params.omega
        transition = expm(np.array([[0.0, 1.0], [omega ** 2, 0.0]]) * t)

        pos = []
        vel = []
        for axis in range(2):
            rel = np.array([state.com_pos_m[axis] - cop.xy_m[axis], state.com_vel_mps[axis]])
            evolved = transition @ rel
            pos.append(float(evolved[0] + cop.xy_m[axis]))
            vel.append(float(evolved[1]))

        return state.model_copy(update={'com_pos_m': tuple(pos), 'com_vel_mps': tuple(vel)})

    def orbital_energy(
        self,
        state: CentroidalState,
        cop: GroundPoint,
        params: RobotParams
    ) -> Tuple[float, float]:
        """LIPM orbital energy xd^2 - omega^2 (x - p)^2 per axis; conserved for a fixed CoP."""
        omega_sq = params.omega ** 2
        return tuple(
            state.com_vel_mps[axis] ** 2 - omega_sq * (state.com_pos_m[axis] - cop.xy_m[axis]) ** 2
            for axis in range(2)
        )

    # Array kernels shared with the integrator

    def accel_array(
        self,
        com: np.ndarray,
        cop: np.ndarray,
        hdot: np.ndarray,
        params: RobotParams
    ) -> np.ndarray:
        omega_sq = params.omega ** 2
        moment_arm = params.mass_kg * params.com_height_m
        return np.array([
            omega_sq * (com[0] - cop[0]) - hdot[1] / moment_arm,
            omega_sq * (com[1] - cop[1]) + hdot[0] / moment_arm,
        ])

    def cmp_array(self, cop: np.ndarray, hdot: np.ndarray, params: RobotParams) -> np.ndarray:
        f_z = params.vertical_force_N
        return np.array([cop[0] + hdot[1] / f_z, cop[1] - hdot[0] / f_z])

    def torque_to_ground_offset(self, tau: np.ndarray, params: RobotParams) -> np.ndarray:
        """Rotation-axis torque (tau_x, tau_y) to a motion-axis ground offset (tau_y, tau_x) / (m g)."""
        f_z = params.vertical_force_N
        return np.array([tau[1] / f_z, tau[0] / f_z])
