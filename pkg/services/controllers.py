"""
Capture point feedback controllers.

Torque-space ankle and hip PD laws, the position-command PD law for
position-controlled servos, and the servo model turning angle commands into
joint torques.

Controller frame: errors are xi_ref - xi (motion axis). Joint torques and
angle offsets are indexed by rotation axis and carry the sign of the error
they correct, so an ankle torque tau moves the CoP to
ref - cop_from_ankle_torque(tau) and an upper-body torque tau_h moves the CMP to
CoP - cop_from_ankle_torque(tau_h), i.e. Hdot = (tau_h_x, -tau_h_y).
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from models import (
    ControlMode, ControllerConfig, CpError, CapturePointState, DerivativeMode, GroundPoint,
    GroundPointRole, PdGains, PositionCommand, RobotParams, ServoParams, SupportPolygon, TorqueCommand
)
from services.capture_point import CapturePointService
from services.dynamics import DynamicsService
from services.support_polygon import SupportPolygonService

logger = logging.getLogger(__name__)


def _swap(values) -> np.ndarray:
    """Motion-axis (x, y) vector to the rotation axis that acts on it (about x, about y)."""
    return np.array([values[1], values[0]], dtype=float)


def _mirror_sagittal(values) -> np.ndarray:
    """Rotation-axis quantity between the flywheel frame and the controller frame."""
    return np.array([values[0], -values[1]], dtype=float)


class ControllerService:
    """
    Stateless PD laws. The same form is used for every joint:

        u_y = kp * e_x + kd * e_x_dot
        u_x = kp * e_y + kd * e_y_dot
    """

    def __init__(self):
        self.dynamics = DynamicsService()
        self.polygons = SupportPolygonService()

    def cp_error(
        self,
        reference: CapturePointState,
        measured: CapturePointState,
        reference_rate: Tuple[float, float],
        measured_rate: Tuple[float, float]
    ) -> CpError:
        return CpError(
            error_m=(reference.xi_m[0] - measured.xi_m[0], reference.xi_m[1] - measured.xi_m[1]),
            error_rate_mps=(reference_rate[0] - measured_rate[0], reference_rate[1] - measured_rate[1]),
        )

    def pd_law(self, e: CpError, gains: PdGains) -> np.ndarray:
        """Unsaturated PD output, rotation-axis indexed."""
        return _swap((
            gains.kp * e.error_m[0] + gains.kd * e.error_rate_mps[0],
            gains.kp * e.error_m[1] + gains.kd * e.error_rate_mps[1],
        ))

    def ankle_torque_pd(
        self,
        e: CpError,
        gains: PdGains,
        polygon: SupportPolygon,
        params: RobotParams
    ) -> Tuple[float, float]:
        """
        Ankle torque (tau_x, tau_y) saturated to the torques the polygon can bear.

        Args:
            e: CP error
            gains: Ankle PD gains
            polygon: Support polygon, expressed about the reference CoP
            params: Robot parameters
        """
        lower, upper = self.polygons.max_ankle_torque(polygon, params)
        tau = np.clip(self.pd_law(e, gains), lower, upper)
        return float(tau[0]), float(tau[1])

    def hip_torque_pd(
        self,
        e: CpError,
        gains: PdGains,
        params: RobotParams,
        flywheel_angle: Optional[Tuple[float, float]] = None,
        flywheel_rate: Optional[Tuple[float, float]] = None,
        control_dt: float = 0.01
    ) -> Tuple[float, float]:
        """
        Hip torque (tau_x, tau_y) clamped to the flywheel torque limit.

        The torque carries the sign of the CP error like the ankle torque, but
        the moment it produces is Hdot = (tau_x, -tau_y) (see
        hdot_from_hip_torque). A positive sagittal error therefore gives
        tau_y > 0 and Hdot_y < 0, moving the CMP toward the CP. The
        ground offset of cop_from_ankle_torque does not apply to this torque.

        When the flywheel state is given, the angle-limit guard is applied
        (see flywheel_guard).
        """
        limit = params.flywheel_torque_limit_Nm
        tau = np.clip(self.pd_law(e, gains), -limit, limit)
        if flywheel_angle is not None:
            rate = flywheel_rate if flywheel_rate is not None else (0.0, 0.0)
            hdot, _ = self.flywheel_guard(self.hdot_from_hip_torque(tau), flywheel_angle, rate, params, control_dt)
            tau = self.hdot_from_hip_torque(hdot)
        return float(tau[0]), float(tau[1])

    def hdot_from_hip_torque(self, tau_hip) -> np.ndarray:
        """Centroidal moment (Hdot_x, Hdot_y) produced by an upper-body torque; its own inverse."""
        return _mirror_sagittal(tau_hip)

    def flywheel_guard(
        self,
        hdot,
        angle,
        rate,
        params: RobotParams,
        dt: float
    ) -> Tuple[np.ndarray, bool]:
        """
        Keep the flywheel inside its angle limit.

        Hdot is held for dt and the flywheel must still be able to stop
        inside the limit afterwards when braking at the torque limit. Hdot is
        clipped to the range that satisfies this. At or past the limit,
        a command that does not already turn the flywheel back is replaced by
        full torque toward zero angle. A zero angle limit holds the flywheel
        still.

        Returns:
            Tuple of (guarded Hdot, whether the guard changed anything)
        """
        limit = params.flywheel_angle_limit_rad
        inertia = params.flywheel_inertia_kgm2
        max_accel = params.flywheel_torque_limit_Nm / inertia
        requested = np.array(hdot, dtype=float)
        guarded = requested.copy()

        for axis in range(2):
            phi, phid = float(angle[axis]), float(rate[axis])
            if max_accel <= 0:
                guarded[axis] = 0.0
            elif limit <= 0:
                guarded[axis] = inertia * float(np.clip(-phid / dt, -max_accel, max_accel))
            elif abs(phi) >= limit and guarded[axis] * np.sign(phi) >= 0:
                guarded[axis] = -np.sign(phi) * inertia * max_accel
            else:
                low, high = self._feasible_accel(phi, phid, limit, max_accel, dt)
                if low > high:
                    guarded[axis] = inertia * (-max_accel if high < -max_accel else max_accel)
                else:
                    guarded[axis] = np.clip(guarded[axis], inertia * low, inertia * high)

        return guarded, bool(np.any(guarded != requested))

    def _feasible_accel(
        self,
        phi: float,
        phid: float,
        limit: float,
        max_accel: float,
        dt: float
    ) -> Tuple[float, float]:
        """Flywheel accelerations for one held tick that keep the stopping angle within +-limit."""

        def reach(accel: float) -> Tuple[float, float]:
            phi_next = phi + phid * dt + 0.5 * accel * dt * dt
            phid_next = phid + accel * dt
            stop = phi_next + phid_next * abs(phid_next) / (2.0 * max_accel)
            return min(phi_next, stop), max(phi_next, stop)

        # both extremes grow monotonically with the acceleration
        if reach(max_accel)[1] <= limit:
            high = max_accel
        elif reach(-max_accel)[1] > limit:
            high = -max_accel - 1.0
        else:
            high = brentq(lambda a: reach(a)[1] - limit, -max_accel, max_accel)

        if reach(-max_accel)[0] >= -limit:
            low = -max_accel
        elif reach(max_accel)[0] < -limit:
            low = max_accel + 1.0
        else:
            low = brentq(lambda a: reach(a)[0] + limit, -max_accel, max_accel)

        return low, high

    def position_command_pd(self, e: CpError, config: ControllerConfig) -> PositionCommand:
        """
        Joint offsets from the CP error, clipped to the joint range limits.

        Arm and elbow offsets extend the hip strategy and are only commanded
        when both the hip and arm strategies are enabled.
        """
        limits = config.joint_limits
        zero = (0.0, 0.0)

        def offset(gains: PdGains, limit: float) -> Tuple[float, float]:
            value = np.clip(self.pd_law(e, gains), -limit, limit)
            return float(value[0]), float(value[1])

        upper_body = config.hip and config.arm
        return PositionCommand(
            ankle_rad=offset(config.ankle_gains, limits.ankle_rad) if config.ankle else zero,
            hip_rad=offset(config.hip_gains, limits.hip_rad) if config.hip else zero,
            arm_rad=offset(config.arm_gains, limits.arm_rad) if upper_body else zero,
            elbow_rad=offset(config.elbow_gains, limits.elbow_rad) if upper_body else zero,
        )

    def servo_torque(
        self,
        commanded_angle: float,
        actual_angle: float,
        actual_rate: float,
        servo: ServoParams
    ) -> float:
        tau = servo.stiffness_Nm_per_rad * (commanded_angle - actual_angle) - servo.damping_Nm_s_per_rad * actual_rate
        return float(np.clip(tau, -servo.torque_limit_Nm, servo.torque_limit_Nm))

    def resolve_torque_gains(self, config: ControllerConfig, params: RobotParams) -> Tuple[PdGains, PdGains]:
        """Torque-mode gains, defaulting to kp = 2 m g and kd = 0.1 m g / omega."""
        default = PdGains(kp=2.0 * params.vertical_force_N, kd=0.1 * params.vertical_force_N / params.omega)
        return config.torque_ankle_gains or default, config.torque_hip_gains or default


@dataclass
class ControlOutput:
    """Inputs held over one control period plus what is logged about them."""
    cop: np.ndarray
    cmp: np.ndarray
    hdot: np.ndarray
    error: CpError
    torques: TorqueCommand
    raw_ankle_torque: np.ndarray
    command: PositionCommand
    cop_saturated: bool
    flywheel_saturated: bool


class PushRecoveryController:
    """
    Controller instance for one simulation run.

    Holds the reference CP (polygon center), the last applied CMP used by the
    analytic error rate, and the previous CP for finite differencing.
    """

    def __init__(
        self,
        config: ControllerConfig,
        params: RobotParams,
        polygon: SupportPolygon,
        control_dt: float
    ):
        self.config = config
        self.params = params
        self.polygon = polygon
        self.control_dt = control_dt
        self.service = ControllerService()
        self.capture_points = CapturePointService()
        self.reference = np.array(polygon.center, dtype=float)
        self.reference_cp = CapturePointState(xi_m=polygon.center)
        self.relative_polygon = self.service.polygons.relative_to_center(polygon)
        self.torque_gains = self.service.resolve_torque_gains(config, params)
        self._held_cmp = GroundPoint(xy_m=polygon.center, role=GroundPointRole.CMP)
        self._previous_xi: Optional[np.ndarray] = None

    def update(
        self,
        com: np.ndarray,
        com_vel: np.ndarray,
        flywheel_angle: np.ndarray,
        flywheel_rate: np.ndarray
    ) -> ControlOutput:
        params = self.params
        dynamics = self.service.dynamics

        xi = self.capture_points.cp_array(com, com_vel, params)
        measured = CapturePointState(xi_m=(float(xi[0]), float(xi[1])))
        if self.config.derivative == DerivativeMode.FINITE_DIFFERENCE and self._previous_xi is not None:
            rate = (xi - self._previous_xi) / self.control_dt
            measured_rate = (float(rate[0]), float(rate[1]))
        else:
            measured_rate = self.capture_points.cp_rate_cmp(measured, self._held_cmp, params)
        # the reference sits at the polygon center and does not move
        cp_error = self.service.cp_error(self.reference_cp, measured, (0.0, 0.0), measured_rate)

        if self.config.mode == ControlMode.TORQUE:
            command = PositionCommand()
            raw_ankle, tau_ankle, tau_hip, hip_clamped = self._torque_mode(cp_error)
        else:
            command = self.service.position_command_pd(cp_error, self.config)
            raw_ankle, tau_ankle, tau_hip, hip_clamped = self._position_mode(
                command, com, com_vel, flywheel_angle, flywheel_rate
            )
        cop_saturated = bool(np.any(tau_ankle != raw_ankle))

        offset = dynamics.cop_from_ankle_torque((float(tau_ankle[0]), float(tau_ankle[1])), params)
        cop_point = self.service.polygons.clamp_cop(
            GroundPoint(
                xy_m=(self.reference[0] - offset.xy_m[0], self.reference[1] - offset.xy_m[1]),
                role=GroundPointRole.COP,
            ),
            self.polygon,
        )

        hdot, guarded = self.service.flywheel_guard(
            self.service.hdot_from_hip_torque(tau_hip), flywheel_angle, flywheel_rate, params, self.control_dt
        )
        if guarded:
            logger.debug("Flywheel guard active at angle %s rate %s", flywheel_angle, flywheel_rate)
        cmp_point = dynamics.cmp_from_cop(cop_point, (float(hdot[0]), float(hdot[1])), params)

        self._held_cmp = cmp_point
        self._previous_xi = xi

        tau_hip_applied = self.service.hdot_from_hip_torque(hdot)
        return ControlOutput(
            cop=np.array(cop_point.xy_m),
            cmp=np.array(cmp_point.xy_m),
            hdot=hdot,
            error=cp_error,
            torques=TorqueCommand(
                ankle_Nm=(float(tau_ankle[0]), float(tau_ankle[1])),
                hip_Nm=(float(tau_hip_applied[0]), float(tau_hip_applied[1])),
            ),
            raw_ankle_torque=np.asarray(raw_ankle, dtype=float),
            command=command,
            cop_saturated=cop_saturated,
            flywheel_saturated=bool(guarded or hip_clamped),
        )

    def _torque_mode(self, cp_error: CpError) -> Tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
        """Ankle and hip torques straight from the PD laws."""
        ankle_gains, hip_gains = self.torque_gains
        zero = np.zeros(2)
        if self.config.ankle:
            raw_ankle = self.service.pd_law(cp_error, ankle_gains)
            tau_ankle = np.array(self.service.ankle_torque_pd(
                cp_error, ankle_gains, self.relative_polygon, self.params
            ))
        else:
            raw_ankle, tau_ankle = zero, zero
        if not self.config.hip:
            return raw_ankle, tau_ankle, zero, False
        raw_hip = self.service.pd_law(cp_error, hip_gains)
        tau_hip = np.array(self.service.hip_torque_pd(cp_error, hip_gains, self.params))
        return raw_ankle, tau_ankle, tau_hip, bool(np.any(tau_hip != raw_hip))

    def _position_mode(
        self,
        command: PositionCommand,
        com: np.ndarray,
        com_vel: np.ndarray,
        flywheel_angle: np.ndarray,
        flywheel_rate: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
        """
        Servo torques for the commanded posture.

        The ankle servo acts on the body lean (com - center) / z_c; hip, arm
        and elbow act on the lumped flywheel, weighted by their effectiveness.
        The summed upper-body torque is clamped to the flywheel torque limit.
        """
        config = self.config
        servo = self.service.servo_torque
        z_c = self.params.com_height_m

        lean = _swap((com - self.reference) / z_c)
        lean_rate = _swap(com_vel / z_c)
        raw_ankle = np.array([
            servo(command.ankle_rad[axis], lean[axis], lean_rate[axis], config.ankle_servo)
            for axis in range(2)
        ])
        lower, upper = self.service.polygons.max_ankle_torque(self.relative_polygon, self.params)
        tau_ankle = np.clip(raw_ankle, lower, upper)

        if not config.hip:
            return raw_ankle, tau_ankle, np.zeros(2), False

        joint_angle = _mirror_sagittal(flywheel_angle)
        joint_rate = _mirror_sagittal(flywheel_rate)

        def joint_torque(commanded, params: ServoParams) -> np.ndarray:
            return np.array([
                servo(commanded[axis], joint_angle[axis], joint_rate[axis], params)
                for axis in range(2)
            ])

        raw_hip = config.weights.hip * joint_torque(command.hip_rad, config.hip_servo)
        if config.arm:
            raw_hip = raw_hip + config.weights.arm * joint_torque(command.arm_rad, config.arm_servo)
            raw_hip = raw_hip + config.weights.elbow * joint_torque(command.elbow_rad, config.elbow_servo)
        limit = self.params.flywheel_torque_limit_Nm
        tau_hip = np.clip(raw_hip, -limit, limit)
        return raw_ankle, tau_ankle, tau_hip, bool(np.any(tau_hip != raw_hip))
