"""
Closed-loop simulation of the LIPM + flywheel under a push recovery controller.
Integrates with fixed-step RK4, injects pushes, logs every control tick and
classifies the outcome.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from exceptions import IntegrationError
from models import (
    CapturePointState, CentroidalState, PushEvent, RecoveryOutcome, RobotParams, ScenarioConfig,
    SupportPolygon, TrajectoryLog, TrajectorySample, Verdict
)
from services.capture_point import CapturePointService
from services.controllers import ControlOutput, PushRecoveryController
from services.dynamics import DynamicsService
from services.support_polygon import SupportPolygonService

logger = logging.getLogger(__name__)


def rk4_step(fun: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    """
    Runge-Kutta 4 step for an autonomous right-hand side
    """
    k1 = fun(y)
    k2 = fun(y + 0.5 * dt * k1)
    k3 = fun(y + 0.5 * dt * k2)
    k4 = fun(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class ForceWindow:
    """Constant external force over [start_step, end_step) physics steps."""
    start_step: int
    end_step: int
    force_N: Tuple[float, float]


@dataclass
class SimState:
    """
    Integrator state between physics steps.

    y = [x, y, xd, yd, phi_x, phi_y, phid_x, phid_y]
    """
    step_index: int
    y: np.ndarray
    control: Optional[ControlOutput] = None
    impulses: Tuple[Tuple[int, PushEvent], ...] = ()
    windows: Tuple[ForceWindow, ...] = ()
    tick: Optional[Tuple[np.ndarray, ControlOutput]] = None

    def centroidal(self) -> CentroidalState:
        return state_from_vector(self.y)


def state_to_vector(state: CentroidalState) -> np.ndarray:
    return np.array([
        *state.com_pos_m, *state.com_vel_mps, *state.flywheel_angle_rad, *state.flywheel_rate_radps
    ], dtype=float)


def state_from_vector(y: np.ndarray) -> CentroidalState:
    return CentroidalState(
        com_pos_m=(float(y[0]), float(y[1])),
        com_vel_mps=(float(y[2]), float(y[3])),
        flywheel_angle_rad=(float(y[4]), float(y[5])),
        flywheel_rate_radps=(float(y[6]), float(y[7])),
    )


class SimulationService:
    """
    Runs push recovery scenarios.

    Physics advance at physics_dt with RK4; controller inputs are recomputed on
    control ticks and held constant in between.
    """

    def __init__(self):
        self.dynamics = DynamicsService()
        self.polygons = SupportPolygonService()
        self.capture_points = CapturePointService()

    def apply_push(
        self,
        state: CentroidalState,
        push: PushEvent,
        params: RobotParams,
        physics_dt: float = 0.001
    ) -> Tuple[CentroidalState, Optional[ForceWindow]]:
        """
        Apply a push.

        Returns:
            Tuple of (state after an instantaneous push, force window for a
            push with duration). Exactly one of the two carries the push.
        """
        if push.duration_s > 0:
            start = int(round(push.time_s / physics_dt))
            end = start + max(1, int(round(push.duration_s / physics_dt)))
            return state, ForceWindow(start_step=start, end_step=end, force_N=push.force_N)
        velocity = (
            state.com_vel_mps[0] + push.impulse_Ns[0] / params.mass_kg,
            state.com_vel_mps[1] + push.impulse_Ns[1] / params.mass_kg,
        )
        return state.model_copy(update={'com_vel_mps': velocity}), None

    def initial_sim_state(self, config: ScenarioConfig) -> SimState:
        dt = config.simulation.physics_dt_s
        initial = CentroidalState(
            com_pos_m=config.initial.com_pos_m,
            com_vel_mps=config.initial.com_vel_mps,
        )
        impulses = []
        windows = []
        for push in config.pushes:
            if push.duration_s > 0:
                _, window = self.apply_push(initial, push, config.robot, dt)
                windows.append(window)
            else:
                impulses.append((int(round(push.time_s / dt)), push))
        return SimState(
            step_index=0,
            y=state_to_vector(initial),
            impulses=tuple(impulses),
            windows=tuple(windows),
        )

    def build_controller(self, config: ScenarioConfig) -> PushRecoveryController:
        return PushRecoveryController(
            config=config.controller,
            params=config.robot,
            polygon=self.support_polygon(config),
            control_dt=config.simulation.control_dt_s,
        )

    def support_polygon(self, config: ScenarioConfig) -> SupportPolygon:
        return self.polygons.polygon_for_stance(config.foot, config.stance)

    def step(self, sim: SimState, controller: PushRecoveryController, physics_dt: float) -> SimState:
        """
        Advance one physics step.

        Pushes due at this step are applied first; on control ticks the
        controller is updated from the post-push state.
        """
        params = controller.params
        sim = self._observe(sim, controller, physics_dt)
        control = sim.control

        force = np.zeros(2)
        for window in sim.windows:
            if window.start_step <= sim.step_index < window.end_step:
                force += window.force_N
        inertia = params.flywheel_inertia_kgm2
        mass = params.mass_kg

        def derivative(y: np.ndarray) -> np.ndarray:
            accel = self.dynamics.accel_array(y[0:2], control.cop, control.hdot, params) + force / mass
            return np.concatenate((y[2:4], accel, y[6:8], control.hdot / inertia))

        y_next = rk4_step(derivative, sim.y, physics_dt)
        if not np.all(np.isfinite(y_next)):
            time_s = sim.step_index * physics_dt
            logger.error("Non-finite state at t=%.4f s: %s", time_s, y_next)
            raise IntegrationError(f"State became non-finite at t={time_s:.4f} s: {y_next.tolist()}")
        return replace(sim, step_index=sim.step_index + 1, y=y_next)

    def _observe(self, sim: SimState, controller: PushRecoveryController, physics_dt: float) -> SimState:
        """Apply due impulses and refresh the control inputs on a tick."""
        y = sim.y
        due = [push for index, push in sim.impulses if index == sim.step_index]
        if due:
            state = state_from_vector(y)
            for push in due:
                state, _ = self.apply_push(state, push, controller.params, physics_dt)
            y = state_to_vector(state)

        substeps = int(round(controller.control_dt / physics_dt))
        if sim.control is not None and sim.step_index % substeps != 0:
            return replace(sim, y=y, tick=None)

        control = controller.update(y[0:2], y[2:4], y[4:6], y[6:8])
        return replace(sim, y=y, control=control, tick=(y.copy(), control))

    def run_scenario(self, config: ScenarioConfig) -> Tuple[TrajectoryLog, RecoveryOutcome]:
        """
        Simulate the whole horizon, logging every control tick.

        Args:
            config: Validated scenario

        Returns:
            Tuple of (trajectory log, classified outcome)
        """
        settings = config.simulation
        dt = settings.physics_dt_s
        controller = self.build_controller(config)
        sim = self.initial_sim_state(config)
        total_steps = settings.control_ticks * settings.substeps

        samples: List[TrajectorySample] = []
        for _ in range(total_steps):
            sim = self.step(sim, controller, dt)
            if sim.tick is not None:
                samples.append(self._sample(len(samples) * settings.control_dt_s, *sim.tick, config.robot))

        # final tick at the horizon is observed but not integrated
        sim = self._observe(replace(sim, control=None), controller, dt)
        samples.append(self._sample(len(samples) * settings.control_dt_s, *sim.tick, config.robot))

        log = TrajectoryLog(reference_cp_m=tuple(controller.reference.tolist()), samples=samples)
        outcome = self.classify_outcome(log, config)
        logger.info("Scenario finished: %s (max CP excursion %.4f m)", outcome.verdict.value, outcome.max_cp_excursion_m)
        return log, outcome

    def _sample(self, time_s: float, y: np.ndarray, control: ControlOutput, params: RobotParams) -> TrajectorySample:
        xi = y[0:2] + y[2:4] / params.omega
        return TrajectorySample(
            time_s=time_s,
            com_m=(float(y[0]), float(y[1])),
            com_vel_mps=(float(y[2]), float(y[3])),
            xi_m=(float(xi[0]), float(xi[1])),
            cop_m=(float(control.cop[0]), float(control.cop[1])),
            cmp_m=(float(control.cmp[0]), float(control.cmp[1])),
            hdot_Nm=(float(control.hdot[0]), float(control.hdot[1])),
            flywheel_angle_rad=(float(y[4]), float(y[5])),
            command=control.command,
            cop_saturated=control.cop_saturated,
            flywheel_saturated=control.flywheel_saturated,
        )

    def classify_outcome(self, log: TrajectoryLog, config: ScenarioConfig) -> RecoveryOutcome:
        """
        Classify a complete log. First match wins:

        1. Fell: CoM farther than the fall threshold from the polygon center,
           or the CP moving monotonically away outside the polygon over the
           final window.
        2. FlywheelExhausted: flywheel at its angle limit while the CP is
           outside the polygon.
        3. Recovered: CP within the settle tolerance of the reference over the
           final window.
        Anything else did not regain balance and counts as Fell.
        """
        criteria = config.outcome
        polygon = self.support_polygon(config)
        center = np.array(polygon.center)
        reference = np.array(log.reference_cp_m)

        if not log.samples:
            return RecoveryOutcome(
                verdict=Verdict.RECOVERED, max_cp_excursion_m=0.0,
                time_to_settle_s=0.0, cop_saturated_fraction=0.0, reason="empty log",
            )

        times = np.array([s.time_s for s in log.samples])
        com = np.array([s.com_m for s in log.samples])
        xi = np.array([s.xi_m for s in log.samples])
        angles = np.abs(np.array([s.flywheel_angle_rad for s in log.samples]))
        deviation = np.linalg.norm(xi - reference, axis=1)
        xi_inside = np.array([polygon.contains(tuple(point)) for point in xi])

        max_excursion = float(deviation.max())
        saturated_fraction = float(np.mean([s.cop_saturated for s in log.samples]))
        settle_time = self._settle_time(times, deviation, criteria.settle_tolerance_m, config)
        step_capturable = all(
            self.capture_points.capture_region_intersects(
                CapturePointState(xi_m=s.xi_m), criteria.capture_region_radius_m, polygon
            )
            for s in log.samples
        )

        def outcome(verdict: Verdict, reason: str) -> RecoveryOutcome:
            return RecoveryOutcome(
                verdict=verdict,
                max_cp_excursion_m=max_excursion,
                time_to_settle_s=settle_time if verdict == Verdict.RECOVERED else None,
                cop_saturated_fraction=saturated_fraction,
                step_capturable=step_capturable,
                reason=reason,
            )

        fall_threshold = criteria.fall_threshold_factor * config.foot.length_m / 2
        if np.any(np.linalg.norm(com - center, axis=1) > fall_threshold):
            return outcome(Verdict.FELL, f"CoM left the {fall_threshold:.3f} m fall radius")

        window = times >= times[-1] - criteria.settle_window_s
        final_deviation = deviation[window]
        if (
            len(final_deviation) > 1
            and np.all(np.diff(final_deviation) > 0)
            and not xi_inside[-1]
        ):
            return outcome(Verdict.FELL, "CP diverging outside the support polygon")

        limit = config.robot.flywheel_angle_limit_rad
        if limit > 0:
            # braking stops the flywheel between ticks, up to half a tick of full braking short of the limit
            robot = config.robot
            max_accel = robot.flywheel_torque_limit_Nm / robot.flywheel_inertia_kgm2
            margin = 0.5 * max_accel * config.simulation.control_dt_s ** 2
            at_limit = np.any(angles >= limit - margin - 1e-12, axis=1)
            if np.any(at_limit & ~xi_inside):
                return outcome(Verdict.FLYWHEEL_EXHAUSTED, "flywheel angle limit reached with the CP outside")

        if np.all(final_deviation < criteria.settle_tolerance_m):
            return outcome(Verdict.RECOVERED, "CP settled at the reference")

        return outcome(Verdict.FELL, "CP did not settle within the horizon")

    def _settle_time(
        self,
        times: np.ndarray,
        deviation: np.ndarray,
        tolerance: float,
        config: ScenarioConfig
    ) -> Optional[float]:
        """Time from the last push until the CP stays within tolerance."""
        outside = np.nonzero(deviation >= tolerance)[0]
        if len(outside) == 0:
            settled_at = float(times[0])
        elif outside[-1] == len(times) - 1:
            return None
        else:
            settled_at = float(times[outside[-1] + 1])
        last_push = max((p.time_s for p in config.pushes), default=0.0)
        return max(0.0, settled_at - last_push)
