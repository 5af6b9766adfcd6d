"""
Unit tests for the capture point push recovery simulator.
Tests dynamics, capture point algebra, controllers, simulation and the CLI.
"""
import math
import tempfile
import time
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import Config
from exceptions import ScenarioConfigError
from main import EXIT_CONFIG, EXIT_OK, EXIT_USAGE, main, run_cli
from models import (
    CapturePointState, CentroidalState, CliRequest, ControlMode, ControllerConfig,
    CpError, EnvelopeResult, FootGeometry, GroundPoint, GroundPointRole, InitialConditions,
    OutcomeCriteria, PdGains, PositionCommand, PushEvent, RobotParams, ScenarioConfig,
    ScenarioSummary, ServoParams, SimulationSettings, StanceConfig, StanceMode, SummaryReport,
    SupportPolygon, TrajectoryLog, TrajectorySample, Verdict
)
from services.capture_point import CapturePointService
from services.config_loader import ScenarioLoaderService
from services.controllers import ControllerService, PushRecoveryController
from services.dynamics import DynamicsService
from services.envelope import EnvelopeService
from services.output_writer import TRAJECTORY_COLUMNS, OutputWriterService
from services.simulator import SimulationService, rk4_step
from services.support_polygon import SupportPolygonService
from services.validator import ValidationService

DEFAULT_SCENARIO = Path(__file__).parent / "scenarios" / "default.cfg"

# m * g for the default robot
VERTICAL_FORCE = 3.6 * 9.81
OMEGA = math.sqrt(9.81 / 0.35)

TORQUE_OFF = ControllerConfig(mode=ControlMode.TORQUE, ankle=False, hip=False, arm=False)


def polygon_15x8() -> SupportPolygon:
    return SupportPolygon(min_xy_m=(-0.075, -0.04), max_xy_m=(0.075, 0.04))


class TestDynamics(unittest.TestCase):
    """Test LIPM and LIPM+flywheel equations of motion."""

    def setUp(self):
        """Set up test fixtures."""
        self.dynamics = DynamicsService()
        self.params = RobotParams()

    def test_natural_frequency(self):
        """Test omega = sqrt(g / z_c)."""
        self.assertAlmostEqual(self.dynamics.natural_frequency(self.params), 5.294202, places=6)
        self.assertEqual(self.dynamics.natural_frequency(RobotParams(gravity_mps2=9.81, com_height_m=9.81)), 1.0)
        self.assertAlmostEqual(
            self.dynamics.natural_frequency(RobotParams(com_height_m=1.0)), 3.13209, places=5
        )

    def test_lipm_accel_over_pivot_is_zero(self):
        state = CentroidalState(com_pos_m=(0.05, 0.0))
        accel = self.dynamics.com_accel_lipm(state, GroundPoint(xy_m=(0.05, 0.0)), self.params)
        self.assertEqual(accel, (0.0, 0.0))

    def test_lipm_accel_is_odd(self):
        """Test a 0.1 m lean accelerates at omega^2 * 0.1, mirrored for -0.1 m."""
        cop = GroundPoint(xy_m=(0.0, 0.0))
        forward = self.dynamics.com_accel_lipm(CentroidalState(com_pos_m=(0.1, 0.0)), cop, self.params)
        backward = self.dynamics.com_accel_lipm(CentroidalState(com_pos_m=(-0.1, 0.0)), cop, self.params)

        self.assertAlmostEqual(forward[0], OMEGA ** 2 * 0.1, places=12)
        self.assertEqual(backward[0], -forward[0])

    def test_flywheel_accel_reduces_to_lipm(self):
        state = CentroidalState(com_pos_m=(0.03, -0.02), com_vel_mps=(0.1, 0.0))
        cop = GroundPoint(xy_m=(0.01, 0.01))
        self.assertEqual(
            self.dynamics.com_accel_flywheel(state, cop, (0.0, 0.0), self.params),
            self.dynamics.com_accel_lipm(state, cop, self.params)
        )

    def test_flywheel_moment_decelerates_sagittal(self):
        """Test Hdot_y = 1 N*m gives -1 / (m z_c) sagittal acceleration."""
        state = CentroidalState()
        accel = self.dynamics.com_accel_flywheel(state, GroundPoint(xy_m=(0.0, 0.0)), (0.0, 1.0), self.params)
        self.assertAlmostEqual(accel[0], -0.793651, places=6)
        self.assertEqual(accel[1], 0.0)

    def test_cmp_equals_cop_without_moment(self):
        cop = GroundPoint(xy_m=(0.02, -0.01))
        cmp = self.dynamics.cmp_from_cop(cop, (0.0, 0.0), self.params)
        self.assertEqual(cmp.xy_m, cop.xy_m)
        self.assertEqual(cmp.role, GroundPointRole.CMP)

    def test_cmp_leaves_foot(self):
        """Test the CMP is not clamped to the support polygon."""
        cmp = self.dynamics.cmp_from_cop(GroundPoint(xy_m=(0.05, 0.0)), (0.0, 1.0), self.params)
        self.assertAlmostEqual(cmp.xy_m[0], 0.078316, places=6)
        self.assertFalse(polygon_15x8().contains(cmp.xy_m))

    def test_cop_from_ankle_torque(self):
        self.assertEqual(self.dynamics.cop_from_ankle_torque((0.0, 0.0), self.params).xy_m, (0.0, 0.0))
        self.assertAlmostEqual(
            self.dynamics.cop_from_ankle_torque((0.0, 2.64870), self.params).xy_m[0], 0.075, places=6
        )
        self.assertAlmostEqual(
            self.dynamics.cop_from_ankle_torque((0.0, 1.0), self.params).xy_m[0], 0.0283158, places=7
        )

    def test_moment_identity_on_random_states(self):
        """Test flywheel acceleration equals omega^2 (com - CMP) on 10^4 random states."""
        rng = np.random.default_rng(7)
        omega_sq = self.params.omega ** 2
        for _ in range(10_000):
            com = rng.uniform(-0.2, 0.2, size=2)
            cop = rng.uniform(-0.075, 0.075, size=2)
            hdot = rng.uniform(-2.0, 2.0, size=2)
            state = CentroidalState(com_pos_m=tuple(com))
            cop_point = GroundPoint(xy_m=tuple(cop))

            accel = self.dynamics.com_accel_flywheel(state, cop_point, tuple(hdot), self.params)
            cmp = self.dynamics.cmp_from_cop(cop_point, tuple(hdot), self.params)
            for axis in range(2):
                expected = omega_sq * (com[axis] - cmp.xy_m[axis])
                self.assertLessEqual(abs(accel[axis] - expected), 1e-12 * max(1.0, abs(expected)))

    def test_closed_form_matches_cosh_sinh(self):
        state = CentroidalState(com_pos_m=(0.01, 0.0), com_vel_mps=(0.05, 0.0))
        omega = self.params.omega
        t = 0.5
        result = self.dynamics.com_closed_form(state, GroundPoint(xy_m=(0.0, 0.0)), t, self.params)

        expected = 0.01 * math.cosh(omega * t) + 0.05 / omega * math.sinh(omega * t)
        self.assertAlmostEqual(result.com_pos_m[0], expected, places=12)
        self.assertEqual(result.com_pos_m[1], 0.0)

    def test_orbital_energy_zero_on_stable_manifold(self):
        omega = self.params.omega
        state = CentroidalState(com_pos_m=(0.02, 0.0), com_vel_mps=(-omega * 0.02, 0.0))
        energy = self.dynamics.orbital_energy(state, GroundPoint(xy_m=(0.0, 0.0)), self.params)
        self.assertAlmostEqual(energy[0], 0.0, places=15)

    def test_invalid_params(self):
        """Test non-positive mass and height are rejected."""
        with self.assertRaises(ValidationError):
            RobotParams(mass_kg=-1.0)
        with self.assertRaises(ValidationError):
            RobotParams(com_height_m=0.0)


class TestCapturePoint(unittest.TestCase):
    """Test capture point algebra."""

    def setUp(self):
        """Set up test fixtures."""
        self.cp = CapturePointService()
        self.params = RobotParams()

    def test_capture_point_at_rest_is_com(self):
        state = CentroidalState(com_pos_m=(0.03, -0.01))
        self.assertEqual(self.cp.capture_point(state, self.params).xi_m, (0.03, -0.01))

    def test_capture_point_from_velocity(self):
        state = CentroidalState(com_vel_mps=(0.5, 0.0))
        self.assertAlmostEqual(self.cp.capture_point(state, self.params).xi_m[0], 0.5 / OMEGA, places=14)

    def test_capture_point_is_linear(self):
        a = CentroidalState(com_pos_m=(0.01, 0.02), com_vel_mps=(0.1, -0.2))
        b = CentroidalState(com_pos_m=(-0.03, 0.005), com_vel_mps=(0.05, 0.3))
        both = CentroidalState(com_pos_m=(-0.02, 0.025), com_vel_mps=(0.15, 0.1))

        xi_a = self.cp.capture_point(a, self.params).xi_m
        xi_b = self.cp.capture_point(b, self.params).xi_m
        xi_both = self.cp.capture_point(both, self.params).xi_m
        for axis in range(2):
            self.assertAlmostEqual(xi_both[axis], xi_a[axis] + xi_b[axis], places=14)

    def test_com_rate_from_cp(self):
        rate = self.cp.com_rate_from_cp((0.0, 0.0), CapturePointState(xi_m=(0.5 / OMEGA, 0.0)), self.params)
        self.assertAlmostEqual(rate[0], 0.5, places=12)
        self.assertEqual(self.cp.com_rate_from_cp((0.1, 0.1), CapturePointState(xi_m=(0.1, 0.1)), self.params),
                         (0.0, 0.0))

    def test_com_rate_round_trip(self):
        state = CentroidalState(com_pos_m=(0.012, -0.034), com_vel_mps=(0.27, -0.11))
        xi = self.cp.capture_point(state, self.params)
        rate = self.cp.com_rate_from_cp(state.com_pos_m, xi, self.params)
        self.assertAlmostEqual(rate[0], 0.27, places=12)
        self.assertAlmostEqual(rate[1], -0.11, places=12)

    def test_cp_rate(self):
        xi = CapturePointState(xi_m=(0.1, 0.0))
        rate = self.cp.cp_rate(xi, GroundPoint(xy_m=(0.0, 0.0)), self.params)
        self.assertAlmostEqual(rate[0], 0.1 * OMEGA, places=14)
        self.assertEqual(self.cp.cp_rate(xi, GroundPoint(xy_m=(0.1, 0.0)), self.params), (0.0, 0.0))
        self.assertEqual(
            self.cp.cp_rate_cmp(xi, GroundPoint(xy_m=(0.0, 0.0), role=GroundPointRole.CMP), self.params), rate
        )

    def test_analytic_trajectory(self):
        cop = GroundPoint(xy_m=(0.0, 0.0))
        parked = self.cp.analytic_cp_trajectory(CapturePointState(xi_m=(0.0, 0.0)), cop, 1.0, self.params)
        self.assertEqual(parked.xi_m, (0.0, 0.0))

        moved = self.cp.analytic_cp_trajectory(CapturePointState(xi_m=(0.01, 0.0)), cop, 0.2, self.params)
        self.assertAlmostEqual(moved.xi_m[0], 0.01 * math.exp(0.2 * OMEGA), places=14)

        with self.assertRaises(ValueError):
            self.cp.analytic_cp_trajectory(CapturePointState(xi_m=(0.01, 0.0)), cop, -0.1, self.params)

    def test_rk4_matches_exponential(self):
        """Test RK4 integration of the CP rate at 1 ms against the closed form over 1 s."""
        pivot = np.array([0.01, -0.005])
        xi0 = np.array([0.02, 0.0])
        xi = xi0.copy()
        for _ in range(1000):
            xi = rk4_step(lambda y: self.cp.cp_rate_array(y, pivot, self.params), xi, 0.001)

        exact = self.cp.analytic_cp_trajectory(
            CapturePointState(xi_m=tuple(xi0)), GroundPoint(xy_m=tuple(pivot)), 1.0, self.params
        )
        np.testing.assert_allclose(xi, exact.xi_m, rtol=1e-6)

    def test_divergence_is_monotonic(self):
        cop = GroundPoint(xy_m=(0.0, 0.0))
        xi0 = CapturePointState(xi_m=(0.001, -0.002))
        distances = [
            math.hypot(*self.cp.analytic_cp_trajectory(xi0, cop, t, self.params).xi_m)
            for t in np.linspace(0.0, 1.0, 21)
        ]
        self.assertTrue(all(b > a for a, b in zip(distances, distances[1:])))

    def test_ankle_recoverable(self):
        polygon = polygon_15x8()
        self.assertTrue(self.cp.is_ankle_recoverable(CapturePointState(xi_m=(0.0, 0.0)), polygon))
        self.assertFalse(self.cp.is_ankle_recoverable(CapturePointState(xi_m=(0.0944462, 0.0)), polygon))
        self.assertTrue(self.cp.is_ankle_recoverable(CapturePointState(xi_m=(0.075, 0.0)), polygon))

    def test_capture_region(self):
        polygon = polygon_15x8()
        self.assertTrue(self.cp.capture_region_intersects(CapturePointState(xi_m=(0.1, 0.0)), 0.05, polygon))
        self.assertFalse(self.cp.capture_region_intersects(CapturePointState(xi_m=(0.2, 0.0)), 0.05, polygon))


class TestSupportPolygon(unittest.TestCase):
    """Test support polygon construction and CoP saturation."""

    def setUp(self):
        """Set up test fixtures."""
        self.polygons = SupportPolygonService()
        self.dynamics = DynamicsService()
        self.params = RobotParams()

    def test_single_foot_bounds(self):
        polygon = self.polygons.polygon_from_stance(FootGeometry(), (0.0, 0.0))
        self.assertAlmostEqual(polygon.min_xy_m[0], -0.075)
        self.assertAlmostEqual(polygon.max_xy_m[0], 0.075)
        self.assertAlmostEqual(polygon.min_xy_m[1], -0.04)
        self.assertAlmostEqual(polygon.max_xy_m[1], 0.04)

    def test_translation_shifts_bounds(self):
        base = self.polygons.polygon_from_stance(FootGeometry(), (0.0, 0.0))
        moved = self.polygons.polygon_from_stance(FootGeometry(), (0.2, -0.1))
        for axis, shift in ((0, 0.2), (1, -0.1)):
            self.assertAlmostEqual(moved.min_xy_m[axis] - base.min_xy_m[axis], shift, places=14)
            self.assertAlmostEqual(moved.max_xy_m[axis] - base.max_xy_m[axis], shift, places=14)

    def test_ankle_offset_moves_foot(self):
        polygon = self.polygons.polygon_from_stance(FootGeometry(ankle_offset_m=(-0.02, 0.0)), (0.0, 0.0))
        self.assertAlmostEqual(polygon.center[0], 0.02)

    def test_double_support_bounds(self):
        stance = StanceConfig(mode=StanceMode.DOUBLE, feet_separation_m=0.1)
        polygon = self.polygons.polygon_for_stance(FootGeometry(), stance)
        self.assertAlmostEqual(polygon.min_xy_m[1], -0.09)
        self.assertAlmostEqual(polygon.max_xy_m[1], 0.09)
        self.assertAlmostEqual(polygon.max_xy_m[0], 0.075)

    def test_degenerate_foot(self):
        with self.assertRaises(ValidationError):
            FootGeometry(length_m=0.0)

    def test_clamp_cop(self):
        polygon = polygon_15x8()
        self.assertEqual(self.polygons.clamp_cop(GroundPoint(xy_m=(0.0, 0.0)), polygon).xy_m, (0.0, 0.0))

        clamped = self.polygons.clamp_cop(GroundPoint(xy_m=(0.0944462, 0.0)), polygon)
        self.assertEqual(clamped.xy_m[0], 0.075)
        self.assertEqual(self.polygons.clamp_cop(clamped, polygon), clamped)

    def test_clamp_output_always_inside(self):
        rng = np.random.default_rng(11)
        polygon = polygon_15x8()
        for point in rng.uniform(-0.5, 0.5, size=(500, 2)):
            clamped = self.polygons.clamp_cop(GroundPoint(xy_m=tuple(point)), polygon)
            self.assertTrue(polygon.contains(clamped.xy_m))

    def test_max_ankle_torque(self):
        lower, upper = self.polygons.max_ankle_torque(polygon_15x8(), self.params)
        self.assertAlmostEqual(upper[1], 2.64870, places=5)
        self.assertAlmostEqual(lower[1], -2.64870, places=5)
        self.assertAlmostEqual(upper[0], 1.41264, places=5)
        self.assertAlmostEqual(lower[0], -1.41264, places=5)

    def test_max_torque_round_trip(self):
        """Test the torque bound maps back onto the polygon edge."""
        _, upper = self.polygons.max_ankle_torque(polygon_15x8(), self.params)
        edge = self.dynamics.cop_from_ankle_torque(upper, self.params)
        self.assertAlmostEqual(edge.xy_m[0], 0.075, places=15)
        self.assertAlmostEqual(edge.xy_m[1], 0.04, places=15)

    def test_clamp_commutes_with_torque_clamp(self):
        """Test clamping the CoP equals clamping the ankle torque first."""
        rng = np.random.default_rng(3)
        polygon = polygon_15x8()
        lower, upper = self.polygons.max_ankle_torque(polygon, self.params)
        for tau in rng.uniform(-6.0, 6.0, size=(1000, 2)):
            via_cop = self.polygons.clamp_cop(self.dynamics.cop_from_ankle_torque(tuple(tau), self.params), polygon)
            via_torque = self.dynamics.cop_from_ankle_torque(tuple(np.clip(tau, lower, upper)), self.params)
            for axis in range(2):
                self.assertAlmostEqual(via_cop.xy_m[axis], via_torque.xy_m[axis], places=15)


class TestControllers(unittest.TestCase):
    """Test PD laws, servo model and the per-run controller."""

    def setUp(self):
        """Set up test fixtures."""
        self.controllers = ControllerService()
        self.params = RobotParams()
        self.polygon = polygon_15x8()

    def error(self, ex: float, ey: float = 0.0, rate_x: float = 0.0) -> CpError:
        return CpError(error_m=(ex, ey), error_rate_mps=(rate_x, 0.0))

    def test_cp_error(self):
        reference = CapturePointState(xi_m=(0.0, 0.0))
        same = self.controllers.cp_error(reference, reference, (0.0, 0.0), (0.0, 0.0))
        self.assertEqual(same.error_m, (0.0, 0.0))

        ahead = self.controllers.cp_error(reference, CapturePointState(xi_m=(0.05, 0.0)), (0.0, 0.0), (0.0, 0.0))
        self.assertEqual(ahead.error_m[0], -0.05)

    def test_error_dynamics_closure(self):
        """Test the error rate follows omega * (e - (ref - p)) for a stationary reference."""
        omega = self.params.omega
        xi, cop = 0.03, 0.01
        cp = CapturePointService()
        xi_rate = cp.cp_rate(CapturePointState(xi_m=(xi, 0.0)), GroundPoint(xy_m=(cop, 0.0)), self.params)
        e = self.controllers.cp_error(
            CapturePointState(xi_m=(0.0, 0.0)), CapturePointState(xi_m=(xi, 0.0)), (0.0, 0.0), xi_rate
        )
        p_error = 0.0 - cop
        self.assertAlmostEqual(e.error_rate_mps[0], omega * (e.error_m[0] - p_error), places=14)

    def test_ankle_torque_pd(self):
        gains = PdGains(kp=50.0)
        self.assertEqual(self.controllers.ankle_torque_pd(self.error(0.0), gains, self.polygon, self.params),
                         (0.0, 0.0))

        tau = self.controllers.ankle_torque_pd(self.error(0.02), gains, self.polygon, self.params)
        self.assertAlmostEqual(tau[1], 1.0, places=12)
        self.assertEqual(tau[0], 0.0)

        saturated = self.controllers.ankle_torque_pd(self.error(0.2), gains, self.polygon, self.params)
        self.assertAlmostEqual(saturated[1], 2.64870, places=5)

    def test_ankle_saturation_is_monotonic(self):
        gains = PdGains(kp=50.0)
        torques = [
            self.controllers.ankle_torque_pd(self.error(e), gains, self.polygon, self.params)[1]
            for e in np.linspace(0.0, 0.3, 31)
        ]
        self.assertTrue(all(b >= a for a, b in zip(torques, torques[1:])))

    def test_hip_torque_pd_moves_cmp_toward_cp(self):
        """Test a 0.02 m error shifts the CMP 0.0283158 m past the CoP toward the CP."""
        e = self.error(0.02)
        self.assertEqual(self.controllers.hip_torque_pd(self.error(0.0), PdGains(kp=50.0), self.params),
                         (0.0, 0.0))

        tau = self.controllers.hip_torque_pd(e, PdGains(kp=50.0), self.params)
        self.assertAlmostEqual(tau[1], 1.0, places=12)

        hdot = self.controllers.hdot_from_hip_torque(tau)
        self.assertAlmostEqual(abs(hdot[1]), 1.0, places=12)
        cmp = DynamicsService().cmp_from_cop(GroundPoint(xy_m=(0.0, 0.0)), tuple(hdot), self.params)
        self.assertAlmostEqual(abs(cmp.xy_m[0]), 0.0283158, places=7)
        # CP sits at ref - e, so the CMP moves opposite to the error
        self.assertLess(cmp.xy_m[0] * e.error_m[0], 0.0)

    def test_hip_torque_clamped_to_flywheel_limit(self):
        tau = self.controllers.hip_torque_pd(self.error(0.2), PdGains(kp=50.0), self.params)
        self.assertAlmostEqual(tau[1], self.params.flywheel_torque_limit_Nm)

    def test_flywheel_guard_returns_flywheel_at_limit(self):
        """Test outward torque at the angle limit becomes full torque back toward zero."""
        e = self.error(0.02)
        tau = self.controllers.hip_torque_pd(e, PdGains(kp=50.0), self.params)
        hdot = self.controllers.hdot_from_hip_torque(tau)
        angle = (0.0, math.copysign(self.params.flywheel_angle_limit_rad, hdot[1]))
        guarded = self.controllers.hip_torque_pd(
            e, PdGains(kp=50.0), self.params, flywheel_angle=angle, flywheel_rate=(0.0, 0.0)
        )
        self.assertEqual(guarded[0], 0.0)
        self.assertAlmostEqual(guarded[1], -math.copysign(self.params.flywheel_torque_limit_Nm, tau[1]), places=12)

    def test_flywheel_guard_brakes_before_limit(self):
        """Test an outward rate whose stopping angle passes the limit is braked early."""
        # 2.3 rad/s needs 2.3^2 / (2 * 30) = 0.088 rad to stop at 1.5 N*m on 0.05 kg*m^2
        hdot, active = self.controllers.flywheel_guard(
            (0.0, 0.5), (0.0, 0.5), (0.0, 2.3), self.params, 0.01
        )
        self.assertTrue(active)
        self.assertLess(hdot[1], 0.0)

        far, active = self.controllers.flywheel_guard(
            (0.0, 0.5), (0.0, 0.0), (0.0, 2.0), self.params, 0.01
        )
        self.assertFalse(active)
        self.assertEqual(far[1], 0.5)

    def test_flywheel_guard_zero_limit_holds_flywheel(self):
        params = RobotParams(flywheel_angle_limit_rad=0.0)
        hdot, active = self.controllers.flywheel_guard((0.4, -1.0), (0.0, 0.0), (0.0, 0.0), params, 0.01)
        self.assertTrue(active)
        self.assertEqual(hdot.tolist(), [0.0, 0.0])

    def test_flywheel_guard_brakes_outward_rate(self):
        hdot, active = self.controllers.flywheel_guard(
            (0.0, 0.0), (0.0, 0.6), (0.0, 2.0), self.params, 0.01
        )
        self.assertTrue(active)
        self.assertAlmostEqual(hdot[1], -self.params.flywheel_torque_limit_Nm)

    def test_flywheel_guard_allows_inward_torque(self):
        hdot, active = self.controllers.flywheel_guard(
            (0.0, -1.0), (0.0, 0.6), (0.0, 0.0), self.params, 0.01
        )
        self.assertFalse(active)
        self.assertEqual(hdot[1], -1.0)

    def test_position_command(self):
        config = ControllerConfig(ankle_gains=PdGains(kp=4.0))
        zero = self.controllers.position_command_pd(self.error(0.0), config)
        self.assertEqual(zero, PositionCommand())

        command = self.controllers.position_command_pd(self.error(0.05), config)
        self.assertAlmostEqual(command.ankle_rad[1], 0.2, places=12)
        self.assertEqual(command.ankle_rad[0], 0.0)

    def test_position_command_clipped_to_joint_limits(self):
        command = self.controllers.position_command_pd(self.error(0.5), ControllerConfig())
        self.assertEqual(command.hip_rad[1], 0.5)
        self.assertEqual(command.ankle_rad[1], 0.3)

    def test_position_command_gated_off(self):
        config = ControllerConfig(ankle=False, hip=False, arm=False)
        command = self.controllers.position_command_pd(self.error(0.05, -0.02), config)
        self.assertEqual(command, PositionCommand())

    def test_arm_needs_hip(self):
        config = ControllerConfig(ankle=True, hip=False, arm=True)
        command = self.controllers.position_command_pd(self.error(0.05), config)
        self.assertEqual(command.arm_rad, (0.0, 0.0))
        self.assertEqual(command.elbow_rad, (0.0, 0.0))

    def test_servo_torque(self):
        servo = ServoParams(stiffness_Nm_per_rad=20.0, torque_limit_Nm=2.6487)
        self.assertEqual(self.controllers.servo_torque(0.3, 0.3, 0.0, servo), 0.0)
        self.assertAlmostEqual(self.controllers.servo_torque(0.1, 0.0, 0.0, servo), 2.0, places=12)
        self.assertEqual(self.controllers.servo_torque(1.0, 0.0, 0.0, servo), 2.6487)

    def test_servo_damping_opposes_rate(self):
        servo = ServoParams(stiffness_Nm_per_rad=20.0, damping_Nm_s_per_rad=1.0, torque_limit_Nm=5.0)
        self.assertAlmostEqual(self.controllers.servo_torque(0.0, 0.0, 2.0, servo), -2.0, places=12)

    def test_default_torque_gains(self):
        ankle, hip = self.controllers.resolve_torque_gains(ControllerConfig(), self.params)
        self.assertAlmostEqual(ankle.kp / VERTICAL_FORCE, 2.0, places=12)
        self.assertAlmostEqual(hip.kd, 0.1 * VERTICAL_FORCE / self.params.omega, places=12)

    def test_torque_mode_update_saturates_cop(self):
        """Test a CP past the toe puts the CoP on the toe edge and flags saturation."""
        controller = PushRecoveryController(
            ControllerConfig(mode=ControlMode.TORQUE, hip=False, arm=False), self.params, self.polygon, 0.01
        )
        output = controller.update(np.array([0.0, 0.0]), np.array([0.5, 0.0]), np.zeros(2), np.zeros(2))
        self.assertTrue(output.cop_saturated)
        self.assertAlmostEqual(output.cop[0], 0.075, places=12)
        self.assertTrue(self.polygon.contains(tuple(output.cop)))

    def test_torque_mode_hip_puts_cmp_outside(self):
        controller = PushRecoveryController(
            ControllerConfig(mode=ControlMode.TORQUE, arm=False), self.params, self.polygon, 0.01
        )
        output = controller.update(np.array([0.0, 0.0]), np.array([0.5, 0.0]), np.zeros(2), np.zeros(2))
        self.assertTrue(self.polygon.contains(tuple(output.cop)))
        self.assertFalse(self.polygon.contains(tuple(output.cmp)))
        self.assertGreater(output.cmp[0], output.cop[0])

    def test_position_mode_upper_body_moment_within_torque_limit(self):
        """Test hip, arm and elbow torques together never exceed the flywheel torque limit."""
        controller = PushRecoveryController(ControllerConfig(), self.params, self.polygon, 0.01)
        output = controller.update(np.array([0.0, 0.0]), np.array([0.8, 0.0]), np.zeros(2), np.zeros(2))
        limit = self.params.flywheel_torque_limit_Nm
        self.assertAlmostEqual(abs(output.hdot[1]), limit, places=12)
        self.assertLessEqual(abs(output.torques.hip_Nm[1]), limit)
        self.assertTrue(output.flywheel_saturated)

    def test_passive_posture_servo_tracks_capture_point(self):
        """Test the posture servos alone put the CoP at twice the CP offset."""
        controller = PushRecoveryController(
            ControllerConfig(ankle=False, hip=False, arm=False), self.params, self.polygon, 0.01
        )
        com = np.array([0.005, 0.0])
        com_vel = np.array([0.02, 0.0])
        output = controller.update(com, com_vel, np.zeros(2), np.zeros(2))
        xi = com[0] + com_vel[0] / self.params.omega
        self.assertAlmostEqual(output.cop[0], 2 * xi, delta=2e-4)
        self.assertEqual(output.command, PositionCommand())


def scenario(**updates) -> ScenarioConfig:
    return ScenarioConfig(**updates)


def sample(t: float, xi: float, com: float = 0.0, angle: float = 0.0) -> TrajectorySample:
    return TrajectorySample(
        time_s=t, com_m=(com, 0.0), com_vel_mps=(0.0, 0.0), xi_m=(xi, 0.0),
        cop_m=(0.0, 0.0), cmp_m=(0.0, 0.0), hdot_Nm=(0.0, 0.0), flywheel_angle_rad=(0.0, angle),
        command=PositionCommand(), cop_saturated=False, flywheel_saturated=False,
    )


class TestSimulation(unittest.TestCase):
    """Test integration, pushes and the closed-loop runs."""

    def setUp(self):
        """Set up test fixtures."""
        self.simulator = SimulationService()
        self.dynamics = DynamicsService()
        self.cp = CapturePointService()
        self.params = RobotParams()

    def test_equilibrium_is_fixed_point(self):
        config = scenario()
        controller = self.simulator.build_controller(config)
        sim = self.simulator.initial_sim_state(config)
        for _ in range(20):
            sim = self.simulator.step(sim, controller, config.simulation.physics_dt_s)
        self.assertLessEqual(float(np.max(np.abs(sim.y))), 1e-14)

    def test_equilibrium_run_recovers(self):
        log, outcome = self.simulator.run_scenario(scenario(controller=ControllerConfig(
            ankle=False, hip=False, arm=False
        )))
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)
        self.assertEqual(outcome.max_cp_excursion_m, 0.0)
        self.assertTrue(all(s.xi_m == (0.0, 0.0) for s in log.samples))

    def test_log_has_one_row_per_tick(self):
        log, _ = self.simulator.run_scenario(scenario())
        self.assertEqual(len(log), 301)
        self.assertAlmostEqual(log.samples[-1].time_s, 3.0)

    def test_uncontrolled_run_matches_closed_form(self):
        """Test a fixed-CoP run against cosh/sinh over 1 s at 1 ms."""
        initial = InitialConditions(com_pos_m=(0.01, -0.005), com_vel_mps=(0.02, 0.01))
        started = time.perf_counter()
        log, _ = self.simulator.run_scenario(scenario(
            initial=initial, controller=TORQUE_OFF, simulation=SimulationSettings(horizon_s=1.0)
        ))
        self.assertLess(time.perf_counter() - started, 1.0)
        start =CentroidalState(com_pos_m=initial.com_pos_m, com_vel_mps=initial.com_vel_mps)
        cop = GroundPoint(xy_m=(0.0, 0.0))
        for s in log.samples:
            exact = self.dynamics.com_closed_form(start, cop, s.time_s, self.params)
            np.testing.assert_allclose(s.com_m, exact.com_pos_m, rtol=1e-6, atol=1e-12)
            np.testing.assert_allclose(s.com_vel_mps, exact.com_vel_mps, rtol=1e-6, atol=1e-12)

    def test_uncontrolled_capture_point_is_exponential(self):
        initial = InitialConditions(com_pos_m=(0.01, 0.0), com_vel_mps=(0.02, 0.0))
        log, _ = self.simulator.run_scenario(scenario(
            initial=initial, controller=TORQUE_OFF, simulation=SimulationSettings(horizon_s=1.0)
        ))
        xi0 = CapturePointState(xi_m=log.samples[0].xi_m)
        cop = GroundPoint(xy_m=(0.0, 0.0))
        for s in log.samples:
            exact = self.cp.analytic_cp_trajectory(xi0, cop, s.time_s, self.params)
            np.testing.assert_allclose(s.xi_m, exact.xi_m, rtol=1e-6, atol=1e-12)

    def test_orbital_energy_is_conserved(self):
        omega = self.params.omega
        initial = InitialConditions(com_pos_m=(0.01, 0.0), com_vel_mps=(-0.9 * omega * 0.01, 0.0))
        log, _ = self.simulator.run_scenario(scenario(
            initial=initial, controller=TORQUE_OFF, simulation=SimulationSettings(horizon_s=1.0)
        ))
        cop = GroundPoint(xy_m=(0.0, 0.0))
        energies = [
            self.dynamics.orbital_energy(
                CentroidalState(com_pos_m=s.com_m, com_vel_mps=s.com_vel_mps), cop, self.params
            )[0]
            for s in log.samples
        ]
        self.assertLessEqual(max(abs(e - energies[0]) for e in energies), 1e-9)

    def test_step_halving_converges(self):
        """Test halving physics_dt changes the 1 s end state by at most 1e-8."""
        pushes = [PushEvent(time_s=0.1, impulse_Ns=(1.0, 0.3))]
        coarse, _ = self.simulator.run_scenario(scenario(
            pushes=pushes, simulation=SimulationSettings(horizon_s=1.0, physics_dt_s=0.001)
        ))
        fine, _ = self.simulator.run_scenario(scenario(
            pushes=pushes, simulation=SimulationSettings(horizon_s=1.0, physics_dt_s=0.0005)
        ))
        a, b = coarse.samples[-1], fine.samples[-1]
        for field in ('com_m', 'com_vel_mps', 'xi_m', 'flywheel_angle_rad'):
            np.testing.assert_allclose(getattr(a, field), getattr(b, field), rtol=0, atol=1e-8)

    def test_apply_push(self):
        state = CentroidalState()
        unchanged, window = self.simulator.apply_push(state, PushEvent(impulse_Ns=(0.0, 0.0)), self.params)
        self.assertEqual(unchanged, state)
        self.assertIsNone(window)

        pushed, _ = self.simulator.apply_push(state, PushEvent(impulse_Ns=(1.8, 0.0)), self.params)
        self.assertAlmostEqual(pushed.com_vel_mps[0], 0.5, places=14)
        self.assertAlmostEqual(self.cp.capture_point(pushed, self.params).xi_m[0], 0.5 / OMEGA, places=14)

    def test_force_window_delivers_impulse(self):
        _, window = self.simulator.apply_push(
            CentroidalState(), PushEvent(time_s=0.1, impulse_Ns=(0.5, 0.0), duration_s=0.01), self.params, 0.001
        )
        self.assertEqual((window.start_step, window.end_step), (100, 110))
        steps = window.end_step - window.start_step
        self.assertAlmostEqual(window.force_N[0] * steps * 0.001, 0.5, places=12)

    def test_impulse_and_force_window_agree(self):
        """Test duration 0 and 0.01 s pushes land the CP within 1 mm at the end of the window."""
        settings = SimulationSettings(horizon_s=0.2)
        instant, _ = self.simulator.run_scenario(scenario(
            controller=TORQUE_OFF, simulation=settings, pushes=[PushEvent(time_s=0.1, impulse_Ns=(0.5, 0.0))]
        ))
        spread, _ = self.simulator.run_scenario(scenario(
            controller=TORQUE_OFF, simulation=settings,
            pushes=[PushEvent(time_s=0.1, impulse_Ns=(0.5, 0.0), duration_s=0.01)]
        ))
        # tick 11 is the end of the window
        self.assertAlmostEqual(instant.samples[11].time_s, 0.11)
        self.assertLessEqual(abs(instant.samples[11].xi_m[0] - spread.samples[11].xi_m[0]), 1e-3)

    def test_cop_stays_in_polygon(self):
        log, _ = self.simulator.run_scenario(scenario(pushes=[PushEvent(time_s=0.1, impulse_Ns=(2.5, 0.8))]))
        polygon = self.simulator.support_polygon(scenario())
        for s in log.samples:
            self.assertTrue(polygon.contains(s.cop_m), f"CoP {s.cop_m} outside at t={s.time_s}")

    def test_torque_mode_converges(self):
        """Test kp = 2 m g, kd = 0.1 m g / omega removes a 0.02 m CP error within 2 s."""
        config = scenario(
            initial=InitialConditions(com_pos_m=(0.02, 0.0)),
            controller=ControllerConfig(mode=ControlMode.TORQUE, hip=False, arm=False),
            simulation=SimulationSettings(horizon_s=2.0),
        )
        log, outcome = self.simulator.run_scenario(config)
        errors = np.array([abs(s.xi_m[0]) for s in log.samples])
        self.assertLess(errors[-1], 1e-4)
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)

        # decay rate against omega (1 - kp/mg) / (1 + omega kd/mg)
        times = np.array([s.time_s for s in log.samples])
        window = (times >= 0.2) & (times <= 0.8)
        slope = np.polyfit(times[window], np.log(errors[window]), 1)[0]
        predicted = self.params.omega * (1 - 2.0) / (1 + 0.1)
        self.assertAlmostEqual(slope / predicted, 1.0, delta=0.15)

    def test_double_support_run(self):
        config = scenario(
            stance=StanceConfig(mode=StanceMode.DOUBLE),
            pushes=[PushEvent(time_s=0.1, impulse_Ns=(0.0, 1.5))],
        )
        _, outcome = self.simulator.run_scenario(config)
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)

    def test_finite_difference_mode_recovers(self):
        config = scenario(
            controller=ControllerConfig(derivative="finite_difference"),
            pushes=[PushEvent(time_s=0.1, impulse_Ns=(1.0, 0.0))],
        )
        _, outcome = self.simulator.run_scenario(config)
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)

    def control_ticks(self, config: ScenarioConfig):
        """(state, control output) at every control tick of a run."""
        controller = self.simulator.build_controller(config)
        sim = self.simulator.initial_sim_state(config)
        ticks = []
        for _ in range(config.simulation.control_ticks * config.simulation.substeps):
            sim = self.simulator.step(sim, controller, config.simulation.physics_dt_s)
            if sim.tick is not None:
                ticks.append(sim.tick)
        return ticks

    def test_torque_mode_flywheel_stays_within_angle_limit(self):
        limit = self.params.flywheel_angle_limit_rad
        for impulse in (0.8, 1.3, 1.6):
            log, _ = self.simulator.run_scenario(scenario(
                controller=ControllerConfig(mode=ControlMode.TORQUE),
                pushes=[PushEvent(time_s=0.1, impulse_Ns=(impulse, 0.0))],
            ))
            peak = max(abs(angle) for s in log.samples for angle in s.flywheel_angle_rad)
            self.assertLessEqual(peak, limit + 1e-9, f"flywheel reached {peak} rad after {impulse} N*s")

    def test_zero_angle_limit_keeps_flywheel_still(self):
        log, _ = self.simulator.run_scenario(scenario(
            robot=RobotParams(flywheel_angle_limit_rad=0.0),
            controller=ControllerConfig(mode=ControlMode.TORQUE),
            pushes=[PushEvent(time_s=0.1, impulse_Ns=(0.8, 0.0))],
        ))
        self.assertTrue(all(s.hdot_Nm == (0.0, 0.0) for s in log.samples))
        self.assertTrue(all(s.flywheel_angle_rad == (0.0, 0.0) for s in log.samples))

    def test_upper_body_moment_within_torque_limit(self):
        log, _ = self.simulator.run_scenario(scenario(pushes=[PushEvent(time_s=0.1, impulse_Ns=(2.0, 0.0))]))
        peak = max(abs(h) for s in log.samples for h in s.hdot_Nm)
        self.assertLessEqual(peak, self.params.flywheel_torque_limit_Nm + 1e-12)

    def test_hip_off_gives_no_moment(self):
        """Test without the hip strategy Hdot stays zero and the CMP is the CoP at every sample."""
        for mode in (ControlMode.POSITION, ControlMode.TORQUE):
            log, _ = self.simulator.run_scenario(scenario(
                controller=ControllerConfig(mode=mode, hip=False, arm=False),
                pushes=[PushEvent(time_s=0.1, impulse_Ns=(1.0, 0.4))],
            ))
            for s in log.samples:
                self.assertEqual(s.hdot_Nm, (0.0, 0.0))
                self.assertEqual(s.cmp_m, s.cop_m)

    def test_ankle_and_hip_moments_superpose(self):
        """Test the CMP and CP rate follow the summed ankle and hip torques at every tick."""
        config = scenario(
            controller=ControllerConfig(mode=ControlMode.TORQUE),
            pushes=[PushEvent(time_s=0.1, impulse_Ns=(0.3, 0.1))],
            simulation=SimulationSettings(horizon_s=1.0),
        )
        reference = np.array(self.simulator.support_polygon(config).center)
        for y, output in self.control_ticks(config):
            total = np.add(output.torques.ankle_Nm, output.torques.hip_Nm)
            expected_cmp = reference - np.array([total[1], total[0]]) / VERTICAL_FORCE
            np.testing.assert_allclose(output.cmp, expected_cmp, rtol=0, atol=1e-10)

            xi = CapturePointState(xi_m=tuple(y[0:2] + y[2:4] / self.params.omega))
            rate = self.cp.cp_rate_cmp(xi, GroundPoint(xy_m=tuple(output.cmp), role=GroundPointRole.CMP), self.params)
            expected_rate = self.params.omega * (np.array(xi.xi_m) - expected_cmp)
            np.testing.assert_allclose(rate, expected_rate, rtol=0, atol=1e-10)

    def test_commanded_torque_grows_with_push(self):
        """Test the pre-clamp ankle torque at the first tick after the push never shrinks as the push grows."""
        magnitudes = []
        for impulse in (0.5, 1.0, 2.0, 4.0):
            ticks = self.control_ticks(scenario(
                controller=ControllerConfig(mode=ControlMode.TORQUE),
                pushes=[PushEvent(time_s=0.1, impulse_Ns=(impulse, 0.0))],
                simulation=SimulationSettings(horizon_s=0.2),
            ))
            # tick 10 is the first update after the push at t = 0.1 s
            magnitudes.append(float(np.linalg.norm(ticks[10][1].raw_ankle_torque)))
        self.assertTrue(all(b >= a for a, b in zip(magnitudes, magnitudes[1:])), magnitudes)
        self.assertGreater(magnitudes[-1], magnitudes[0])


class TestOutcomeClassification(unittest.TestCase):
    """Test verdict rules."""

    def setUp(self):
        """Set up test fixtures."""
        self.simulator = SimulationService()
        self.config = scenario()

    def test_settled_log_recovers(self):
        log = TrajectoryLog(samples=[sample(0.1 * i, 0.001) for i in range(31)])
        outcome = self.simulator.classify_outcome(log, self.config)
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)
        self.assertEqual(outcome.time_to_settle_s, 0.0)

    def test_unbounded_growth_falls(self):
        log, outcome = self.simulator.run_scenario(scenario(
            initial=InitialConditions(com_pos_m=(0.01, 0.0)), controller=TORQUE_OFF
        ))
        self.assertEqual(outcome.verdict, Verdict.FELL)
        self.assertIsNone(outcome.time_to_settle_s)

    def test_com_past_threshold_falls(self):
        log = TrajectoryLog(samples=[sample(0.1 * i, 0.0, com=0.3 if i == 5 else 0.0) for i in range(31)])
        self.assertEqual(self.simulator.classify_outcome(log, self.config).verdict, Verdict.FELL)

    def test_flywheel_exhausted(self):
        """Test a flywheel at its limit with the CP parked outside the foot."""
        log = TrajectoryLog(samples=[sample(0.1 * i, 0.08, com=0.05, angle=0.6) for i in range(31)])
        outcome = self.simulator.classify_outcome(log, self.config)
        self.assertEqual(outcome.verdict, Verdict.FLYWHEEL_EXHAUSTED)

    def test_unsettled_counts_as_fell(self):
        log = TrajectoryLog(samples=[sample(0.1 * i, 0.02) for i in range(31)])
        outcome = self.simulator.classify_outcome(log, self.config)
        self.assertEqual(outcome.verdict, Verdict.FELL)

    def test_settle_time_measured_from_push(self):
        config = scenario(pushes=[PushEvent(time_s=0.5)])
        log = TrajectoryLog(samples=[sample(0.1 * i, 0.02 if i < 10 else 0.0) for i in range(31)])
        outcome = self.simulator.classify_outcome(log, config)
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)
        self.assertAlmostEqual(outcome.time_to_settle_s, 0.5)

    def test_step_capturable_uses_capture_region_radius(self):
        """Test a CP 0.125 m past the toe is out of reach of a 0.05 m step but not of a 0.2 m one."""
        log = TrajectoryLog(samples=[sample(0.1 * i, 0.2 if i == 3 else 0.0) for i in range(31)])
        self.assertFalse(self.simulator.classify_outcome(log, self.config).step_capturable)

        wide = scenario(outcome=OutcomeCriteria(capture_region_radius_m=0.2))
        self.assertTrue(self.simulator.classify_outcome(log, wide).step_capturable)

        settled = TrajectoryLog(samples=[sample(0.1 * i, 0.001) for i in range(31)])
        self.assertTrue(self.simulator.classify_outcome(settled, self.config).step_capturable)


class TestEnvelope(unittest.TestCase):
    """Test recoverable-push envelope search and the strategy ladder."""

    TOLERANCE = 5e-4

    @classmethod
    def setUpClass(cls):
        cls.envelope = EnvelopeService()
        cls.base = scenario(pushes=[PushEvent(time_s=0.1)])
        cls.ladder = cls.envelope.strategy_ladder(cls.base, (1.0, 0.0), cls.TOLERANCE)
        cls.by_label = {result.label: result for result in cls.ladder}

    def test_controller_off_matches_capturability_boundary(self):
        """Test the passive envelope equals m * omega * half foot length."""
        off = self.by_label["off"]
        self.assertTrue(off.bounded)
        self.assertAlmostEqual(off.impulse_Ns, 1.42939, delta=1e-3)
        self.assertAlmostEqual(off.impulse_Ns, 3.6 * OMEGA * 0.075, delta=1e-3)

    def test_ladder_order(self):
        self.assertEqual([r.label for r in self.ladder], ["off", "ankle", "ankle+hip", "ankle+hip+arm"])

    def test_ladder_is_monotonic(self):
        """Test each strategy recovers at least what the previous rung does."""
        off, ankle, hip, arm = (r.impulse_Ns for r in self.ladder)
        # the CoP cannot pass the foot edge, so the ankle alone ties the passive boundary
        self.assertGreaterEqual(ankle, off - self.TOLERANCE)
        self.assertGreater(hip, ankle + self.TOLERANCE)
        self.assertGreaterEqual(arm, hip - self.TOLERANCE)

    def test_torque_mode_ladder_is_strict(self):
        """Test with exact torque control each added strategy recovers strictly harder pushes."""
        tolerance = 2e-3
        base = self.base.model_copy(update={'controller': ControllerConfig(mode=ControlMode.TORQUE)})
        off, ankle, hip, _ = (r.impulse_Ns for r in self.envelope.strategy_ladder(base, (1.0, 0.0), tolerance))
        self.assertGreater(ankle, off + tolerance)
        self.assertGreater(hip, ankle + tolerance)

    def test_envelope_grows_with_flywheel_limits(self):
        """Test lowering the flywheel torque or angle limit never raises the envelope."""
        tolerance = 2e-3
        full = self.by_label["ankle+hip+arm"].impulse_Ns
        for robot in (RobotParams(flywheel_torque_limit_Nm=0.5), RobotParams(flywheel_angle_limit_rad=0.2)):
            limited = self.envelope.max_recoverable_push(
                self.base.model_copy(update={'robot': robot}), (1.0, 0.0), tolerance
            )
            self.assertLessEqual(limited.impulse_Ns, full + tolerance + self.TOLERANCE)

    def test_angular_momentum_saves_a_push_that_fells_passive_robot(self):
        """Test a push between the passive and full envelopes: off falls, full strategy recovers via the CMP."""
        impulse = 0.5 * (self.by_label["off"].impulse_Ns + self.by_label["ankle+hip+arm"].impulse_Ns)
        simulator = SimulationService()
        polygon = simulator.support_polygon(self.base)

        passive = self.envelope.push_scenario(
            self.envelope.with_strategies(self.base, False, False, False), (1.0, 0.0), impulse
        )
        _, passive_outcome = simulator.run_scenario(passive)
        self.assertEqual(passive_outcome.verdict, Verdict.FELL)

        full = self.envelope.push_scenario(
            self.envelope.with_strategies(self.base, True, True, True), (1.0, 0.0), impulse
        )
        log, outcome = simulator.run_scenario(full)
        self.assertEqual(outcome.verdict, Verdict.RECOVERED)
        self.assertTrue(any(
            polygon.contains(s.cop_m) and not polygon.contains(s.cmp_m) for s in log.samples
        ))

    def test_no_recovery_without_push_returns_zero(self):
        falling = scenario(initial=InitialConditions(com_pos_m=(0.01, 0.0)), controller=TORQUE_OFF,
                           simulation=SimulationSettings(horizon_s=1.0))
        result = self.envelope.max_recoverable_push(falling, (1.0, 0.0), 0.01)
        self.assertEqual(result.impulse_Ns, 0.0)
        self.assertEqual(result.evaluations, 1)

    def test_unbounded_search(self):
        """Test a search that never falls reports bounded=False at the cap."""
        app_config = Config(envelope_initial_impulse_Ns=0.1, envelope_max_impulse_Ns=0.2)
        result = EnvelopeService(app_config).max_recoverable_push(
            self.base, (1.0, 0.0), 0.01, label="capped"
        )
        self.assertFalse(result.bounded)
        self.assertEqual(result.impulse_Ns, 0.2)

    def test_invalid_direction_and_tolerance(self):
        with self.assertRaises(ValueError):
            self.envelope.max_recoverable_push(self.base, (0.0, 0.0), 0.01)
        with self.assertRaises(ValueError):
            self.envelope.max_recoverable_push(self.base, (1.0, 0.0), 0.0)

    def test_push_direction(self):
        config = scenario(pushes=[PushEvent(impulse_Ns=(0.0, -2.0))])
        self.assertEqual(self.envelope.push_direction(config), (0.0, -1.0))
        self.assertEqual(self.envelope.push_direction(scenario()), (1.0, 0.0))


class TestScenarioLoader(unittest.TestCase):
    """Test scenario file parsing and overrides."""

    def setUp(self):
        """Set up test fixtures."""
        self.loader = ScenarioLoaderService()

    def test_empty_config_gives_defaults(self):
        config = self.loader.parse_config("")
        self.assertEqual(config, ScenarioConfig())
        self.assertEqual(config.robot.mass_kg, 3.6)
        self.assertEqual(config.robot.com_height_m, 0.35)
        self.assertEqual((config.foot.length_m, config.foot.width_m), (0.15, 0.08))

    def test_negative_mass_reports_line(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            self.loader.parse_config("# robot\n[robot]\nmass_kg = -1\n")
        issue = ctx.exception.issues[0]
        self.assertEqual(issue.line, 3)
        self.assertIn("mass_kg", issue.key)
        self.assertIn("greater than 0", issue.message)

    def test_unknown_key(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            self.loader.parse_config("[robot]\nmass = 3\n")
        self.assertEqual(ctx.exception.issues[0].line, 2)
        self.assertIn("Unknown key", ctx.exception.issues[0].message)

    def test_unknown_section_reports_every_line(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            self.loader.parse_config("[bogus]\nx = 1\n")
        self.assertEqual([issue.line for issue in ctx.exception.issues], [1, 2])

    def test_type_mismatch(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            self.loader.parse_config("[simulation]\nhorizon_s = soon\n")
        self.assertEqual(ctx.exception.issues[0].line, 2)

    def test_vector_needs_two_values(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            self.loader.parse_config("[initial]\ncom_pos_m = 0.1, 0.2, 0.3\n")
        self.assertEqual(ctx.exception.issues[0].line, 2)

    def test_override_beats_file_beats_default(self):
        text = "[robot]\nmass_kg = 4.0\n"
        self.assertEqual(self.loader.parse_config(text).robot.mass_kg, 4.0)
        self.assertEqual(self.loader.parse_config(text, ["robot.mass_kg=5.0"]).robot.mass_kg, 5.0)
        self.assertEqual(self.loader.parse_config(text).robot.com_height_m, 0.35)

    def test_nested_sections_and_pushes(self):
        text = (
            "[controller]\nmode = torque\nhip = off\n"
            "[controller.torque_ankle_gains]\nkp = 70\n"
            "[push]\ntime_s = 0.2\nimpulse_Ns = 1.0, 0.0\n"
            "[push]\ntime_s = 1.0\nimpulse_Ns = 0.0, -0.5\nduration_s = 0.05\n"
        )
        config = self.loader.parse_config(text)
        self.assertEqual(config.controller.mode, ControlMode.TORQUE)
        self.assertFalse(config.controller.hip)
        self.assertEqual(config.controller.torque_ankle_gains, PdGains(kp=70.0))
        self.assertEqual(len(config.pushes), 2)
        self.assertEqual(config.pushes[1].impulse_Ns, (0.0, -0.5))
        self.assertEqual(config.pushes[1].duration_s, 0.05)

    def test_push_override_creates_push(self):
        config = self.loader.parse_config("", ["push.impulse_Ns=1.0, 0"])
        self.assertEqual(config.pushes, [PushEvent(impulse_Ns=(1.0, 0.0))])

    def test_bad_override(self):
        with self.assertRaises(ScenarioConfigError) as ctx:
            self.loader.parse_config("", ["mass_kg=3"])
        self.assertIsNone(ctx.exception.issues[0].line)

    def test_expand_sweep_grid_order(self):
        grid = self.loader.expand_sweep(["robot.mass_kg=3|4", "push.impulse_Ns=1, 0|2, 0"])
        self.assertEqual(grid, [
            ["robot.mass_kg=3", "push.impulse_Ns=1, 0"],
            ["robot.mass_kg=3", "push.impulse_Ns=2, 0"],
            ["robot.mass_kg=4", "push.impulse_Ns=1, 0"],
            ["robot.mass_kg=4", "push.impulse_Ns=2, 0"],
        ])

    def test_shipped_default_scenario(self):
        config = self.loader.load_from_file(DEFAULT_SCENARIO)
        self.assertEqual(config.pushes[0].impulse_Ns, (1.2, 0.0))
        self.assertEqual(config.robot, RobotParams())

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            self.loader.load_from_file(Path("does/not/exist.cfg"))


class TestValidation(unittest.TestCase):
    """Test that validation collects every problem without raising."""

    def setUp(self):
        """Set up test fixtures."""
        self.validator = ValidationService()

    def test_valid_text(self):
        result = self.validator.validate_text("[robot]\nmass_kg = 4\n")
        self.assertTrue(result.is_valid)
        self.assertEqual(result.config.robot.mass_kg, 4.0)

    def test_multiple_errors(self):
        result = self.validator.validate_text("[robot]\nmass_kg = -1\ncom_height_m = 0\n")
        self.assertFalse(result.is_valid)
        self.assertIsNone(result.config)
        self.assertEqual(len(result.errors), 2)
        self.assertTrue(result.errors[0].startswith("line 2"))
        self.assertTrue(result.errors[1].startswith("line 3"))

    def test_missing_file(self):
        result = self.validator.validate_file(Path("does/not/exist.cfg"))
        self.assertFalse(result.is_valid)


class TestOutputWriter(unittest.TestCase):
    """Test CSV and workbook output."""

    def setUp(self):
        """Set up test fixtures."""
        self.writer = OutputWriterService()
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_empty_log_writes_header_only(self):
        path = self.out / "empty.csv"
        self.writer.emit_csv(TrajectoryLog(), path)
        self.assertEqual(path.read_text(), ",".join(TRAJECTORY_COLUMNS) + "\n")

    def test_csv_schema(self):
        log, _ = SimulationService().run_scenario(scenario(
            pushes=[PushEvent(time_s=0.1, impulse_Ns=(1.0, 0.0))], simulation=SimulationSettings(horizon_s=0.5)
        ))
        path = self.out / "trajectory.csv"
        self.writer.emit_csv(log, path)

        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), TRAJECTORY_COLUMNS)
        self.assertEqual(len(frame), len(log))
        self.assertTrue(set(frame['sat_cop'].unique()) <= {0, 1})
        self.assertEqual(frame['xi_x'].iloc[0], 0.0)

    def test_unwritable_path(self):
        with self.assertRaises(OSError):
            self.writer.emit_csv(TrajectoryLog(), self.out / "missing" / "trajectory.csv")

    def test_summary_workbook(self):
        report = SummaryReport(
            scenarios=[ScenarioSummary(
                name="default", verdict=Verdict.RECOVERED, max_cp_excursion_m=0.05,
                time_to_settle_s=0.8, cop_saturated_fraction=0.1, step_capturable=False, runtime_s=0.4,
            )],
            envelopes=[EnvelopeResult(label="off", impulse_Ns=1.4294, evaluations=14)],
        )
        path = self.out / "summary.xlsx"
        self.writer.write_summary(report, path)

        envelope = pd.read_excel(path, sheet_name="Envelope")
        self.assertEqual(envelope['Strategy'].tolist(), ["off"])
        scenarios = pd.read_excel(path, sheet_name="Scenarios")
        self.assertEqual(scenarios['Verdict'].tolist(), ["Recovered"])
        self.assertEqual(scenarios['StepCapturable'].tolist(), [False])


class TestCli(unittest.TestCase):
    """Test subcommands and exit codes."""

    def setUp(self):
        """Set up test fixtures."""
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def request(self, subcommand: str, out: Path = None, overrides=None, config_path=DEFAULT_SCENARIO) -> CliRequest:
        return CliRequest(
            subcommand=subcommand,
            config_path=str(config_path) if config_path is not None else None,
            output_dir=str(out or self.out),
            overrides=overrides or ["simulation.horizon_s=0.5"],
            quiet=True,
        )

    def test_validate_default(self):
        self.assertEqual(run_cli(self.request("validate")), EXIT_OK)
        self.assertEqual(main(["validate", "--config", str(DEFAULT_SCENARIO), "--quiet"]), EXIT_OK)

    def test_validate_bad_file(self):
        bad = self.out / "bad.cfg"
        bad.write_text("[robot]\nmass_kg = -1\n")
        self.assertEqual(run_cli(self.request("validate", config_path=bad)), EXIT_CONFIG)

    def test_unknown_subcommand(self):
        self.assertEqual(main(["bogus"]), EXIT_USAGE)
        self.assertEqual(run_cli(self.request("bogus")), EXIT_USAGE)

    def test_missing_config(self):
        self.assertEqual(run_cli(self.request("run", config_path=None)), EXIT_USAGE)
        self.assertEqual(run_cli(self.request("run", config_path=self.out / "none.cfg")), EXIT_CONFIG)

    def test_run_writes_outputs(self):
        self.assertEqual(run_cli(self.request("run")), EXIT_OK)
        frame = pd.read_csv(self.out / "trajectory.csv")
        self.assertEqual(len(frame), 51)
        self.assertTrue((self.out / "summary.xlsx").exists())

    def test_run_is_byte_identical(self):
        first, second = self.out / "first", self.out / "second"
        self.assertEqual(run_cli(self.request("run", out=first)), EXIT_OK)
        self.assertEqual(run_cli(self.request("run", out=second)), EXIT_OK)
        self.assertEqual(
            (first / "trajectory.csv").read_bytes(), (second / "trajectory.csv").read_bytes()
        )

    def test_sweep_rows_follow_grid(self):
        overrides = ["simulation.horizon_s=0.5", "push.impulse_Ns=0.5, 0|1.0, 0"]
        self.assertEqual(run_cli(self.request("sweep", overrides=overrides)), EXIT_OK)
        frame = pd.read_csv(self.out / "sweep_summary.csv")
        self.assertEqual(frame['push.impulse_Ns'].tolist(), ["0.5, 0", "1.0, 0"])

    def test_invalid_override_is_config_error(self):
        self.assertEqual(run_cli(self.request("run", overrides=["robot.mass_kg=-2"])), EXIT_CONFIG)

    def test_unwritable_output_is_runtime_error(self):
        blocker = self.out / "file"
        blocker.write_text("")
        self.assertEqual(run_cli(self.request("run", out=blocker)), 3)


if __name__ == '__main__':
    unittest.main()
