"""
Domain models for the push recovery simulator.
Defines robot parameters, centroidal state, geometry, controller settings,
scenario configuration and simulation results.

Vector conventions:
- Ground points, CoM quantities and CP errors are indexed by motion axis (x, y).
- Torques, joint angles, Hdot and flywheel quantities are indexed by rotation
  axis (about x, about y). Sagittal motion (x) pairs with rotation about y.
"""
import math
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vector2 = Tuple[float, float]


class GroundPointRole(str, Enum):
    """Which ground point a GroundPoint represents"""
    COP = "CoP"
    CMP = "CMP"
    CAPTURE_POINT = "CapturePoint"
    REFERENCE_CP = "ReferenceCP"


class ControlMode(str, Enum):
    """Torque-space PD (exact torque control) or position commands through servos"""
    TORQUE = "torque"
    POSITION = "position"


class DerivativeMode(str, Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite_difference"


class StanceMode(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"


class Verdict(str, Enum):
    RECOVERED = "Recovered"
    FELL = "Fell"
    FLYWHEEL_EXHAUSTED = "FlywheelExhausted"


def _finite(values: Vector2, name: str) -> Vector2:
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"{name} must be finite, got {values}")
    return values


class RobotParams(BaseModel):
    """
    Lumped LIPM + flywheel parameters.
    Defaults describe a 53 cm kid-size humanoid (3.6 kg, CoM at 35 cm).
    """
    model_config = ConfigDict(frozen=True)

    mass_kg: float = Field(3.6, gt=0, description="Total mass")
    com_height_m: float = Field(0.35, gt=0, description="Constant CoM height")
    gravity_mps2: float = Field(9.81, gt=0)
    # Order-of-magnitude estimate for the upper body of a 53 cm robot
    flywheel_inertia_kgm2: float = Field(0.05, gt=0)
    flywheel_angle_limit_rad: float = Field(0.6, ge=0)
    flywheel_torque_limit_Nm: float = Field(1.5, ge=0)

    @model_validator(mode='after')
    def validate_natural_frequency(self) -> 'RobotParams':
        omega = math.sqrt(self.gravity_mps2 / self.com_height_m)
        if not math.isfinite(omega) or omega <= 0:
            raise ValueError(f"Natural frequency must be finite and positive, got {omega}")
        return self

    @property
    def omega(self) -> float:
        return math.sqrt(self.gravity_mps2 / self.com_height_m)

    @property
    def vertical_force_N(self) -> float:
        """F_z = m*g under the constant-height assumption."""
        return self.mass_kg * self.gravity_mps2


class CentroidalState(BaseModel):
    """Planar CoM position/velocity and flywheel angle/rate (about x, about y)."""
    model_config = ConfigDict(frozen=True)

    com_pos_m: Vector2 = (0.0, 0.0)
    com_vel_mps: Vector2 = (0.0, 0.0)
    flywheel_angle_rad: Vector2 = (0.0, 0.0)
    flywheel_rate_radps: Vector2 = (0.0, 0.0)

    @field_validator('com_pos_m', 'com_vel_mps', 'flywheel_angle_rad', 'flywheel_rate_radps')
    @classmethod
    def check_finite(cls, value: Vector2, info) -> Vector2:
        return _finite(value, info.field_name)

    def angular_momentum(self, params: RobotParams) -> Vector2:
        """H = I * flywheel rate, per rotation axis."""
        inertia = params.flywheel_inertia_kgm2
        return (inertia * self.flywheel_rate_radps[0], inertia * self.flywheel_rate_radps[1])


class GroundPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    xy_m: Vector2
    role: GroundPointRole = GroundPointRole.COP

    @field_validator('xy_m')
    @classmethod
    def check_finite(cls, value: Vector2) -> Vector2:
        return _finite(value, "xy_m")


class CapturePointState(BaseModel):
    model_config = ConfigDict(frozen=True)

    xi_m: Vector2

    @field_validator('xi_m')
    @classmethod
    def check_finite(cls, value: Vector2) -> Vector2:
        return _finite(value, "xi_m")


class FootGeometry(BaseModel):
    """Rectangular foot; ankle offset is measured from the foot center."""
    model_config = ConfigDict(frozen=True)

    length_m: float = Field(0.15, gt=0)
    width_m: float = Field(0.08, gt=0)
    ankle_offset_m: Vector2 = (0.0, 0.0)

    @model_validator(mode='after')
    def validate_ankle_inside_foot(self) -> 'FootGeometry':
        if abs(self.ankle_offset_m[0]) >= self.length_m / 2:
            raise ValueError(
                f"Ankle offset x {self.ankle_offset_m[0]} must be inside half the foot length {self.length_m / 2}"
            )
        if abs(self.ankle_offset_m[1]) >= self.width_m / 2:
            raise ValueError(
                f"Ankle offset y {self.ankle_offset_m[1]} must be inside half the foot width {self.width_m / 2}"
            )
        return self


class SupportPolygon(BaseModel):
    """Axis-aligned contact rectangle in the ground frame."""
    model_config = ConfigDict(frozen=True)

    min_xy_m: Vector2
    max_xy_m: Vector2

    @model_validator(mode='after')
    def validate_bounds(self) -> 'SupportPolygon':
        if not (self.min_xy_m[0] < self.max_xy_m[0] and self.min_xy_m[1] < self.max_xy_m[1]):
            raise ValueError(f"Polygon min {self.min_xy_m} must be below max {self.max_xy_m}")
        return self

    @property
    def center(self) -> Vector2:
        return (
            0.5 * (self.min_xy_m[0] + self.max_xy_m[0]),
            0.5 * (self.min_xy_m[1] + self.max_xy_m[1]),
        )

    def contains(self, point: Vector2) -> bool:
        """Closed-set containment: boundary points are inside."""
        return (
            self.min_xy_m[0] <= point[0] <= self.max_xy_m[0]
            and self.min_xy_m[1] <= point[1] <= self.max_xy_m[1]
        )


class StanceConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: StanceMode = StanceMode.SINGLE
    center_m: Vector2 = (0.0, 0.0)
    feet_separation_m: float = Field(0.1, gt=0, description="Lateral distance between foot centers")


class InitialConditions(BaseModel):
    model_config = ConfigDict(frozen=True)

    com_pos_m: Vector2 = (0.0, 0.0)
    com_vel_mps: Vector2 = (0.0, 0.0)


class PdGains(BaseModel):
    model_config = ConfigDict(frozen=True)

    kp: float = Field(..., ge=0)
    kd: float = Field(0.0, ge=0)


class ServoParams(BaseModel):
    """Proportional position servo with velocity damping and torque saturation."""
    model_config = ConfigDict(frozen=True)

    stiffness_Nm_per_rad: float = Field(..., ge=0)
    damping_Nm_s_per_rad: float = Field(0.0, ge=0)
    torque_limit_Nm: float = Field(..., ge=0)


class JointLimits(BaseModel):
    """Symmetric range limits on the commanded offsets, in rad."""
    model_config = ConfigDict(frozen=True)

    ankle_rad: float = Field(0.3, ge=0)
    hip_rad: float = Field(0.5, ge=0)
    arm_rad: float = Field(0.5, ge=0)
    elbow_rad: float = Field(0.5, ge=0)


class JointWeights(BaseModel):
    """Effectiveness of each upper-body joint torque on the centroidal moment."""
    model_config = ConfigDict(frozen=True)

    hip: float = Field(1.0, ge=0)
    arm: float = Field(0.3, ge=0)
    elbow: float = Field(0.1, ge=0)


class ControllerConfig(BaseModel):
    """
    Strategy flags, PD gains and servo models.

    Torque-mode gains left unset resolve to kp = 2*m*g and kd = 0.1*m*g/omega
    for the configured robot.
    """
    model_config = ConfigDict(frozen=True)

    mode: ControlMode = ControlMode.POSITION
    ankle: bool = True
    hip: bool = True
    arm: bool = True
    derivative: DerivativeMode = DerivativeMode.ANALYTIC

    torque_ankle_gains: Optional[PdGains] = None
    torque_hip_gains: Optional[PdGains] = None

    # Position gains in rad per metre of CP error
    ankle_gains: PdGains = PdGains(kp=1.0, kd=0.0)
    hip_gains: PdGains = PdGains(kp=8.0, kd=0.0)
    arm_gains: PdGains = PdGains(kp=8.0, kd=0.0)
    elbow_gains: PdGains = PdGains(kp=8.0, kd=0.0)
    joint_limits: JointLimits = JointLimits()
    weights: JointWeights = JointWeights()

    # Ankle stiffness 2*m*g*z_c with damping stiffness/omega for the default robot
    ankle_servo: ServoParams = ServoParams(
        stiffness_Nm_per_rad=24.72, damping_Nm_s_per_rad=4.67, torque_limit_Nm=10.0
    )
    hip_servo: ServoParams = ServoParams(
        stiffness_Nm_per_rad=10.0, damping_Nm_s_per_rad=1.41, torque_limit_Nm=1.5
    )
    arm_servo: ServoParams = ServoParams(
        stiffness_Nm_per_rad=10.0, damping_Nm_s_per_rad=1.41, torque_limit_Nm=1.5
    )
    elbow_servo: ServoParams = ServoParams(
        stiffness_Nm_per_rad=10.0, damping_Nm_s_per_rad=1.41, torque_limit_Nm=1.5
    )

    def with_strategies(self, ankle: bool, hip: bool, arm: bool) -> 'ControllerConfig':
        return self.model_copy(update={'ankle': ankle, 'hip': hip, 'arm': arm})


class CpError(BaseModel):
    """xi_error = xi_ref - xi and its rate, indexed by motion axis."""
    model_config = ConfigDict(frozen=True)

    error_m: Vector2
    error_rate_mps: Vector2

    @field_validator('error_m', 'error_rate_mps')
    @classmethod
    def check_finite(cls, value: Vector2, info) -> Vector2:
        return _finite(value, info.field_name)


class TorqueCommand(BaseModel):
    model_config = ConfigDict(frozen=True)

    ankle_Nm: Vector2 = (0.0, 0.0)
    hip_Nm: Vector2 = (0.0, 0.0)


class PositionCommand(BaseModel):
    """Joint offsets added to the nominal posture, indexed by rotation axis."""
    model_config = ConfigDict(frozen=True)

    ankle_rad: Vector2 = (0.0, 0.0)
    hip_rad: Vector2 = (0.0, 0.0)
    arm_rad: Vector2 = (0.0, 0.0)
    elbow_rad: Vector2 = (0.0, 0.0)


class PushEvent(BaseModel):
    """
    External push. Zero duration is an instantaneous velocity jump,
    otherwise a constant force impulse/duration over the window.
    """
    model_config = ConfigDict(frozen=True)

    time_s: float = Field(0.1, ge=0)
    impulse_Ns: Vector2 = (0.0, 0.0)
    duration_s: float = Field(0.0, ge=0)

    @property
    def force_N(self) -> Vector2:
        if self.duration_s == 0:
            return (0.0, 0.0)
        return (self.impulse_Ns[0] / self.duration_s, self.impulse_Ns[1] / self.duration_s)


class SimulationSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    physics_dt_s: float = Field(0.001, gt=0)
    # 100 Hz control loop
    control_dt_s: float = Field(0.01, gt=0)
    horizon_s: float = Field(3.0, gt=0)
    rng_seed: Optional[int] = None

    @model_validator(mode='after')
    def validate_rates(self) -> 'SimulationSettings':
        ratio = self.control_dt_s / self.physics_dt_s
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"physics_dt_s {self.physics_dt_s} must divide control_dt_s {self.control_dt_s} exactly"
            )
        ticks = self.horizon_s / self.control_dt_s
        if abs(ticks - round(ticks)) > 1e-9:
            raise ValueError(
                f"horizon_s {self.horizon_s} must be a whole number of control periods"
            )
        return self

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt_s / self.physics_dt_s))

    @property
    def control_ticks(self) -> int:
        return int(round(self.horizon_s / self.control_dt_s))


class OutcomeCriteria(BaseModel):
    model_config = ConfigDict(frozen=True)

    fall_threshold_factor: float = Field(3.0, gt=0, description="Multiple of the foot half-length")
    settle_tolerance_m: float = Field(0.005, gt=0)
    settle_window_s: float = Field(0.5, gt=0)
    # Placeholder extent, the capture region size is not calibrated
    capture_region_radius_m: float = Field(0.05, ge=0)


class ScenarioConfig(BaseModel):
    """Complete description of one push recovery experiment."""
    model_config = ConfigDict(frozen=True)

    robot: RobotParams = RobotParams()
    foot: FootGeometry = FootGeometry()
    stance: StanceConfig = StanceConfig()
    initial: InitialConditions = InitialConditions()
    controller: ControllerConfig = ControllerConfig()
    pushes: List[PushEvent] = Field(default_factory=list)
    simulation: SimulationSettings = SimulationSettings()
    outcome: OutcomeCriteria = OutcomeCriteria()

    @model_validator(mode='after')
    def validate_pushes(self) -> 'ScenarioConfig':
        for push in self.pushes:
            if push.time_s > self.simulation.horizon_s:
                raise ValueError(
                    f"Push at {push.time_s} s is after the horizon {self.simulation.horizon_s} s"
                )
        return self


class TrajectorySample(BaseModel):
    """One logged control tick."""
    time_s: float
    com_m: Vector2
    com_vel_mps: Vector2
    xi_m: Vector2
    cop_m: Vector2
    cmp_m: Vector2
    hdot_Nm: Vector2
    flywheel_angle_rad: Vector2
    command: PositionCommand
    cop_saturated: bool
    flywheel_saturated: bool


class TrajectoryLog(BaseModel):
    reference_cp_m: Vector2 = (0.0, 0.0)
    samples: List[TrajectorySample] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_time_order(self) -> 'TrajectoryLog':
        for before, after in zip(self.samples, self.samples[1:]):
            if after.time_s <= before.time_s:
                raise ValueError(f"Sample times must increase, got {before.time_s} then {after.time_s}")
        return self

    def __len__(self) -> int:
        return len(self.samples)


class RecoveryOutcome(BaseModel):
    verdict: Verdict
    max_cp_excursion_m: float
    time_to_settle_s: Optional[float] = None
    cop_saturated_fraction: float = Field(..., ge=0, le=1)
    # CP stayed within one step (capture region radius) of the support polygon
    step_capturable: bool = True
    reason: str = ""


class EnvelopeResult(BaseModel):
    """Largest recovered impulse along a direction, or the search limit if none fell."""
    label: str = ""
    impulse_Ns: float
    bounded: bool = True
    evaluations: int = 0


class ScenarioSummary(BaseModel):
    name: str
    verdict: Verdict
    max_cp_excursion_m: float
    time_to_settle_s: Optional[float] = None
    cop_saturated_fraction: float
    step_capturable: bool = True
    runtime_s: float


class SummaryReport(BaseModel):
    """Per-scenario verdicts and envelope values per strategy combination."""
    scenarios: List[ScenarioSummary] = Field(default_factory=list)
    envelopes: List[EnvelopeResult] = Field(default_factory=list)
    envelope_runtime_s: float = 0.0


class CliRequest(BaseModel):
    subcommand: str
    config_path: Optional[str] = None
    output_dir: str = "results"
    overrides: List[str] = Field(default_factory=list)
    quiet: bool = False
    workers: int = Field(1, ge=1)


class ConfigIssue(BaseModel):
    line: Optional[int] = None
    key: str = ""
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line is not None else "override"
        key = f" [{self.key}]" if self.key else ""
        return f"{where}{key}: {self.message}"


class ValidationResult(BaseModel):
    """
    Result of scenario validation.
    Contains the validated config (if any) and every error encountered.
    """
    config: Optional[ScenarioConfig] = None
    errors: List[str] = Field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        """Returns True if no validation errors."""
        return len(self.errors) == 0
