"""
Recoverable-push envelope search.
Bisects the impulse magnitude between a recovered and a fallen push.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple

from config import Config
from models import EnvelopeResult, PushEvent, ScenarioConfig, Verdict
from services.simulator import SimulationService

logger = logging.getLogger(__name__)

# Strategy ladder: label -> (ankle, hip, arm)
STRATEGY_LADDER: List[Tuple[str, Tuple[bool, bool, bool]]] = [
    ("off", (False, False, False)),
    ("ankle", (True, False, False)),
    ("ankle+hip", (True, True, False)),
    ("ankle+hip+arm", (True, True, True)),
]


class EnvelopeService:
    """
    Service responsible for measuring how hard a scenario can be pushed
    along a direction before the robot falls.
    """

    def __init__(self, app_config: Optional[Config] = None, simulator: Optional[SimulationService] = None):
        self.app_config = app_config or Config()
        self.simulator = simulator or SimulationService()

    def max_recoverable_push(
        self,
        config: ScenarioConfig,
        direction: Tuple[float, float],
        tolerance_Ns: float,
        label: str = ""
    ) -> EnvelopeResult:
        """
        Largest impulse magnitude along direction that is classified Recovered.

        Args:
            config: Scenario; its first push supplies timing and duration
            direction: Push direction, normalized here
            tolerance_Ns: Bracket width at which bisection stops
            label: Name carried into the result

        Returns:
            EnvelopeResult; bounded is False when no fall was found below the
            configured maximum impulse.
        """
        if tolerance_Ns <= 0:
            raise ValueError(f"tolerance_Ns must be positive, got {tolerance_Ns}")
        unit = self._unit(direction)
        evaluations = 0

        def recovers(magnitude: float) -> bool:
            nonlocal evaluations
            evaluations += 1
            _, outcome = self.simulator.run_scenario(self.push_scenario(config, unit, magnitude))
            logger.debug("%s impulse %.6f N*s -> %s", label or "envelope", magnitude, outcome.verdict.value)
            return outcome.verdict == Verdict.RECOVERED

        if not recovers(0.0):
            logger.warning("%s: scenario does not recover without a push", label or "envelope")
            return EnvelopeResult(label=label, impulse_Ns=0.0, bounded=True, evaluations=evaluations)

        low = 0.0
        high = self.app_config.envelope_initial_impulse_Ns
        while recovers(high):
            low = high
            if high >= self.app_config.envelope_max_impulse_Ns:
                logger.warning("%s: no fall found up to %.3f N*s", label or "envelope", high)
                return EnvelopeResult(label=label, impulse_Ns=high, bounded=False, evaluations=evaluations)
            high = min(2.0 * high, self.app_config.envelope_max_impulse_Ns)

        while high - low > tolerance_Ns:
            middle = 0.5 * (low + high)
            if recovers(middle):
                low = middle
            else:
                high = middle

        return EnvelopeResult(label=label, impulse_Ns=low, bounded=True, evaluations=evaluations)

    def strategy_ladder(
        self,
        config: ScenarioConfig,
        direction: Tuple[float, float],
        tolerance_Ns: float,
        workers: int = 1
    ) -> List[EnvelopeResult]:
        """Envelope for each rung of the strategy ladder, in ladder order."""
        jobs = [
            (self.app_config, self.with_strategies(config, *flags), direction, tolerance_Ns, label)
            for label, flags in STRATEGY_LADDER
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                return list(executor.map(_ladder_rung, jobs))
        return [_ladder_rung(job) for job in jobs]

    def with_strategies(self, config: ScenarioConfig, ankle: bool, hip: bool, arm: bool) -> ScenarioConfig:
        controller = config.controller.with_strategies(ankle, hip, arm)
        return config.model_copy(update={'controller': controller})

    def push_scenario(
        self,
        config: ScenarioConfig,
        direction: Tuple[float, float],
        magnitude: float
    ) -> ScenarioConfig:
        """Scenario with a single push of the given magnitude replacing any configured pushes."""
        template = config.pushes[0] if config.pushes else PushEvent(time_s=self.app_config.default_push_time_s)
        push = PushEvent(
            time_s=template.time_s,
            duration_s=template.duration_s,
            impulse_Ns=(magnitude * direction[0], magnitude * direction[1]),
        )
        return config.model_copy(update={'pushes': [push]})

    def push_direction(self, config: ScenarioConfig) -> Tuple[float, float]:
        """Direction of the first configured push, sagittal forward if none is set."""
        if config.pushes and any(config.pushes[0].impulse_Ns):
            return self._unit(config.pushes[0].impulse_Ns)
        return (1.0, 0.0)

    def _unit(self, direction: Tuple[float, float]) -> Tuple[float, float]:
        norm = math.hypot(direction[0], direction[1])
        if norm == 0 or not math.isfinite(norm):
            raise ValueError(f"Push direction must be a non-zero finite vector, got {direction}")
        return (direction[0] / norm, direction[1] / norm)


def _ladder_rung(job) -> EnvelopeResult:
    app_config, config, direction, tolerance, label = job
    return EnvelopeService(app_config).max_recoverable_push(config, direction, tolerance, label)
