"""
Services package for the capture point push recovery harness.
"""
from services.dynamics import DynamicsService
from services.capture_point import CapturePointService
from services.support_polygon import SupportPolygonService
from services.controllers import ControllerService, PushRecoveryController
from services.simulator import SimulationService
from services.envelope import EnvelopeService
from services.config_loader import ScenarioLoaderService
from services.validator import ValidationService
from services.output_writer import OutputWriterService

__all__ = [
    'DynamicsService',
    'CapturePointService',
    'SupportPolygonService',
    'ControllerService',
    'PushRecoveryController',
    'SimulationService',
    'EnvelopeService',
    'ScenarioLoaderService',
    'ValidationService',
    'OutputWriterService'
]
