"""Front tracking for one-dimensional 2x2 hyperbolic systems with moving boundaries."""

from .errors import FrontTrackError, InvariantViolation, ParseError, RegimeLoss, ValidationError
from .runner import RunRecord, read_timeseries, run, write_timeseries
from .scenario import Scenario, load_scenario, load_scenario_file
from .systems import System2x2, linearized_shallow_water, shallow_water_zq, shallow_water_zv

__version__ = "0.1.0"

__all__ = [
    "FrontTrackError", "InvariantViolation", "ParseError", "RegimeLoss", "ValidationError",
    "RunRecord", "read_timeseries", "run", "write_timeseries",
    "Scenario", "load_scenario", "load_scenario_file",
    "System2x2", "linearized_shallow_water", "shallow_water_zq", "shallow_water_zv",
    "__version__",
]
