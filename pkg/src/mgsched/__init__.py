"""Bi-level scheduler for an isolated microgrid with price-responsive EV charging.

The package couples a chance-constrained microgrid dispatch (solved with the
JAYA metaheuristic) to an EV-fleet charging linear program (solved with a
primal-dual interior-point method) through a load-proportional real-time
pricing loop.
"""

from mgsched.sequences import ProbSequence, convolve, discretize, expectation, min_reserve_for_confidence
from mgsched.ev_fleet import EvParams, EvSession
from mgsched.jaya import Candidate, JayaConfig, optimize
from mgsched.dispatch import EssParams, MtUnit, UpperSchedule
from mgsched.charging import ChargingPlan, LpProblem, StationParams
from mgsched.coordinator import IterationRecord, PriceProfile, real_time_price, select_joint_optimum

__all__ = [
    "Candidate",
    "ChargingPlan",
    "EssParams",
    "EvParams",
    "EvSession",
    "IterationRecord",
    "JayaConfig",
    "LpProblem",
    "MtUnit",
    "PriceProfile",
    "ProbSequence",
    "StationParams",
    "UpperSchedule",
    "convolve",
    "discretize",
    "expectation",
    "min_reserve_for_confidence",
    "optimize",
    "real_time_price",
    "select_joint_optimum",
]

__version__ = "0.1.0"
