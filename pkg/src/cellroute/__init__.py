"""Collision-aware multi-agent task routing and scheduling."""
from importlib.resources import files

from .errors import (CellrouteError, InfeasibleError, InstanceError, InvalidTourError, PartitionError,
                     SizeLimitError)
from .model import (ConflictSet, Instance, ScheduledTour, Tour, check_active_conflicts, euclidean_instance,
                    load_instance, save_instance, solution_makespan, tour_cost)

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a bundled data file (TSPLIB sources and worked-example fixtures)."""
    return files(__name__) / "data" / name


__all__ = [
    "CellrouteError", "InfeasibleError", "InstanceError", "InvalidTourError", "PartitionError", "SizeLimitError",
    "ConflictSet", "Instance", "ScheduledTour", "Tour", "check_active_conflicts", "euclidean_instance",
    "load_instance", "save_instance", "solution_makespan", "tour_cost", "data_path",
]
