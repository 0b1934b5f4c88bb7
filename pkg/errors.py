# File: errors.py
# Version: 1.0

class PlannerError(Exception):
    """Base error. `stage` names the pipeline step, `exit_code` is what the CLI returns."""

    stage = "planner"
    exit_code = 3

    def __init__(self, message: str = "", stage: str = None):
        super().__init__(message or self.__class__.__name__)
        if stage:
            self.stage = stage


# --- core_model ---
class NoSolution(PlannerError):
    stage = "kinematics"


class OutOfWorkspace(PlannerError):
    stage = "kinematics"


class NoIntersection(PlannerError):
    stage = "kinematics"


class Singular(PlannerError):
    stage = "kinematics"


class DegenerateThrust(PlannerError):
    stage = "attitude"


class GimbalDegenerate(PlannerError):
    stage = "attitude"


# --- spline ---
class SingularSystem(PlannerError):
    stage = "spline"


class OutOfDomain(PlannerError):
    stage = "spline"


# --- world_map / corridor ---
class NoPath(PlannerError):
    stage = "path search"
    exit_code = 2


class SeedBlocked(PlannerError):
    stage = "corridor"
    exit_code = 2


class DegenerateDirection(PlannerError):
    stage = "corridor"
    exit_code = 2


class CorridorGap(PlannerError):
    stage = "corridor"
    exit_code = 2


# --- solver ---
class LineSearchFailure(PlannerError):
    stage = "solver"


class NonFiniteObjective(PlannerError):
    stage = "solver"


# --- prior ---
class NonFiniteLoss(PlannerError):
    stage = "training"


class InsufficientYield(PlannerError):
    stage = "demo generation"
