"""
Exception hierarchy shared by every KIX subpackage
"""


class KixError(Exception):
    """Base class for all framework errors"""

    exit_code = 1


class ShapeError(KixError, ValueError):
    """Tensor extents do not fit the requested operation"""

    exit_code = 4


class NumericError(KixError, FloatingPointError):
    """Non-finite values or an invalid probability distribution"""

    exit_code = 4


class TapeError(KixError, RuntimeError):
    """Backward requested on a tape that was already consumed"""

    exit_code = 4


class PpoUpdateError(NumericError):
    """A PPO update failed and parameters were rolled back"""


class GenerationError(KixError):
    """The requested layout cannot host the task's objects"""

    exit_code = 5


class EnvironmentStepError(KixError):
    """Invalid action code or a step after the episode ended"""

    exit_code = 5


class RoomIndexError(KixError):
    """Room lookup on a cell that belongs to no room"""

    exit_code = 5


class GraphError(KixError):
    """Knowledge-graph construction or activation failed"""

    exit_code = 5


class NoCandidatesError(GraphError):
    """The instance graph holds no object the recommender could propose"""


class CheckpointError(KixError):
    """Checkpoint missing, corrupt, or incompatible with the request"""

    exit_code = 3


class ConfigError(KixError, ValueError):
    """Configuration key unknown, mistyped, or missing"""

    exit_code = 2

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class MetricError(KixError, ValueError):
    """Evaluation metric inputs are degenerate or incompatible"""
