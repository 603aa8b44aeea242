"""
Error taxonomy for the FedGCV simulator

Recoverable conditions (a client without training nodes, a vanishing retain
direction, indistinguishable MIA sets) are reported as flags on result
objects, not raised.
"""


class FedGcvError(Exception):
    """Root of every error raised by this package"""


class ParseError(FedGcvError):
    """A dataset, partition or checkpoint file is malformed"""


class ValidationError(FedGcvError):
    """A well-formed dataset violates a semantic rule"""


class DegreeZeroError(FedGcvError):
    """An isolated node was found while isolated nodes are rejected"""


class ConvergenceError(FedGcvError):
    """The iterative eigensolver missed its residual tolerance"""


class PartitionError(FedGcvError):
    """A balanced partition cannot be produced"""


class ShapeError(FedGcvError):
    """Array shapes disagree"""


class EmptyMaskError(FedGcvError):
    """A loss was requested over an empty node selection"""


class DivergenceError(FedGcvError):
    """Training produced a non-finite loss"""


class EmptySplitError(FedGcvError):
    """An accuracy was requested over a split with no nodes"""


class PrivacyError(FedGcvError):
    """Synthetic data reproduces raw rows of the departed client"""


class ConfigError(FedGcvError):
    """Experiment configuration is invalid"""

    def __init__(self, key_path: str, reason: str):
        self.key_path = key_path
        self.reason = reason
        super().__init__(f"{key_path}: {reason}")


class PhaseDependencyError(FedGcvError):
    """A pipeline phase was requested without the phase it builds on"""


class PipelineError(FedGcvError):
    """A module error raised while a pipeline phase was running"""

    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(f"phase '{phase}' failed: {cause}")
