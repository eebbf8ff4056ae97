"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ScalarFlowError(Exception):
    """Base class for every error raised by the package."""


class DegenerateMetricError(ScalarFlowError):
    """The spatial metric sigma is not positive definite at a queried point."""


class SpacelikeViolation(ScalarFlowError):
    """|Du|^2 reached the spacelike margin at some grid node."""

    def __init__(self, node, grad_sq: float):
        self.node = tuple(int(i) for i in node)
        self.grad_sq = float(grad_sq)
        super().__init__(f"graph is not spacelike at node {self.node}: |Du|^2 = {self.grad_sq:.6g}")


class DegenerateGeometryError(ScalarFlowError):
    """The induced metric failed a positive-definiteness check."""


class UnsupportedCheckError(ScalarFlowError):
    """A consistency check needs an ambient curvature oracle the metric lacks."""


class ConeViolationError(ScalarFlowError):
    """Curvature vector outside the Garding cone required by the operation."""


class ContractViolation(ScalarFlowError):
    """An input precondition was not met."""


class IdentityViolation(ScalarFlowError):
    """Two independent evaluations of the same geometric identity disagree."""


class PositivityViolation(ScalarFlowError):
    """The prescribed function is nonpositive at a sample."""

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class ConfigError(ScalarFlowError):
    """Invalid run configuration."""


class InvalidUpperBarrier(ScalarFlowError):
    """The upper barrier is not admissible or violates F >= f."""

    def __init__(self, message: str, node=None):
        self.node = node
        super().__init__(message)


class FlowBreakdown(ScalarFlowError):
    """Step-size halving exhausted; carries the last accepted state."""

    def __init__(self, message: str, state=None, trace=None):
        self.state = state
        self.trace = trace
        super().__init__(message)


class InvariantViolation(ScalarFlowError):
    """A monitored a priori invariant failed beyond tolerance."""

    def __init__(self, message: str, monitor: str, state=None, trace=None):
        self.monitor = monitor
        self.state = state
        self.trace = trace
        super().__init__(message)
