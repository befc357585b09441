"""Co-design optimization lab: differentiable soft-robot tasks, gradient-covariance
landscape analysis and particle-filter co-design optimizers."""

__version__ = "0.1.0"
