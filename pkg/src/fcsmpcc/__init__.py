"""Finite-control-set predictive current control for PMSM drives, with an
observer-based speed loop and a deterministic closed-loop simulator."""

__version__ = "0.1.0"
