"""Koopman MPC synchronization of a boundary-actuated Frenkel-Kontorova pendulum chain."""

__version__ = "0.1.0"
