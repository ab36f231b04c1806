"""Outer speed loop: a clamped PI baseline and the observer-based
disturbance-compensation law.

The speed dynamics are treated as ``dw/dt = iq_ref / k + d``, with
``k = 2 J_n / (3 p_n psi_f)`` and ``d`` everything the controller does not
model (friction, load, inertia mismatch, current-tracking error). A linear
second-order extended state observer estimates the speed (z1) and ``d``
(z2); the control law cancels z2 and closes a proportional loop on z1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .machine import MachineParams


def clamp(x: float, limit: float) -> float:
    return min(max(x, -limit), limit)


@dataclass(frozen=True)
class PiGains:
    Kp: float = 1.524
    Ki: float = 76.2
    limit: float = 10.0

    def __post_init__(self):
        if self.Kp < 0 or self.Ki < 0:
            raise ValueError("PI gains must be non-negative")
        if not self.limit > 0:
            raise ValueError("PI output limit must be positive")


def pi_speed(omega_ref: float, omega: float, integ: float, gains: PiGains,
             dt: float) -> tuple[float, float]:
    """One PI update. Returns ``(iq_ref, new_integrator)``.

    The integrator holds the error integral. It is frozen whenever the
    output would saturate with the error pushing further into the limit.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    e = omega_ref - omega
    trial = integ + e * dt
    u = gains.Kp * e + gains.Ki * trial
    if abs(u) > gains.limit and e * u > 0:
        trial = integ
        u = gains.Kp * e + gains.Ki * trial
    return clamp(u, gains.limit), trial


@dataclass(frozen=True)
class EsoState:
    z1: float
    z2: float = 0.0

    @classmethod
    def initial(cls, omega_meas: float) -> "EsoState":
        return cls(z1=omega_meas, z2=0.0)


@dataclass(frozen=True)
class EsoGains:
    beta1: float
    beta2: float
    k_gain: float
    kp: float
    limit: float = 10.0

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0 and self.kp > 0 and self.k_gain > 0):
            raise ValueError("beta1, beta2, kp and k_gain must all be positive")

    @classmethod
    def from_machine(cls, params: MachineParams, beta1: float = 1200.0, beta2: float = 4000.0,
                     kp: float = 30.0, J_n: float | None = None,
                     limit: float = 10.0) -> "EsoGains":
        """``k_gain`` always comes from the machine data; ``J_n`` is the
        nominal inertia the controller believes in (defaults to the true J)."""
        J_n = params.J if J_n is None else J_n
        return cls(beta1=beta1, beta2=beta2, k_gain=2.0 * J_n / (3.0 * params.p_n * params.psi_f),
                   kp=kp, limit=limit)


def eso_update(s: EsoState, iq_ref: float, omega_meas: float, g: EsoGains, dt: float) -> EsoState:
    """Forward-Euler step of the observer."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    err = s.z1 - omega_meas
    return EsoState(
        z1=s.z1 + dt * (iq_ref / g.k_gain + s.z2 - g.beta1 * err),
        z2=s.z2 - dt * g.beta2 * err,
    )


def dc_control(omega_ref: float, s: EsoState, g: EsoGains) -> float:
    u0 = g.kp * (omega_ref - s.z1)
    return clamp(u0 - g.k_gain * s.z2, g.limit)


def eso_error_matrix(g: EsoGains, dt: float) -> np.ndarray:
    """Discrete update of the estimation error (z1 - w, z2 - d) for a frozen
    disturbance."""
    return np.array([[1.0 - dt * g.beta1, dt],
                     [-dt * g.beta2, 1.0]])


def eso_spectral_radius(g: EsoGains, dt: float) -> float:
    return float(max(abs(np.linalg.eigvals(eso_error_matrix(g, dt)))))


def eso_continuous_roots(g: EsoGains) -> tuple[float, float]:
    """Roots of s^2 + beta1 s + beta2, sorted ascending (real case only)."""
    disc = g.beta1 ** 2 - 4.0 * g.beta2
    if disc < 0:
        raise ValueError("complex observer roots")
    r = math.sqrt(disc)
    return ((-g.beta1 - r) / 2.0, (-g.beta1 + r) / 2.0)


class PiSpeedController:
    def __init__(self, gains: PiGains, dt: float):
        self.gains = gains
        self.dt = dt
        self.integ = 0.0

    def update(self, omega_ref: float, omega_meas: float) -> float:
        iq_ref, self.integ = pi_speed(omega_ref, omega_meas, self.integ, self.gains, self.dt)
        return iq_ref


class DcSpeedController:
    """Observer plus compensation law. The observer is advanced with the
    reference current actually issued this period."""

    def __init__(self, gains: EsoGains, dt: float, omega_init: float = 0.0):
        self.gains = gains
        self.dt = dt
        self.state = EsoState.initial(omega_init)

    def update(self, omega_ref: float, omega_meas: float) -> float:
        iq_ref = dc_control(omega_ref, self.state, self.gains)
        self.state = eso_update(self.state, iq_ref, omega_meas, self.gains, self.dt)
        return iq_ref
