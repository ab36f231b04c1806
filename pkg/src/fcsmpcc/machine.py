"""Continuous-time PMSM plant in the rotor dq frame.

State is (id, iq, omega_m, theta_e); the electrical speed is always derived
as ``p_n * omega_m`` and never stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi
RPM_TO_RADS = math.pi / 30.0


@dataclass(frozen=True)
class MachineParams:
    """Electrical and mechanical constants. Defaults are the surface-mount
    machine used throughout (311 V bus, 1.3 ohm, 8.5 mH, 0.175 Wb, 4 pole
    pairs, 0.008 kg m^2). Friction is not given for that machine, so B=0."""

    Rs: float = 1.3
    Ld: float = 0.0085
    Lq: float = 0.0085
    psi_f: float = 0.175
    p_n: int = 4
    J: float = 0.008
    B: float = 0.0
    Vdc: float = 311.0

    def __post_init__(self):
        for name in ("Rs", "Ld", "Lq", "psi_f", "J", "Vdc"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if int(self.p_n) != self.p_n or self.p_n < 1:
            raise ValueError(f"p_n must be a positive integer, got {self.p_n!r}")
        if not (math.isfinite(self.B) and self.B >= 0):
            raise ValueError(f"B must be non-negative, got {self.B!r}")

    @property
    def torque_constant(self) -> float:
        """Nm per ampere of iq for the surface-mount case."""
        return 1.5 * self.p_n * self.psi_f


@dataclass(frozen=True)
class MotorState:
    id: float = 0.0
    iq: float = 0.0
    omega_m: float = 0.0
    theta_e: float = 0.0

    def omega_re(self, params: MachineParams) -> float:
        return params.p_n * self.omega_m

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.id, self.iq, self.omega_m, self.theta_e))


@dataclass(frozen=True)
class MotorStateRate:
    did: float
    diq: float
    domega_m: float
    dtheta_e: float


@dataclass(frozen=True)
class PlantInput:
    ud: float = 0.0
    uq: float = 0.0
    T_L: float = 0.0


def wrap_angle(theta: float) -> float:
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


def electromagnetic_torque(state: MotorState, params: MachineParams) -> float:
    return 1.5 * params.p_n * (params.psi_f * state.iq
                               + (params.Ld - params.Lq) * state.id * state.iq)


def _rates(id_, iq, omega_m, ud, uq, T_L, p):
    w_re = p.p_n * omega_m
    did = (ud - p.Rs * id_ + w_re * p.Lq * iq) / p.Ld
    diq = (uq - p.Rs * iq - w_re * p.Ld * id_ - w_re * p.psi_f) / p.Lq
    te = 1.5 * p.p_n * (p.psi_f * iq + (p.Ld - p.Lq) * id_ * iq)
    domega = (te - p.B * omega_m - T_L) / p.J
    return did, diq, domega, w_re


def derivative(state: MotorState, inp: PlantInput, params: MachineParams) -> MotorStateRate:
    """Time derivative of the plant state under the given terminal voltages
    and load torque."""
    return MotorStateRate(*_rates(state.id, state.iq, state.omega_m,
                                  inp.ud, inp.uq, inp.T_L, params))


def step_plant(state: MotorState, inp: PlantInput, params: MachineParams, dt: float) -> MotorState:
    """Advance the plant by one classical RK4 step of length ``dt``.

    The input is held constant over the step. The electrical angle is
    integrated unwrapped inside the step and wrapped once at the end.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    ud, uq, tl = inp.ud, inp.uq, inp.T_L
    x0, x1, x2 = state.id, state.iq, state.omega_m
    h2 = 0.5 * dt

    k1 = _rates(x0, x1, x2, ud, uq, tl, params)
    k2 = _rates(x0 + h2 * k1[0], x1 + h2 * k1[1], x2 + h2 * k1[2], ud, uq, tl, params)
    k3 = _rates(x0 + h2 * k2[0], x1 + h2 * k2[1], x2 + h2 * k2[2], ud, uq, tl, params)
    k4 = _rates(x0 + dt * k3[0], x1 + dt * k3[1], x2 + dt * k3[2], ud, uq, tl, params)

    s = dt / 6.0
    return MotorState(
        id=x0 + s * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        iq=x1 + s * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        omega_m=x2 + s * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        theta_e=wrap_angle(state.theta_e + s * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])),
    )
