"""Two-level three-phase inverter: the eight switch states and their dq images.

Index encoding is binary with Sa as the most significant bit, so 0 (000) and
7 (111) are the zero vectors. The Clarke transform is amplitude-invariant
(2/3 scaled), so an active vector has magnitude 2/3 * Vdc in any frame.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

SQRT3 = math.sqrt(3.0)


class SwitchState(NamedTuple):
    Sa: int
    Sb: int
    Sc: int

    @property
    def index(self) -> int:
        return (self.Sa << 2) | (self.Sb << 1) | self.Sc

    @property
    def is_zero(self) -> bool:
        return self.Sa == self.Sb == self.Sc

    @classmethod
    def from_index(cls, index: int) -> "SwitchState":
        if not 0 <= index <= 7:
            raise ValueError(f"switch index must be in 0..7, got {index}")
        return cls((index >> 2) & 1, (index >> 1) & 1, index & 1)


VECTORS: tuple[SwitchState, ...] = tuple(SwitchState.from_index(i) for i in range(8))


def phase_voltages(s: SwitchState, Vdc: float) -> tuple[float, float, float]:
    """Phase-to-neutral voltages of a star-connected load."""
    ua = Vdc * (2 * s.Sa - s.Sb - s.Sc) / 3.0
    ub = Vdc * (2 * s.Sb - s.Sc - s.Sa) / 3.0
    uc = Vdc * (2 * s.Sc - s.Sa - s.Sb) / 3.0
    return ua, ub, uc


def clarke(a: float, b: float, c: float) -> tuple[float, float]:
    alpha = (2.0 * a - b - c) / 3.0
    beta = (b - c) / SQRT3
    return alpha, beta


def inverse_clarke(alpha: float, beta: float) -> tuple[float, float, float]:
    a = alpha
    b = -0.5 * alpha + 0.5 * SQRT3 * beta
    c = -0.5 * alpha - 0.5 * SQRT3 * beta
    return a, b, c


def park(alpha: float, beta: float, theta: float) -> tuple[float, float]:
    ct, st = math.cos(theta), math.sin(theta)
    return alpha * ct + beta * st, -alpha * st + beta * ct


def inverse_park(d: float, q: float, theta: float) -> tuple[float, float]:
    ct, st = math.cos(theta), math.sin(theta)
    return d * ct - q * st, d * st + q * ct


@lru_cache(maxsize=32)
def alpha_beta_table(Vdc: float) -> tuple[tuple[float, float], ...]:
    """Stationary-frame voltage of each vector, by index."""
    return tuple(clarke(*phase_voltages(s, Vdc)) for s in VECTORS)


def dq_voltage(s: SwitchState, Vdc: float, theta_e: float) -> tuple[float, float]:
    alpha, beta = alpha_beta_table(Vdc)[s.index]
    return park(alpha, beta, theta_e)


def dq_table(Vdc: float, theta_e: float) -> list[tuple[float, float]]:
    """dq voltages of all eight vectors at one angle (one sin/cos pair)."""
    ct, st = math.cos(theta_e), math.sin(theta_e)
    return [(a * ct + b * st, -a * st + b * ct) for a, b in alpha_beta_table(Vdc)]
