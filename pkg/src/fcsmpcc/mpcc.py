"""Discrete current prediction, delay compensation, stage cost and the
single-step finite-control-set selector."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .inverter import VECTORS, SwitchState, dq_table
from .machine import MachineParams

DEFAULT_TS = 50e-6


class DQ(NamedTuple):
    d: float
    q: float


@dataclass(frozen=True)
class DiscreteModel:
    """Forward-Euler current model. ``G = Ts/Ld`` and ``H = Ts/Lq``."""

    G: float
    H: float
    Ts: float
    machine: MachineParams

    @classmethod
    def from_params(cls, machine: MachineParams, Ts: float = DEFAULT_TS) -> "DiscreteModel":
        if not Ts > 0:
            raise ValueError(f"Ts must be positive, got {Ts!r}")
        return cls(G=Ts / machine.Ld, H=Ts / machine.Lq, Ts=Ts, machine=machine)


@dataclass(frozen=True)
class CurrentRef:
    id_ref: float = 0.0
    iq_ref: float = 0.0


@dataclass(frozen=True)
class CostConfig:
    i_max: float = 10.0
    # finite stand-in for an infinite limit term; far above any reachable error
    penalty: float = 1e9

    def __post_init__(self):
        if not self.i_max > 0:
            raise ValueError(f"i_max must be positive, got {self.i_max!r}")
        if not self.penalty > 0:
            raise ValueError(f"penalty must be positive, got {self.penalty!r}")


@dataclass
class EvalCounter:
    model_evals: int = 0
    cost_evals: int = 0

    @property
    def total(self) -> int:
        """Number of (prediction, cost) pairs; the two counts move together."""
        return max(self.model_evals, self.cost_evals)


def predict_step(i: Sequence[float], omega_re: float, u: Sequence[float], m: DiscreteModel) -> DQ:
    id_, iq = i
    ud, uq = u
    p = m.machine
    G, H = m.G, m.H
    return DQ(
        (1.0 - p.Rs * G) * id_ + p.Lq * G * omega_re * iq + G * ud,
        -p.Ld * H * omega_re * id_ + (1.0 - p.Rs * H) * iq + H * uq - p.psi_f * H * omega_re,
    )


def delay_compensate(measured: Sequence[float], omega_re: float, applied: Sequence[float],
                     m: DiscreteModel) -> DQ:
    """Advance measured currents one period under the already latched voltage,
    so candidates are scored for the period in which they will act."""
    return predict_step(measured, omega_re, applied, m)


def violates_limit(pred: Sequence[float], i_max: float) -> bool:
    return abs(pred[0]) > i_max or abs(pred[1]) > i_max


def limit_term(pred: Sequence[float], c: CostConfig) -> float:
    return c.penalty if violates_limit(pred, c.i_max) else 0.0


def stage_cost(pred: Sequence[float], ref: CurrentRef, c: CostConfig) -> float:
    """Absolute tracking error on both axes plus the current-limit term."""
    g = abs(ref.id_ref - pred[0]) + abs(ref.iq_ref - pred[1])
    if abs(pred[0]) > c.i_max or abs(pred[1]) > c.i_max:
        g += c.penalty
    return g


def candidate_angles(theta_e: float, omega_re: float, Ts: float, steps: int) -> list[float]:
    """Rotor angle used to map the switch states into dq at each horizon step."""
    return [theta_e + n * omega_re * Ts for n in range(steps)]


@dataclass
class Selection:
    vector: SwitchState
    cost: float
    counter: EvalCounter
    # scores and predicted currents of all eight first-step candidates, by index
    first_costs: list[float] = field(default_factory=list)
    first_preds: list[DQ] = field(default_factory=list)
    feasible: bool = True


def evaluate_candidates(state: Sequence[float], omega_re: float, udq: Sequence[Sequence[float]],
                        ref: CurrentRef, m: DiscreteModel, c: CostConfig,
                        counter: EvalCounter) -> tuple[list[float], list[DQ]]:
    """Predict and score every vector from one state; counts 8 of each."""
    preds = [predict_step(state, omega_re, u, m) for u in udq]
    costs = [stage_cost(p, ref, c) for p in preds]
    counter.model_evals += len(preds)
    counter.cost_evals += len(costs)
    return costs, preds


def argmin(values: Sequence[float]) -> int:
    """First index of the minimum; ties resolve toward the lower index."""
    best = 0
    for k in range(1, len(values)):
        if values[k] < values[best]:
            best = k
    return best


def single_step_select(state_k1: Sequence[float], omega_re: float, theta_e: float,
                       ref: CurrentRef, m: DiscreteModel, c: CostConfig,
                       vs: Sequence[SwitchState] = VECTORS) -> Selection:
    """Pick the vector minimising the one-step cost.

    ``theta_e`` is the angle at which candidate vectors are mapped into dq.
    If every candidate breaks the current limit the argmin is still
    returned, with ``feasible`` cleared.
    """
    counter = EvalCounter()
    table = dq_table(m.machine.Vdc, theta_e)
    udq = [table[s.index] for s in vs]
    costs, preds = evaluate_candidates(state_k1, omega_re, udq, ref, m, c, counter)
    k = argmin(costs)
    feasible = any(not violates_limit(p, c.i_max) for p in preds)
    return Selection(vs[k], costs[k], counter, costs, preds, feasible)
