"""Multi-step finite-control-set search.

Two searches live here:

* :func:`conventional_nstep` walks the full 8**N tree and scores each
  sequence by its summed stage cost. It is the exhaustive reference.
* :func:`im_n_step` keeps only the best and second-best first-step vectors,
  expands each surviving branch by its two best children at intermediate
  levels, and scores every leaf row by the final-step stage cost. The row
  holding the global minimum decides which of the two first-step vectors is
  applied. For N=2 this costs 8 + 16 evaluations instead of 72.

In the branch-limited search a branch whose earlier predictions broke the
current limit keeps that penalty on every entry of its final row, so an
infeasible first step is never preferred over a feasible one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .inverter import VECTORS, SwitchState, dq_table
from .mpcc import (
    DQ,
    CostConfig,
    CurrentRef,
    DiscreteModel,
    EvalCounter,
    Selection,
    argmin,
    candidate_angles,
    evaluate_candidates,
    limit_term,
    violates_limit,
)

SUPPORTED_CONVENTIONAL = (1, 2, 3)
SUPPORTED_IM = (2, 3)


@dataclass(frozen=True)
class Candidate:
    vector: SwitchState
    cost: float
    pred: DQ


@dataclass(frozen=True)
class CandidatePair:
    min1: Candidate
    min2: Candidate


@dataclass
class CostMatrix:
    """Final-step costs, one row of 8 per surviving branch.

    Rows are ordered lexicographically by choice path with the better child
    first, so the first half always descends from the best first-step vector.
    """

    rows: list[list[float]]
    labels: list[str]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.rows[0]) if self.rows else 0

    def argmin(self) -> tuple[int, int]:
        """(row, column) of the global minimum, scanning row-major so earlier
        rows win exact ties."""
        best_r, best_c = 0, argmin(self.rows[0])
        best = self.rows[0][best_c]
        for r in range(1, len(self.rows)):
            c = argmin(self.rows[r])
            if self.rows[r][c] < best:
                best_r, best_c, best = r, c, self.rows[r][c]
        return best_r, best_c

    def min(self) -> float:
        r, c = self.argmin()
        return self.rows[r][c]


@dataclass
class MultiStepSelection(Selection):
    pair: CandidatePair | None = None
    g_sum: CostMatrix | None = None
    sequence: tuple[int, ...] = ()


def _check_horizon(N: int, supported: Sequence[int]) -> None:
    if N not in supported:
        raise ValueError(f"horizon N={N!r} not supported; expected one of {tuple(supported)}")


def im_candidates(first_step_costs: Sequence[float]) -> tuple[int, int]:
    """Indices of the lowest and second-lowest cost; ties go to the lower index."""
    if len(first_step_costs) < 2:
        raise ValueError("need at least two candidate costs")
    order = sorted(range(len(first_step_costs)), key=lambda k: (first_step_costs[k], k))
    return order[0], order[1]


def conventional_nstep(state_k1: Sequence[float], omega_re: float, theta_e: float,
                       ref: CurrentRef, N: int, m: DiscreteModel, c: CostConfig,
                       vs: Sequence[SwitchState] = VECTORS) -> MultiStepSelection:
    """Exhaustive N-step search over all vector sequences.

    Every tree node is one prediction plus one cost, so the counter ends at
    8 + 8**2 + ... + 8**N. Sequences are visited in lexicographic order and
    only a strictly lower total replaces the incumbent.
    """
    _check_horizon(N, SUPPORTED_CONVENTIONAL)
    counter = EvalCounter()
    tables = [[t[s.index] for s in vs]
              for t in (dq_table(m.machine.Vdc, th)
                        for th in candidate_angles(theta_e, omega_re, m.Ts, N))]

    first_costs, first_preds = evaluate_candidates(state_k1, omega_re, tables[0], ref, m, c, counter)
    best_cost = float("inf")
    best_seq: tuple[int, ...] = ()

    def expand(state, level, acc, prefix):
        nonlocal best_cost, best_seq
        costs, preds = evaluate_candidates(state, omega_re, tables[level], ref, m, c, counter)
        last = level == N - 1
        for k in range(len(vs)):
            total = acc + costs[k]
            if last:
                if total < best_cost:
                    best_cost, best_seq = total, prefix + (k,)
            else:
                expand(preds[k], level + 1, total, prefix + (k,))

    for k in range(len(vs)):
        if N == 1:
            if first_costs[k] < best_cost:
                best_cost, best_seq = first_costs[k], (k,)
        else:
            expand(first_preds[k], 1, first_costs[k], (k,))

    feasible = any(not violates_limit(p, c.i_max) for p in first_preds)
    return MultiStepSelection(vs[best_seq[0]], best_cost, counter, first_costs, first_preds,
                              feasible, sequence=best_seq)


def im_n_step(state_k1: Sequence[float], omega_re: float, theta_e: float, ref: CurrentRef,
              N: int, m: DiscreteModel, c: CostConfig, accumulate: bool = False,
              vs: Sequence[SwitchState] = VECTORS) -> MultiStepSelection:
    """Branch-limited N-step search (N in {2, 3}).

    With ``accumulate`` the final rows hold whole-path cost sums instead of
    the final-step cost alone.
    """
    _check_horizon(N, SUPPORTED_IM)
    counter = EvalCounter()
    tables = [[t[s.index] for s in vs]
              for t in (dq_table(m.machine.Vdc, th)
                        for th in candidate_angles(theta_e, omega_re, m.Ts, N))]

    first_costs, first_preds = evaluate_candidates(state_k1, omega_re, tables[0], ref, m, c, counter)
    i1, i2 = im_candidates(first_costs)
    pair = CandidatePair(Candidate(vs[i1], first_costs[i1], first_preds[i1]),
                         Candidate(vs[i2], first_costs[i2], first_preds[i2]))

    # branch = (label, predicted state, carried cost, index path)
    branches = []
    for label, k in (("A", i1), ("B", i2)):
        carried = first_costs[k] if accumulate else limit_term(first_preds[k], c)
        branches.append((label, first_preds[k], carried, (k,)))

    for level in range(1, N):
        last = level == N - 1
        grown = []
        for label, state, carried, path in branches:
            costs, preds = evaluate_candidates(state, omega_re, tables[level], ref, m, c, counter)
            if last:
                grown.append((label, [carried + g for g in costs], path))
            else:
                for tag, k in zip("12", im_candidates(costs)):
                    extra = costs[k] if accumulate else limit_term(preds[k], c)
                    grown.append((label + tag, preds[k], carried + extra, path + (k,)))
        branches = grown

    g_sum = CostMatrix(rows=[row for _, row, _ in branches], labels=[lab for lab, _, _ in branches])
    r, col = g_sum.argmin()
    first = pair.min1 if r < len(g_sum.rows) // 2 else pair.min2
    feasible = any(not violates_limit(p, c.i_max) for p in first_preds)
    return MultiStepSelection(first.vector, g_sum.rows[r][col], counter, first_costs, first_preds,
                              feasible, pair=pair, g_sum=g_sum,
                              sequence=branches[r][2] + (col,))


def im_two_step(state_k1: Sequence[float], omega_re: float, theta_e: float, ref: CurrentRef,
                m: DiscreteModel, c: CostConfig, accumulate: bool = False,
                vs: Sequence[SwitchState] = VECTORS) -> MultiStepSelection:
    return im_n_step(state_k1, omega_re, theta_e, ref, 2, m, c, accumulate=accumulate, vs=vs)
