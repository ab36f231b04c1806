"""Closed-loop drive simulation and the trace it produces.

Each control period: sample the plant, run the speed loop, advance the
measurement one period under the vector already latched (delay
compensation), let the current controller pick the next vector, then
integrate the plant over the period with RK4 sub-steps while the switch
state is held.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .inverter import VECTORS, dq_table, inverse_clarke, inverse_park
from .machine import (
    RPM_TO_RADS,
    MachineParams,
    MotorState,
    PlantInput,
    electromagnetic_torque,
    step_plant,
)
from .mpcc import CostConfig, CurrentRef, DiscreteModel, delay_compensate, single_step_select, violates_limit
from .multistep import conventional_nstep, im_n_step
from .speed_loop import DcSpeedController, EsoGains, PiGains, PiSpeedController

log = logging.getLogger(__name__)

CONTROLLERS = ("PI+MPCC", "PI+ConvN", "PI+IMMPCC", "DC+IMMPCC")
DELAY_MODELS = ("one_step", "none")


class SimulationDiverged(RuntimeError):
    def __init__(self, t: float, detail: str = ""):
        super().__init__(f"non-finite plant state at t={t:.9g} s {detail}".rstrip())
        self.t = t


@dataclass(frozen=True)
class DcConfig:
    kp: float = 30.0
    beta1: float = 1200.0
    beta2: float = 4000.0
    # nominal inertia seen by the controller; None means "use the true J"
    J_n: float | None = None
    limit: float = 10.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    duration: float = 0.2
    Ts: float = 50e-6
    substeps: int = 10
    machine: MachineParams = field(default_factory=MachineParams)
    controller: str = "PI+IMMPCC"
    horizon: int = 2
    accumulate: bool = False
    cost: CostConfig = field(default_factory=CostConfig)
    pi: PiGains = field(default_factory=PiGains)
    dc: DcConfig = field(default_factory=DcConfig)
    # piecewise-constant profiles: (time s, value); zero before the first point
    speed_profile: tuple[tuple[float, float], ...] = ((0.0, 1000.0),)
    load_profile: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    id_ref: float = 0.0
    delay_model: str = "one_step"
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        # tuples keep the config hashable and its JSON form stable
        object.__setattr__(self, "speed_profile", tuple(tuple(map(float, p)) for p in self.speed_profile))
        object.__setattr__(self, "load_profile", tuple(tuple(map(float, p)) for p in self.load_profile))
        self.validate()

    def validate(self) -> None:
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"duration must be positive, got {self.duration!r}")
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts!r}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be an integer >= 1, got {self.substeps!r}")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; expected one of {CONTROLLERS}")
        if self.delay_model not in DELAY_MODELS:
            raise ValueError(f"unknown delay_model {self.delay_model!r}; expected one of {DELAY_MODELS}")
        if self.controller == "PI+ConvN" and self.horizon not in (1, 2, 3):
            raise ValueError(f"conventional horizon must be 1..3, got {self.horizon}")
        if self.controller.endswith("IMMPCC") and self.horizon not in (2, 3):
            raise ValueError(f"IM horizon must be 2 or 3, got {self.horizon}")
        if self.noise < 0:
            raise ValueError("noise amplitude must be non-negative")
        for label, prof in (("speed_profile", self.speed_profile), ("load_profile", self.load_profile)):
            times = [p[0] for p in prof]
            if not prof:
                raise ValueError(f"{label} is empty")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(f"{label} breakpoints must be strictly increasing")
            if times[0] < 0 or times[-1] > self.duration:
                raise ValueError(f"{label} breakpoints must lie within [0, duration]")

    @property
    def n_periods(self) -> int:
        return int(round(self.duration / self.Ts))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def profile_value(profile: Sequence[tuple[float, float]], t: float) -> float:
    k = bisect_right([p[0] for p in profile], t)
    return profile[k - 1][1] if k else 0.0


def phase_currents(state: MotorState) -> tuple[float, float, float]:
    return inverse_clarke(*inverse_park(state.id, state.iq, state.theta_e))


BASE_COLUMNS = (
    "t", "id", "iq", "ia", "ib", "ic", "omega_m_rpm", "omega_ref_rpm", "te", "tl",
    "id_ref", "iq_ref", "applied", "chosen", "model_evals", "cost_evals",
    "n_feasible", "chosen_violates",
)
DC_COLUMNS = ("z1", "z2")
INT_COLUMNS = {"applied", "chosen", "model_evals", "cost_evals", "n_feasible", "chosen_violates"}


class Trace:
    """Column-oriented record of one run, one row per control period."""

    def __init__(self, columns: Sequence[str], data: dict[str, np.ndarray], meta: dict | None = None):
        self.columns = list(columns)
        self.data = {c: np.asarray(data[c]) for c in self.columns}
        self.meta = dict(meta or {})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    def __len__(self) -> int:
        return len(self.data["t"])

    @property
    def Ts(self) -> float:
        return float(self.meta["ts"])

    @property
    def pole_pairs(self) -> int:
        return int(self.meta["pole_pairs"])

    def mask(self, t0: float, t1: float) -> np.ndarray:
        """Rows with t0 <= t < t1 (half a period of slack on both ends)."""
        t = self.data["t"]
        eps = 0.5 * self.Ts
        return (t >= t0 - eps) & (t < t1 - eps)

    def window(self, name: str, t0: float, t1: float) -> np.ndarray:
        return self.data[name][self.mask(t0, t1)]

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text())

    def to_csv_text(self) -> str:
        lines = ["# fcsmpcc trace"]
        lines += [f"# {k}={v}" for k, v in self.meta.items()]
        lines.append(",".join(self.columns))
        cols = [self.data[c] for c in self.columns]
        fmts = ["%d" if c in INT_COLUMNS else "%.9g" for c in self.columns]
        for row in zip(*cols):
            lines.append(",".join(f % v for f, v in zip(fmts, row)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path) -> "Trace":
        meta = {}
        header = None
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        k, v = body.split("=", 1)
                        meta[k.strip()] = v.strip()
                    continue
                if header is None:
                    header = line.split(",")
                    continue
                rows.append([float(v) for v in line.split(",")])
        if header is None:
            raise ValueError(f"{path}: no column header found")
        arr = np.array(rows, dtype=float).reshape(-1, len(header))
        data = {c: (arr[:, j].astype(int) if c in INT_COLUMNS else arr[:, j]) for j, c in enumerate(header)}
        return cls(header, data, meta)


def _make_selector(cfg: ScenarioConfig, m: DiscreteModel):
    c = cfg.cost
    if cfg.controller == "PI+MPCC":
        return lambda x, w, th, ref: single_step_select(x, w, th, ref, m, c)
    if cfg.controller == "PI+ConvN":
        return lambda x, w, th, ref: conventional_nstep(x, w, th, ref, cfg.horizon, m, c)
    return lambda x, w, th, ref: im_n_step(x, w, th, ref, cfg.horizon, m, c, accumulate=cfg.accumulate)


def _make_speed_controller(cfg: ScenarioConfig):
    if cfg.controller.startswith("DC"):
        gains = EsoGains.from_machine(cfg.machine, beta1=cfg.dc.beta1, beta2=cfg.dc.beta2,
                                      kp=cfg.dc.kp, J_n=cfg.dc.J_n, limit=cfg.dc.limit)
        return DcSpeedController(gains, cfg.Ts)
    return PiSpeedController(cfg.pi, cfg.Ts)


def run_scenario(cfg: ScenarioConfig) -> Trace:
    """Simulate one scenario. Identical configs give bit-identical traces."""
    cfg.validate()
    p = cfg.machine
    Ts = cfg.Ts
    m = DiscreteModel.from_params(p, Ts)
    select = _make_selector(cfg, m)
    speed_ctrl = _make_speed_controller(cfg)
    use_dc = isinstance(speed_ctrl, DcSpeedController)
    one_step = cfg.delay_model == "one_step"
    rng = random.Random(cfg.seed)
    h = Ts / cfg.substeps
    i_max = cfg.cost.i_max

    columns = list(BASE_COLUMNS) + (list(DC_COLUMNS) if use_dc else [])
    out = {c: [] for c in columns}

    state = MotorState()
    applied = VECTORS[0]
    for k in range(cfg.n_periods):
        t = k * Ts
        w_ref = profile_value(cfg.speed_profile, t) * RPM_TO_RADS
        tl = profile_value(cfg.load_profile, t)

        id_m, iq_m = state.id, state.iq
        if cfg.noise:
            id_m += rng.uniform(-cfg.noise, cfg.noise)
            iq_m += rng.uniform(-cfg.noise, cfg.noise)
        omega = state.omega_m
        w_re = p.p_n * omega

        iq_ref = speed_ctrl.update(w_ref, omega)
        ref = CurrentRef(cfg.id_ref, iq_ref)

        # candidates are mapped into dq at the middle of the period they act in
        if one_step:
            u_now = dq_table(p.Vdc, state.theta_e + 0.5 * w_re * Ts)[applied.index]
            x1 = delay_compensate((id_m, iq_m), w_re, u_now, m)
            sel = select(x1, w_re, state.theta_e + 1.5 * w_re * Ts, ref)
            now = applied
        else:
            sel = select((id_m, iq_m), w_re, state.theta_e + 0.5 * w_re * Ts, ref)
            now = sel.vector
        chosen = sel.vector
        if not sel.feasible:
            log.debug("t=%.6f s: every candidate breaks the %.3g A limit", t, i_max)

        ia, ib, ic = phase_currents(state)
        out["t"].append(t)
        out["id"].append(state.id)
        out["iq"].append(state.iq)
        out["ia"].append(ia)
        out["ib"].append(ib)
        out["ic"].append(ic)
        out["omega_m_rpm"].append(omega / RPM_TO_RADS)
        out["omega_ref_rpm"].append(w_ref / RPM_TO_RADS)
        out["te"].append(electromagnetic_torque(state, p))
        out["tl"].append(tl)
        out["id_ref"].append(cfg.id_ref)
        out["iq_ref"].append(iq_ref)
        out["applied"].append(now.index)
        out["chosen"].append(chosen.index)
        out["model_evals"].append(sel.counter.model_evals)
        out["cost_evals"].append(sel.counter.cost_evals)
        out["n_feasible"].append(sum(not violates_limit(x, i_max) for x in sel.first_preds))
        out["chosen_violates"].append(int(violates_limit(sel.first_preds[chosen.index], i_max)))
        if use_dc:
            out["z1"].append(speed_ctrl.state.z1)
            out["z2"].append(speed_ctrl.state.z2)

        for _ in range(cfg.substeps):
            ud, uq = dq_table(p.Vdc, state.theta_e)[now.index]
            state = step_plant(state, PlantInput(ud, uq, tl), p, h)
        if not state.is_finite():
            raise SimulationDiverged(t + Ts, f"in scenario {cfg.name!r}")
        if one_step:
            applied = chosen

    meta = {
        "name": cfg.name,
        "controller": cfg.controller,
        "config_hash": cfg.config_hash(),
        "ts": repr(Ts),
        "seed": cfg.seed,
        "pole_pairs": p.p_n,
        "version": __version__,
    }
    data = {c: np.array(v, dtype=int if c in INT_COLUMNS else float) for c, v in out.items()}
    return Trace(columns, data, meta)


def run_many(cfgs: Iterable[ScenarioConfig], jobs: int = 1) -> list[Trace]:
    """Run independent scenarios, optionally on worker threads; order is kept."""
    cfgs = list(cfgs)
    if jobs <= 1 or len(cfgs) <= 1:
        return [run_scenario(c) for c in cfgs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_scenario, cfgs))


__all__ = [
    "CONTROLLERS", "DELAY_MODELS", "DcConfig", "ScenarioConfig", "SimulationDiverged", "Trace",
    "phase_currents", "profile_value", "run_many", "run_scenario",
]
