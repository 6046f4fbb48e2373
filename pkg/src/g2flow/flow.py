"""Explicit time stepping for the Dirichlet, Dirichlet–DeTurck and Laplacian flows."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .deturck import deturck_vector_field, lie_derivative
from .energy import EnergyReport, gradient_and_energy, laplacian_flow_rhs
from .exterior import InvalidArgument
from .fields import FormField, StructureField, l2_norm
from .g2 import OMEGA0, NotPositive
from .symbols import symbol_gradient, symbol_deturck, symbol_laplacian_flow

KINDS = ("dirichlet", "deturck", "laplacian")
INTEGRATORS = ("euler", "rk4")
STATUSES = ("converged", "t_max", "positivity_loss", "step_floor", "max_steps")
COLUMNS = (
    "step",
    "t",
    "dt",
    "D",
    "H",
    "Q_norm",
    "Qt_norm",
    "dOmega_norm",
    "deltaOmega_norm",
    "min_metric_eig",
)


@dataclass(frozen=True)
class FlowConfig:
    kind: str = "deturck"
    dt_safety: float = 0.2
    t_max: float = 10.0
    stop_grad_tol: float = 1e-8
    max_steps: int = 100_000
    integrator: str = "euler"
    background_scale: float = 1.0
    dt_min: float = 1e-12
    sustain: int = 10
    monotone_rtol: float = 1e-12

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"flow kind must be one of {KINDS}")
        if self.integrator not in INTEGRATORS:
            raise InvalidArgument(f"integrator must be one of {INTEGRATORS}")
        if not 0.0 < self.dt_safety < 1.0:
            raise InvalidArgument("dt_safety must lie in (0, 1)")
        for name in ("t_max", "stop_grad_tol", "dt_min", "background_scale"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.max_steps < 1 or self.sustain < 1:
            raise InvalidArgument("max_steps and sustain must be positive")


@dataclass(frozen=True)
class FlowRecord:
    step: int
    t: float
    dt: float
    D: float
    H: float
    Q_norm: float
    Qt_norm: float
    dOmega_norm: float
    deltaOmega_norm: float
    min_metric_eig: float


@dataclass
class FlowTrace:
    config: FlowConfig
    records: list[FlowRecord] = field(default_factory=list)
    status: str = "t_max"
    accepted: int = 0
    rejected: int = 0
    wall_time: float = 0.0
    final: StructureField | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.records:
            w.writerow([r.step] + [repr(float(getattr(r, c))) for c in COLUMNS[1:]])
        return buf.getvalue()

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "status": self.status,
            "accepted_steps": self.accepted,
            "rejected_steps": self.rejected,
            "final_t": last.t if last else 0.0,
            "final_D": last.D if last else None,
            "final_torsion": (last.dOmega_norm + last.deltaOmega_norm) if last else None,
            "final_rhs_norm": _rhs_norm(self.config.kind, last) if last else None,
            "config": asdict(self.config),
        }

    def write(self, csv_path, json_path, timing_path=None, extra: dict | None = None):
        with open(csv_path, "w") as fh:
            fh.write(self.to_csv())
        summary = self.summary()
        if extra:
            summary.update(extra)
        with open(json_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if timing_path is not None:
            with open(timing_path, "w") as fh:
                json.dump({"wall_time_s": self.wall_time}, fh)
                fh.write("\n")


def _rhs_norm(kind: str, rec: FlowRecord) -> float:
    return rec.Qt_norm if kind == "deturck" else rec.Q_norm


# ---------------------------------------------------------------------------


@dataclass
class _Eval:
    state: StructureField
    rhs: FormField
    Q: FormField
    Qt: FormField
    report: EnergyReport


def background_for(grid, cfg: FlowConfig) -> StructureField:
    return StructureField(FormField.constant(grid, OMEGA0 * cfg.background_scale))


def _evaluate(state: StructureField, cfg: FlowConfig, background: StructureField) -> _Eval:
    Q, rep = gradient_and_energy(state)
    X = deturck_vector_field(background, state.omega)
    Qt = Q + lie_derivative(X, state.omega)
    if cfg.kind == "dirichlet":
        rhs = Q
    elif cfg.kind == "deturck":
        rhs = Qt
    else:
        rhs = laplacian_flow_rhs(state)
    return _Eval(state, rhs, Q, Qt, rep)


def _record(ev: _Eval, step: int, t: float, dt: float) -> FlowRecord:
    s = ev.state
    return FlowRecord(
        step=step,
        t=t,
        dt=dt,
        D=ev.report.dirichlet,
        H=ev.report.hitchin,
        Q_norm=float(l2_norm(ev.Q, s)),
        Qt_norm=float(l2_norm(ev.Qt, s)),
        dOmega_norm=float(np.sqrt(ev.report.torsion_d)),
        deltaOmega_norm=float(np.sqrt(ev.report.torsion_delta)),
        min_metric_eig=float(np.min(s.geom.min_metric_eigenvalue)),
    )


_SYMBOLS = {"dirichlet": symbol_gradient, "deturck": symbol_deturck, "laplacian": symbol_laplacian_flow}


def unit_symbol_radius(kind: str, structure, samples: int = 16, seed: int = 0) -> float:
    """Largest operator norm of the flow's symbol over unit covectors at one node.

    The norm bounds the spectral radius and, unlike it, also controls the
    non-normal Laplacian-flow symbol.
    """
    from .g2 import G2Structure

    s = structure if isinstance(structure, G2Structure) else G2Structure(structure)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        xi = rng.standard_normal(7)
        xi = xi / np.sqrt(xi @ s.ginv @ xi)
        A = _SYMBOLS[kind](s, xi).normalized()
        best = max(best, float(np.linalg.norm(A, 2)))
    return best


def stable_dt(state: StructureField, cfg: FlowConfig, radius: float) -> float:
    """dt_safety · h_min² / S with S = ρ · max λ(g⁻¹) · (stencil bound)."""
    grid = state.grid
    if not grid.active_axes:
        return cfg.t_max
    ginv_max = float(np.max(1.0 / state.geom.min_metric_eigenvalue))
    S = radius * ginv_max * grid.stencil_bound()
    return cfg.dt_safety * grid.min_spacing**2 / S


def _advance(ev: _Eval, dt: float, cfg: FlowConfig, background: StructureField) -> _Eval:
    w = ev.state.omega
    if cfg.integrator == "euler":
        return _evaluate(StructureField(w + ev.rhs * dt), cfg, background)
    k1 = ev.rhs
    k2 = _evaluate(StructureField(w + k1 * (dt / 2)), cfg, background).rhs
    k3 = _evaluate(StructureField(w + k2 * (dt / 2)), cfg, background).rhs
    k4 = _evaluate(StructureField(w + k3 * dt), cfg, background).rhs
    return _evaluate(StructureField(w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)), cfg, background)


class StepFloor(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(f"time step fell below the floor ({reason})")
        self.reason = reason


def _try_step(ev: _Eval, dt: float, cfg: FlowConfig, background: StructureField):
    """Returns (new evaluation or None, reason, dt used, rejections)."""
    rejections = 0
    reason = ""
    while dt >= cfg.dt_min:
        try:
            new = _advance(ev, dt, cfg, background)
        except NotPositive:
            reason = "positivity"
        else:
            D0 = ev.report.dirichlet
            if cfg.kind != "dirichlet" or new.report.dirichlet <= D0 + cfg.monotone_rtol * abs(D0):
                return new, "", dt, rejections
            reason = "energy increase"
        rejections += 1
        dt *= 0.5
    return None, reason, dt, rejections


def step(state: StructureField, cfg: FlowConfig, background: StructureField | None = None):
    """One explicit step; returns (new state, accepted, dt used)."""
    background = background if background is not None else background_for(state.grid, cfg)
    ev = _evaluate(state, cfg, background)
    radius = unit_symbol_radius(cfg.kind, background.geom.at(*([0] * 7)))
    dt = stable_dt(state, cfg, radius)
    new, reason, used, _ = _try_step(ev, dt, cfg, background)
    if new is None:
        raise StepFloor(reason)
    return new.state, True, used


def run(init: StructureField, cfg: FlowConfig, background: StructureField | None = None) -> FlowTrace:
    """Iterate until convergence, t_max, max_steps or failure; every accepted step is recorded."""
    start = time.perf_counter()
    background = background if background is not None else background_for(init.grid, cfg)
    trace = FlowTrace(cfg)
    ev = _evaluate(init, cfg, background)
    rec = _record(ev, 0, 0.0, 0.0)
    trace.records.append(rec)
    radius = unit_symbol_radius(cfg.kind, background.geom.at(*([0] * 7)))
    rhs0 = _rhs_norm(cfg.kind, rec)
    threshold = cfg.stop_grad_tol * rhs0
    t, n, below = 0.0, 0, 0
    if rhs0 <= 1e-14 * max(1.0, abs(rec.H)):
        trace.status = "converged"
    else:
        while True:
            if n >= cfg.max_steps:
                trace.status = "max_steps"
                break
            if t >= cfg.t_max:
                trace.status = "t_max"
                break
            dt = min(stable_dt(ev.state, cfg, radius), cfg.t_max - t)
            new, reason, used, rej = _try_step(ev, dt, cfg, background)
            trace.rejected += rej
            if new is None:
                trace.status = "positivity_loss" if reason == "positivity" else "step_floor"
                break
            ev, t, n = new, t + used, n + 1
            rec = _record(ev, n, t, used)
            trace.records.append(rec)
            trace.accepted = n
            below = below + 1 if _rhs_norm(cfg.kind, rec) < threshold else 0
            if below >= cfg.sustain:
                trace.status = "converged"
                break
    trace.final = ev.state
    trace.wall_time = time.perf_counter() - start
    return trace


def decay_fit(trace: FlowTrace, window: int | None = None, column: str = "Qt_norm"):
    """Least-squares decay rate of log‖·‖² over the last ``window`` records: (rate, r²)."""
    recs = trace.records if window is None else trace.records[-window:]
    if window is None:
        recs = trace.records[len(trace.records) * 2 // 3 :]
    if len(recs) < 5:
        raise InvalidArgument("decay fit needs at least 5 records")
    t = np.array([r.t for r in recs])
    y = np.log(np.array([getattr(r, column) for r in recs]) ** 2)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2
