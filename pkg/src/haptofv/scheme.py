"""Explicit positivity-preserving finite-volume stepper.

Cell flux of psi through a face is

    S_delta(mean phi) * [ alpha * dphi * psi_donor - (D/2) * d(psi^2) ],

with the donor cell chosen by the sign of the drift and the self-diffusion in
the symmetric psi^2 form. Psi takes a forward-Euler step (transport plus
reaction); phi is then advanced by the exact decay phi * exp(-gamma dt psi)
with psi frozen at the old level, so phi stays in [0, phi0] and never grows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .diagnostics import DiagnosticsRecord, evaluate
from .grid import Grid
from .model import InitialData, ModelParams

log = logging.getLogger(__name__)


class SchemeFailure(RuntimeError):
    """Raised when the stepper cannot produce an admissible state."""

    def __init__(self, message, state=None, record=None):
        super().__init__(message)
        self.state = state
        self.record = record


@dataclass
class State:
    grid: Grid
    psi: np.ndarray
    phi: np.ndarray
    time: float = 0.0
    floored: int = 0

    def copy(self) -> "State":
        return replace(self, psi=self.psi.copy(), phi=self.phi.copy())


@dataclass
class SchemeConfig:
    t_end: float = 1.0
    cfl_safety: float = 0.45
    max_dt: float = 1e-2
    negativity_tolerance: float = 0.0
    flux_form: str = "upwind_hapto_central_diff"

    def __post_init__(self):
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.t_end >= 0.0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if not self.max_dt > 0.0:
            raise ValueError(f"max_dt must be positive, got {self.max_dt}")
        if not self.negativity_tolerance >= 0.0:
            raise ValueError("negativity_tolerance must be non-negative")
        if self.flux_form != "upwind_hapto_central_diff":
            raise ValueError(f"unsupported flux form {self.flux_form!r}")


def _kernel_view(grid: Grid, a: np.ndarray) -> np.ndarray:
    if grid.dim == 1:
        return a.reshape(grid.n[0], 1)
    if grid.dim == 2:
        return a
    raise NotImplementedError("the stepper supports 1-D and 2-D grids only")


def _spacings(grid: Grid):
    h = grid.spacing
    return (h[0], 1.0) if grid.dim == 1 else (h[0], h[1])


def compute_flux(state: State, params: ModelParams) -> tuple:
    """Face fluxes of psi, one array per axis (interior faces only)."""
    grid = state.grid
    psi = np.ascontiguousarray(_kernel_view(grid, state.psi), dtype=np.float64)
    phi = np.ascontiguousarray(_kernel_view(grid, state.phi), dtype=np.float64)
    n0, n1 = psi.shape
    fx = np.zeros((max(n0 - 1, 0), n1))
    fy = np.zeros((n0, max(n1 - 1, 0)))
    h0, h1 = _spacings(grid)
    K.fluxes(psi, phi, h0, h1, params.as_coefficients(), fx, fy)
    out = (fx[:, 0],) if grid.dim == 1 else (fx, fy)
    for axis, f in enumerate(out):
        bad = ~np.isfinite(f)
        if np.any(bad):
            idx = np.unravel_index(int(np.argmax(bad)), f.shape)
            raise SchemeFailure(f"non-finite flux on axis {axis} at face {tuple(int(i) for i in idx)}", state)
    return out


def stable_dt(state: State, params: ModelParams, config: SchemeConfig) -> float:
    grid = state.grid
    psi = np.ascontiguousarray(_kernel_view(grid, state.psi), dtype=np.float64)
    phi = np.ascontiguousarray(_kernel_view(grid, state.phi), dtype=np.float64)
    h0, h1 = _spacings(grid)
    dt = K.stable_dt(psi, phi, h0, h1, float(grid.dim), params.as_coefficients(), config.cfl_safety, config.max_dt)
    if not (np.isfinite(dt) and dt > 0):
        raise SchemeFailure(f"stable time step is not a positive finite number: {dt}", state)
    return float(dt)


def step(state: State, params: ModelParams, dt: float, negativity_tolerance: float = 0.0) -> State:
    """Advance one step of size ``dt``, halving it (at most 10 times) if psi would turn negative.

    The returned state's ``time`` reflects the step actually taken.
    """
    grid = state.grid
    psi = np.array(_kernel_view(grid, state.psi), dtype=np.float64)
    phi = np.array(_kernel_view(grid, state.phi), dtype=np.float64)
    fx = np.zeros((psi.shape[0] - 1, psi.shape[1]))
    fy = np.zeros((psi.shape[0], psi.shape[1] - 1))
    psi_w = np.empty_like(psi)
    phi_w = np.empty_like(phi)
    h0, h1 = _spacings(grid)
    coef = params.as_coefficients()
    for _ in range(K.MAX_HALVINGS + 1):
        res = K.try_step(psi, phi, dt, h0, h1, coef, negativity_tolerance, fx, fy, psi_w, phi_w)
        if res >= 0:
            return State(grid, psi_w.reshape(grid.shape), phi_w.reshape(grid.shape), state.time + dt, state.floored + res)
        if res == -2:
            raise SchemeFailure(f"non-finite value in step at t={state.time}", state)
        dt *= 0.5
    raise SchemeFailure(
        f"psi stayed negative after {K.MAX_HALVINGS} halvings at t={state.time}, last dt={dt * 2}", state
    )


@dataclass
class Trajectory:
    """Snapshots at requested output times plus the diagnostics record of a run."""

    states: list = field(default_factory=list)
    record: DiagnosticsRecord = None
    steps: int = 0
    halvings: int = 0
    formal: bool = False


def simulate(
    grid: Grid,
    params: ModelParams,
    init: InitialData,
    config: SchemeConfig,
    output_times=(),
    stride: int = 1,
) -> Trajectory:
    """Run the scheme from ``init`` up to ``config.t_end``.

    Diagnostics are sampled at t=0, every ``stride`` accepted steps, at each output
    time and at ``t_end``. States are kept for t=0, the output times and ``t_end``.
    Raises :class:`SchemeFailure` with the partial record attached.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    t_end = float(config.t_end)
    stops = sorted({float(t) for t in output_times if 0.0 < float(t) < t_end} | {t_end})
    psi = np.array(_kernel_view(grid, np.asarray(init.psi0, dtype=np.float64)), dtype=np.float64)
    phi = np.array(_kernel_view(grid, np.asarray(init.phi0, dtype=np.float64)), dtype=np.float64)
    fx = np.zeros((psi.shape[0] - 1, psi.shape[1]))
    fy = np.zeros((psi.shape[0], psi.shape[1] - 1))
    psi_w = np.empty_like(psi)
    phi_w = np.empty_like(phi)
    h0, h1 = _spacings(grid)
    coef = params.as_coefficients()

    record = DiagnosticsRecord.for_run(params, init)
    state = State(grid, psi.reshape(grid.shape).copy(), phi.reshape(grid.shape).copy(), 0.0, 0)
    traj = Trajectory(states=[state], record=record, formal=params.delta == 0.0)
    record.append(evaluate(state, params), psi_min=float(np.min(state.psi)), phi_increase=0.0)

    t = 0.0
    floored = 0
    for stop in stops:
        while t < stop:
            t, steps, fl, status, min_psi, max_inc, halv = K.advance(
                psi, phi, t, stop, stride, h0, h1, float(grid.dim), coef,
                config.cfl_safety, config.max_dt, config.negativity_tolerance, fx, fy, psi_w, phi_w,
            )
            floored += fl
            traj.steps += steps
            traj.halvings += halv
            state = State(grid, psi.reshape(grid.shape).copy(), phi.reshape(grid.shape).copy(), t, floored)
            if status != K.OK:
                reason = "non-finite values" if status == K.NONFINITE else "repeated step rejection"
                raise SchemeFailure(f"scheme failed at t={t!r} after {traj.steps} steps: {reason}", state, record)
            if steps:
                record.append(evaluate(state, params), psi_min=min_psi, phi_increase=max_inc)
        if state.time > traj.states[-1].time:
            traj.states.append(state)
    return traj
