"""Explicit conservative stepping of the drift-diffusion density.

The density u obeys u_t = Lap u - div(u grad v) with the combined
diffusive + drift flux vanishing on the walls.  Each interior face
carries the flux

    F = -(u_R - u_L)/h + u_up * (v_R - v_L)/h

where u_up is the upwind cell density for the face drift w = (v_R - v_L)/h
(the advective velocity points up the potential gradient, which is what
makes the dynamics aggregate).  Boundary faces carry no flux at all, so
the cell updates telescope and total mass is conserved to floating-point
summation exactly.  The potential is re-solved every step; lagging it
would spoil the discrete free-energy trend.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .grid import SQUARE, Field, GridSpec, InitialProfile, make_initial
from .poisson import DIRICHLET, NEUMANN, Potential, solve_dirichlet, solve_neumann

log = logging.getLogger(__name__)

REACHED_T_END = "reached_t_end"
MAX_STEPS = "max_steps"
DENSITY_CAP_HIT = "density_cap_hit"

CLIP_AND_REBALANCE = "clip-and-rebalance"
REJECT = "reject"

# Fraction of sup(u) below which a negative cell value is treated as
# summation noise rather than a positivity violation.
_NEG_TOL = 1e-13


class NegativeDensityError(RuntimeError):
    """A cell went negative beyond summation noise in reject mode."""


@dataclass(frozen=True)
class StepperConfig:
    """Stability and positivity controls for the explicit update.

    ``dt_safety`` multiplies the combined CFL limit; 0.3 keeps the update
    provably positivity-preserving (diffusion + 4 outflowing faces sum to
    at most 0.9 of a cell).  ``max_density_cap`` is an optional absolute
    density used as the default blowup proxy by run_until.
    """

    dt_safety: float = 0.3
    max_density_cap: float | None = None
    positivity_mode: str = CLIP_AND_REBALANCE

    def __post_init__(self):
        if not (0.0 < self.dt_safety <= 1.0):
            raise ValueError(f"dt_safety must be in (0, 1], got {self.dt_safety}")
        if self.positivity_mode not in (CLIP_AND_REBALANCE, REJECT):
            raise ValueError(f"unknown positivity_mode {self.positivity_mode!r}")


@dataclass(frozen=True)
class StopRule:
    """First-triggered-wins halting conditions for run_until."""

    t_end: float = math.inf
    max_steps: int | None = None
    density_cap: float | None = None


@dataclass(frozen=True)
class SimState:
    """One snapshot of the coupled (density, potential) pair."""

    field: Field
    potential: Potential
    t: float
    step_index: int
    dt_last: float
    model: str

    def __post_init__(self):
        if self.model not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown model {self.model!r}")


def _solve_model(field: Field, model: str, tol: float, x0=None) -> Potential:
    if model == DIRICHLET:
        return solve_dirichlet(field, tol, x0=x0)
    return solve_neumann(field, tol, x0=x0)


def initial_state(
    spec: GridSpec, profile: InitialProfile, model: str, tol: float = 1e-10
) -> SimState:
    """Build the t = 0 state: initial field plus its potential solve."""
    field = make_initial(spec, profile)
    pot = _solve_model(field, model, tol)
    return SimState(field, pot, t=0.0, step_index=0, dt_last=0.0, model=model)


def max_face_drift(potential: Potential) -> float:
    """Largest |(v_R - v_L)/h| over the interior faces."""
    v = potential.values
    h = potential.grid.h
    wx = np.abs(v[1:, :] - v[:-1, :]).max(initial=0.0)
    wy = np.abs(v[:, 1:] - v[:, :-1]).max(initial=0.0)
    return max(wx, wy) / h


def stable_dt(state: SimState, cfg: StepperConfig) -> float:
    """dt_safety * min(h^2/4, h / (2 max face drift)).

    Zero drift returns the pure diffusion limit.
    """
    h = state.field.grid.h
    dt = h ** 2 / 4.0
    drift = max_face_drift(state.potential)
    if drift > 0.0:
        dt = min(dt, h / (2.0 * drift))
    return cfg.dt_safety * dt


def advance_field(field: Field, potential: Potential, dt: float, cfg: StepperConfig) -> Field:
    """One flux-form update of the density; the potential is held fixed.

    This is the raw transport kernel: callers that want the coupled
    dynamics should use :func:`step`, which re-solves the potential.
    Passing a zero potential turns it into a pure no-flux heat update.
    """
    spec = field.grid
    if spec.domain_kind != SQUARE:
        raise ValueError("the 2D stepper runs on square grids; use the radial oracle for the disk")
    if spec != potential.grid:
        raise ValueError("field and potential live on different grids")
    u = field.values
    v = potential.values
    h = spec.h

    # x-faces between rows ix and ix+1, y-faces between columns.
    wx = (v[1:, :] - v[:-1, :]) / h
    wy = (v[:, 1:] - v[:, :-1]) / h
    ux_up = np.where(wx > 0.0, u[:-1, :], u[1:, :])
    uy_up = np.where(wy > 0.0, u[:, :-1], u[:, 1:])
    fx = -(u[1:, :] - u[:-1, :]) / h + ux_up * wx
    fy = -(u[:, 1:] - u[:, :-1]) / h + uy_up * wy

    new = u.copy()
    scale = dt / h
    new[:-1, :] -= fx * scale
    new[1:, :] += fx * scale
    new[:, :-1] -= fy * scale
    new[:, 1:] += fy * scale

    floor = -_NEG_TOL * max(u.max(initial=0.0), 1e-300)
    worst = new.min(initial=0.0)
    if worst < floor:
        if cfg.positivity_mode == REJECT:
            raise NegativeDensityError(
                f"cell density {worst:.3e} below tolerance {floor:.3e}"
            )
        neg = new < 0.0
        clipped = -float(np.sum(new[neg])) * h ** 2
        new[neg] = 0.0
        pos_total = float(np.sum(new)) * h ** 2
        if pos_total > 0.0:
            new *= 1.0 - clipped / pos_total
        log.debug("clipped %.3e of negative mass and rebalanced", clipped)
    else:
        np.clip(new, 0.0, None, out=new)
    return Field(spec, new)


def step(state: SimState, cfg: StepperConfig, tol: float = 1e-10) -> SimState:
    """Advance one stable step and re-solve the potential."""
    dt = stable_dt(state, cfg)
    return step_with_dt(state, dt, cfg, tol)


def step_with_dt(state: SimState, dt: float, cfg: StepperConfig, tol: float = 1e-10) -> SimState:
    """Advance by a caller-chosen dt (must respect the stability limit)."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    field = advance_field(state.field, state.potential, dt, cfg)
    pot = _solve_model(field, state.model, tol, x0=state.potential.values)
    return SimState(field, pot, state.t + dt, state.step_index + 1, dt, state.model)


def run_until(
    state: SimState,
    cfg: StepperConfig,
    stop: StopRule,
    on_step=None,
    tol: float = 1e-10,
):
    """Iterate steps until the first stop rule triggers.

    Returns (final state, reason) with reason one of ``reached_t_end``,
    ``max_steps``, ``density_cap_hit``.  ``on_step`` is called with each
    new state (not the initial one).  Steps are clamped so the final one
    lands exactly on t_end.
    """
    cap = stop.density_cap if stop.density_cap is not None else cfg.max_density_cap
    while True:
        if state.t >= stop.t_end - 1e-15 * max(stop.t_end, 1.0):
            return state, REACHED_T_END
        if stop.max_steps is not None and state.step_index >= stop.max_steps:
            return state, MAX_STEPS
        if cap is not None and state.field.sup >= cap:
            return state, DENSITY_CAP_HIT
        dt = stable_dt(state, cfg)
        if math.isfinite(stop.t_end):
            dt = min(dt, stop.t_end - state.t)
        state = step_with_dt(state, dt, cfg, tol)
        if on_step is not None:
            on_step(state)
