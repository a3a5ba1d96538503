"""High-resolution radial solver in cumulative-mass form.

For radially symmetric data on the disk, integrating the density
equation over B(0, r) and substituting the closed-form potential slope
v_r = -M/(2 pi r) turns the dynamics into a scalar equation for the
cumulative mass M(r, t) = mass inside radius r:

    M_t = M_rr - M_r / r + M M_r / (2 pi r),
    M(0) = 0,   M(R) = total mass   (pinned for all time).

This is the brute-force oracle used to cross-validate the 2D stepper
and to run the near-blowup quantization experiments at resolutions the
2D grid cannot afford.

Discretization: unknowns at r_i = (i + 1/2) dr (the first node sits at
dr/2; the origin enters only through the pinned value M(0) = 0, which is
the r -> 0 limit of the quadratically vanishing mass of any regular
density).  The linear part M_rr - M_r/r is advanced implicitly with a
banded solve, so only the nonlinear inward advection - upwinded on its
characteristic direction - constrains the time step.  The resulting
matrix is an M-matrix and the update is monotone under the advective
CFL, which preserves the ordering invariants checked below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .grid import RADIAL_DISK, Field, GridSpec


class MonotonicityError(RuntimeError):
    """M lost radial monotonicity beyond tolerance (scheme instability)."""


@dataclass(frozen=True)
class MassProfile:
    """Cumulative mass on (0, R]: nodes at (i + 1/2) dr plus the endpoint R.

    ``mass[-1]`` is the pinned total; it never changes under stepping.
    """

    radii: np.ndarray
    mass: np.ndarray
    t: float

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float).copy()
        mass = np.asarray(self.mass, dtype=float).copy()
        if radii.ndim != 1 or radii.shape != mass.shape or radii.size < 9:
            raise ValueError("radii and mass must be matching 1D arrays (>= 9 nodes)")
        if not np.all(np.diff(radii) > 0) or radii[0] <= 0:
            raise ValueError("radii must be strictly increasing on (0, R]")
        radii.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "mass", mass)

    @property
    def n(self) -> int:
        """Number of interior (cell-centered) nodes."""
        return self.radii.size - 1

    @property
    def outer_radius(self) -> float:
        return float(self.radii[-1])

    @property
    def dr(self) -> float:
        return self.outer_radius / self.n

    @property
    def total(self) -> float:
        return float(self.mass[-1])

    def grid_spec(self) -> GridSpec:
        return GridSpec(RADIAL_DISK, self.n, self.outer_radius)


def profile_from_field(f: Field, t: float = 0.0) -> MassProfile:
    """Exact cumulative mass of a piecewise-constant radial density."""
    spec = f.grid
    if spec.domain_kind != RADIAL_DISK:
        raise ValueError("profile_from_field expects a radial-disk field")
    n, dr = spec.n, spec.h
    faces = np.arange(n + 1) * dr
    m_faces = np.concatenate(([0.0], np.cumsum(f.values * spec.cell_areas())))
    centers = spec.axis_centers()
    # Integrate the constant density across the inner half of each cell.
    m_centers = m_faces[:-1] + f.values * math.pi * (centers ** 2 - faces[:-1] ** 2)
    radii = np.concatenate((centers, [spec.length]))
    mass = np.concatenate((m_centers, [m_faces[-1]]))
    return MassProfile(radii, mass, t)


def _gaps(p: MassProfile):
    """Left/right gaps of each interior node, including the half-cells
    against the pinned boundary values at r = 0 and r = R."""
    dr = p.dr
    n = p.n
    a = np.full(n, dr)
    b = np.full(n, dr)
    a[0] = dr / 2.0
    b[-1] = dr / 2.0
    return a, b


def _stencils(p: MassProfile):
    """Three-point first/second derivative weights on the nonuniform ends."""
    a, b = _gaps(p)
    c1 = (-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b)))
    c2 = (2.0 / (a * (a + b)), -2.0 / (a * b), 2.0 / (b * (a + b)))
    return c1, c2


def _advection(p: MassProfile) -> np.ndarray:
    """Explicit term (M / (2 pi r)) M_r, upwinded toward larger r.

    The characteristic speed is inward (mass is drawn toward the
    origin), so the upwind side of each node is its outer neighbor.
    """
    m = p.mass[:-1]
    r = p.radii[:-1]
    _, b = _gaps(p)
    outer = p.mass[1:]
    speed = m / (2.0 * math.pi * r)
    return speed * (outer - m) / b


def stable_oracle_dt(p: MassProfile, safety: float = 0.5, dt_max: float | None = None) -> float:
    """Advective CFL limit for the explicit nonlinear term.

    The linear part is implicit, so diffusion does not constrain dt;
    dt_max (default: one grid spacing in time units) bounds the step
    when the advection is weak so the backward-Euler error stays small.
    """
    if dt_max is None:
        dt_max = p.dr
    _, b = _gaps(p)
    speed = p.mass[:-1] / (2.0 * math.pi * p.radii[:-1])
    with np.errstate(divide="ignore"):
        limits = np.where(speed > 0.0, b / np.maximum(speed, 1e-300), np.inf)
    return float(min(safety * limits.min(), dt_max))


def oracle_step(p: MassProfile, dt: float) -> MassProfile:
    """Advance one step: implicit linear part, explicit upwind advection.

    The boundary values M(0) = 0 and M(R) = total enter the stencils
    exactly.  Raises MonotonicityError if the updated profile loses
    monotonicity beyond 1e-12 of the total mass.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    _, b_gap = _gaps(p)
    speed = p.mass[:-1] / (2.0 * math.pi * p.radii[:-1])
    cfl = float((dt * speed / b_gap).max(initial=0.0))
    if cfl > 1.0 + 1e-9:
        raise ValueError(f"dt violates the advective CFL (dt*speed/gap = {cfl:.3f})")

    n = p.n
    r = p.radii[:-1]
    lam = p.total
    (c1l, c1c, c1r), (c2l, c2c, c2r) = _stencils(p)
    # L = d^2/dr^2 - (1/r) d/dr, row weights for (left, center, right).
    ll = c2l - c1l / r
    lc = c2c - c1c / r
    lr = c2r - c1r / r

    rhs = p.mass[:-1] + dt * _advection(p)
    rhs[-1] += dt * lr[-1] * lam  # pinned M(R); pinned M(0) contributes 0

    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * lr[:-1]
    ab[1, :] = 1.0 - dt * lc
    ab[2, :-1] = -dt * ll[1:]
    new = solve_banded((1, 1), ab, rhs)

    full = np.concatenate((new, [lam]))
    worst = float(np.diff(np.concatenate(([0.0], full))).min())
    if worst < -1e-12 * lam:
        raise MonotonicityError(
            f"monotonicity defect {worst:.3e} exceeds 1e-12 * total at t={p.t + dt:.6g}"
        )
    return MassProfile(p.radii, full, p.t + dt)


def oracle_density(p: MassProfile) -> Field:
    """Recover the radial density u = M_r / (2 pi r) at the cell nodes."""
    n = p.n
    r = p.radii[:-1]
    (c1l, c1c, c1r), _ = _stencils(p)
    m = p.mass[:-1]
    left = np.concatenate(([0.0], m[:-1]))
    right = np.concatenate((m[1:], [p.total]))
    m_r = c1l * left + c1c * m + c1r * right
    u = np.maximum(m_r, 0.0) / (2.0 * math.pi * r)
    return Field(p.grid_spec(), u)


def mass_at(p: MassProfile, r) -> np.ndarray:
    """Cumulative mass interpolated at arbitrary radii (M(0) = 0)."""
    xp = np.concatenate(([0.0], p.radii))
    fp = np.concatenate(([0.0], p.mass))
    return np.interp(np.asarray(r, dtype=float), xp, fp)


def advance_profile(
    p: MassProfile,
    *,
    t_end: float | None = None,
    max_steps: int | None = None,
    sup_cap: float | None = None,
    safety: float = 0.5,
    dt_max: float | None = None,
    on_step=None,
):
    """Step a profile until t_end, a step budget, or a sup-density cap.

    Returns (profile, reason) with the same reason vocabulary as the 2D
    run loop.  ``on_step`` receives each new profile.
    """
    from .stepper import DENSITY_CAP_HIT, MAX_STEPS, REACHED_T_END

    steps = 0
    while True:
        if t_end is not None and p.t >= t_end - 1e-15 * max(abs(t_end), 1.0):
            return p, REACHED_T_END
        if max_steps is not None and steps >= max_steps:
            return p, MAX_STEPS
        if sup_cap is not None and oracle_density(p).sup >= sup_cap:
            return p, DENSITY_CAP_HIT
        dt = stable_oracle_dt(p, safety=safety, dt_max=dt_max)
        if t_end is not None:
            dt = min(dt, t_end - p.t)
        p = oracle_step(p, dt)
        steps += 1
        if on_step is not None:
            on_step(p)


def write_profile_csv(p: MassProfile, path) -> None:
    """Dump "r,M,u" rows; u at the endpoint uses the one-sided slope."""
    u = oracle_density(p).values
    u_end = max(0.0, (p.total - p.mass[-2])) / (p.dr / 2.0) / (
        2.0 * math.pi * p.outer_radius
    )
    u_all = np.concatenate((u, [u_end]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r,M,u\n")
        for r, m, uu in zip(p.radii, p.mass, u_all):
            fh.write(f"{float(r)!r},{float(m)!r},{float(uu)!r}\n")


def read_profile_csv(path, t: float = 0.0) -> MassProfile:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "r,M,u":
            raise ValueError(f"unrecognized profile CSV header {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    radii = np.array([float(r[0]) for r in rows])
    mass = np.array([float(r[1]) for r in rows])
    return MassProfile(radii, mass, t)
