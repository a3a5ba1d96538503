"""Observables: mass, free energy, blowup-time fits, collapse detection.

The free energy

    F(u) = sum u (log u - 1) area  -  (1/2) sum u v area

is a Lyapunov functional of the flow; its dissipation

    D = sum u |grad(log u - v)|^2 area

should balance -dF/dt up to discretization error, and the trend checker
reports both the monotonicity violations and that identity defect.

Collapse detection implements the concentration picture near blowup:
inside the parabolic window B(x0, b R(t)) with R(t) = sqrt(T_hat - t),
grow disjoint balls around the dominant maxima, flag each ball whose
mass sits within epsilon of 8 pi, and report the leftover window mass
as the residual.  T_hat itself comes from a least-squares fit of
1/sup(u) against time, which is linear when sup grows like 1/(T - t).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    RADIAL_DISK,
    SQUARE,
    Field,
    interpolate,
    local_ball_mass,
)
from .poisson import NEUMANN
from .stepper import SimState

log = logging.getLogger(__name__)

EIGHT_PI = 8.0 * math.pi

# Density floor (relative to sup u) below which log-gradients are not
# trusted; the entropy integrand itself is continuous at 0.
_U_FLOOR_REL = 1e-12

# A cell counts as a collapse candidate when it exceeds this multiple of
# the window median density.
_PEAK_OVER_MEDIAN = 10.0


class NoBlowupTrendError(RuntimeError):
    """The sup-norm series does not grow like a blowup."""


# ---------------------------------------------------------------------------
# Free energy and its trend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    free_energy: float
    dissipation: float
    mass: float
    variant: str  # "dirichlet" (the reference functional) or "neumann"

    @property
    def variant_energy(self) -> bool:
        """True when the record uses the Neumann-variant potential."""
        return self.variant == NEUMANN


def free_energy(state: SimState) -> EnergyRecord:
    """Evaluate F, D and the mass for one state.

    Works on both geometries; for the Neumann model the record is
    flagged as a variant energy (the reference functional is the
    Dirichlet one).
    """
    f = state.field
    pot = state.potential
    areas = f.grid.cell_areas()
    u = f.values
    v = pot.values

    with np.errstate(divide="ignore", invalid="ignore"):
        ent_terms = np.where(u > 0.0, u * (np.log(np.where(u > 0.0, u, 1.0)) - 1.0), 0.0)
    entropy = float(np.sum(ent_terms * areas))
    interaction = 0.5 * float(np.sum(u * v * areas))
    total = float(np.sum(u * areas))

    floor = _U_FLOOR_REL * max(float(u.max()), 1e-300)
    arg = np.log(np.maximum(u, floor)) - v
    if f.grid.domain_kind == SQUARE:
        gx, gy = np.gradient(arg, f.grid.h)
        grad2 = gx ** 2 + gy ** 2
    else:
        gr = np.gradient(arg, f.grid.axis_centers())
        grad2 = gr ** 2
    dissipation = float(np.sum(np.where(u > floor, u * grad2, 0.0) * areas))

    return EnergyRecord(state.t, entropy - interaction, dissipation, total, state.model)


@dataclass(frozen=True)
class TrendVerdict:
    """Monotonicity violations and the dissipation-identity defect."""

    violations: tuple
    max_defect: float
    n_records: int

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0


def energy_trend_check(records, rel_tol: float = 1e-8) -> TrendVerdict:
    """Check F is non-increasing and measure max |dF/dt + D| over a run.

    ``violations`` lists every index i where F[i+1] exceeded F[i] by
    more than rel_tol * |F[i]|.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two records from one run")
    violations = []
    defect = 0.0
    for i in range(len(records) - 1):
        a, b = records[i], records[i + 1]
        if b.free_energy - a.free_energy > rel_tol * abs(a.free_energy):
            violations.append(i)
        dt = b.t - a.t
        if dt > 0:
            rate = (b.free_energy - a.free_energy) / dt
            mean_d = 0.5 * (a.dissipation + b.dissipation)
            defect = max(defect, abs(rate + mean_d))
    return TrendVerdict(tuple(violations), defect, len(records))


# ---------------------------------------------------------------------------
# Blowup-time estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlowupEstimate:
    """T_hat from the 1/sup fit, with the window and residual of the fit."""

    t_hat: float
    fit_window: tuple
    fit_residual: float

    def radius(self, t: float) -> float:
        """Parabolic scale R(t) = sqrt(T_hat - t)."""
        gap = self.t_hat - t
        if gap <= 0.0:
            raise ValueError(f"t = {t} is not before the estimated blowup {self.t_hat}")
        return math.sqrt(gap)


def estimate_blowup_time(series) -> BlowupEstimate:
    """Fit 1/sup ~ c (T_hat - t) over the last decade of sup growth.

    ``series`` is a sequence of (t, sup) samples.  Requires at least 5
    samples and overall growth by 10x; raises NoBlowupTrendError when
    the data does not look like a blowup.
    """
    pts = [(float(t), float(s)) for t, s in series]
    if len(pts) < 5:
        raise NoBlowupTrendError(f"need >= 5 samples, got {len(pts)}")
    ts = np.array([p[0] for p in pts])
    sups = np.array([p[1] for p in pts])
    if np.any(sups <= 0.0):
        raise NoBlowupTrendError("sup-norm samples must be positive")
    if sups.max() < 10.0 * sups[0] * (1.0 - 1e-12):
        raise NoBlowupTrendError(
            f"no blowup trend: sup grew only {sups.max() / sups[0]:.2f}x"
        )
    keep = sups >= sups.max() / 10.0
    if keep.sum() < 3:
        keep = np.zeros_like(keep, dtype=bool)
        keep[-3:] = True
    t_fit = ts[keep]
    y = 1.0 / sups[keep]
    slope, intercept = np.polyfit(t_fit, y, 1)
    if slope >= 0.0:
        raise NoBlowupTrendError("no blowup trend: 1/sup is not decreasing")
    t_hat = -intercept / slope
    if t_hat <= ts[-1]:
        raise NoBlowupTrendError(
            f"fit puts T_hat = {t_hat:.6g} before the last sample {ts[-1]:.6g}"
        )
    resid = y - (slope * t_fit + intercept)
    rel_res = float(np.sqrt(np.mean(resid ** 2)) / np.mean(y))
    return BlowupEstimate(float(t_hat), (float(t_fit[0]), float(t_fit[-1])), rel_res)


# ---------------------------------------------------------------------------
# Collapse detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollapseBall:
    center: tuple
    radius: float
    mass: float
    quantized: bool


@dataclass(frozen=True)
class CollapseReport:
    """Detected collapse balls inside the parabolic window.

    Ball masses are measured inside the window, so the masses plus the
    residual reproduce the window mass exactly (same quadrature).
    """

    t: float
    balls: tuple
    residual_mass: float
    window_center: tuple
    window_b: float
    window_radius: float
    window_mass: float
    epsilon: float


def _ball_window_mass(f: Field, center, radius: float, x0, win_r: float, exclude=()) -> float:
    """Mass over ball(center, radius), inside the window, outside the
    already-claimed balls in ``exclude``."""
    spec = f.grid
    if spec.domain_kind == RADIAL_DISK:
        return local_ball_mass(f, center, min(radius, win_r))
    from .grid import coverage_mass

    def inside(X, Y):
        keep = (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius ** 2
        keep &= (X - x0[0]) ** 2 + (Y - x0[1]) ** 2 <= win_r ** 2
        for (ec, er) in exclude:
            keep &= (X - ec[0]) ** 2 + (Y - ec[1]) ** 2 > er ** 2
        return keep

    return coverage_mass(f, inside)


def _grow_ball(f, center, x0, win_r, step, r_cap, tol_mass, exclude=()):
    """Expand the ball radius until the mass increment per step stalls.

    Mass already claimed by the ``exclude`` balls does not count toward
    growth, so one collapse cannot swallow a neighbor's core.  Returns
    the last radius that still gained at least tol_mass (or the cap),
    with its mass.
    """
    prev_r = step
    prev_m = _ball_window_mass(f, center, prev_r, x0, win_r, exclude)
    k = 2
    while prev_r < r_cap:
        radius = min(step * k, r_cap)
        mass = _ball_window_mass(f, center, radius, x0, win_r, exclude)
        if mass - prev_m < tol_mass:
            return prev_r, prev_m
        prev_r, prev_m = radius, mass
        k += 1
    return prev_r, prev_m


def _ball_centroid(f: Field, center, radius: float, exclude=()):
    """Mass centroid of the field restricted to a ball, skipping any
    already-claimed balls (square grids)."""
    spec = f.grid
    n, h = spec.n, spec.h
    i_lo = max(0, int(math.floor((center[0] - radius) / h)))
    i_hi = min(n, int(math.ceil((center[0] + radius) / h)))
    j_lo = max(0, int(math.floor((center[1] - radius) / h)))
    j_hi = min(n, int(math.ceil((center[1] + radius) / h)))
    if i_lo >= i_hi or j_lo >= j_hi:
        return center
    c = spec.axis_centers()
    X, Y = np.meshgrid(c[i_lo:i_hi], c[j_lo:j_hi], indexing="ij")
    inside = (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius ** 2
    for (ec, er) in exclude:
        inside &= (X - ec[0]) ** 2 + (Y - ec[1]) ** 2 > er ** 2
    w = f.values[i_lo:i_hi, j_lo:j_hi] * inside
    total = float(w.sum())
    if total <= 0.0:
        return center
    return (float((w * X).sum() / total), float((w * Y).sum() / total))


def detect_collapses(
    f: Field,
    t: float,
    est: BlowupEstimate,
    x0,
    b: float,
    epsilon: float = 0.5,
    c3: float = 3.0,
    growth_step: float | None = None,
) -> CollapseReport:
    """Find disjoint collapse balls in the window B(x0, b R(t)).

    Local maxima above 10x the window median density (and within c3 R(t)
    of x0, mirroring where collapse centers can live) seed balls that
    grow until the mass gained per radius step falls below 1% of 8 pi or
    the radius hits c3 R(t).  The radius step defaults to half the
    parabolic scale R(t) (never below the cell size), so growth is not
    stalled by the small annuli near the seed.  Overlapping grown balls
    are merged at their mass centroid and re-grown; balls that end up
    carrying less than the increment tolerance are discarded.  Each ball
    is flagged quantized when |mass - 8 pi| < epsilon.
    """
    spec = f.grid
    radius_t = est.radius(t)
    win_r = b * radius_t
    r_cap = min(c3 * radius_t, win_r)
    if growth_step is None:
        growth_step = max(spec.h, radius_t / 2.0)
    tol_mass = 0.01 * EIGHT_PI

    window_mass = local_ball_mass(f, x0, win_r)

    if spec.domain_kind == RADIAL_DISK:
        return _detect_radial(f, t, x0, b, win_r, r_cap, growth_step, tol_mass, epsilon, window_mass)

    c = spec.axis_centers()
    X, Y = np.meshgrid(c, c, indexing="ij")
    dist2 = (X - x0[0]) ** 2 + (Y - x0[1]) ** 2
    in_window = dist2 <= win_r ** 2
    if not in_window.any():
        raise ValueError("window does not meet the domain")
    median = float(np.median(f.values[in_window]))

    u = f.values
    padded = np.pad(u, 1, constant_values=-np.inf)
    is_max = np.ones_like(u, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= u >= padded[1 + di : 1 + di + u.shape[0], 1 + dj : 1 + dj + u.shape[1]]
    candidates_mask = (
        is_max
        & in_window
        & (u > _PEAK_OVER_MEDIAN * median)
        & (u > 0.0)
        & (dist2 <= (c3 * radius_t) ** 2)
    )
    idx = np.transpose(np.nonzero(candidates_mask))
    heights = u[candidates_mask]
    idx = idx[np.lexsort((idx[:, 1], idx[:, 0], -heights))]

    balls = []  # (center, radius, mass)
    for ix, iy in idx:
        pt = (float(c[ix]), float(c[iy]))
        if any(
            (pt[0] - bc[0]) ** 2 + (pt[1] - bc[1]) ** 2 <= br ** 2
            for (bc, br, _) in balls
        ):
            continue
        claimed = [(bc, br) for (bc, br, _) in balls]
        # recentre on the local mass before committing to greedy growth,
        # otherwise a seed on a plateau edge can bridge to a neighbor
        center = _ball_centroid(f, pt, min(3.0 * growth_step, r_cap), claimed)
        radius, mass = _grow_ball(f, center, x0, win_r, growth_step, r_cap, tol_mass, claimed)
        if mass > tol_mass:
            balls.append((center, radius, mass))

    balls = _merge_overlaps(f, balls, x0, win_r, growth_step, r_cap, tol_mass)
    # final masses over the disjoint balls, same quadrature as the window
    balls = [
        (bc, br, _ball_window_mass(f, bc, br, x0, win_r)) for (bc, br, _) in balls
    ]
    balls.sort(key=lambda item: (-item[2], item[0]))
    out = tuple(
        CollapseBall(bc, br, bm, abs(bm - EIGHT_PI) < epsilon) for bc, br, bm in balls
    )
    residual = window_mass - sum(bl.mass for bl in out)
    return CollapseReport(
        t, out, residual, tuple(x0), b, win_r, window_mass, epsilon
    )


def _merge_overlaps(f, balls, x0, win_r, step, r_cap, tol_mass):
    """Merge intersecting balls at their mass-weighted center and re-grow."""
    balls = list(balls)
    merged = True
    while merged:
        merged = False
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                (ci, ri, mi), (cj, rj, mj) = balls[i], balls[j]
                gap2 = (ci[0] - cj[0]) ** 2 + (ci[1] - cj[1]) ** 2
                if gap2 <= (ri + rj) ** 2:
                    w = mi + mj
                    if w <= 0.0:
                        del balls[j]
                        merged = True
                        break
                    center = (
                        (ci[0] * mi + cj[0] * mj) / w,
                        (ci[1] * mi + cj[1] * mj) / w,
                    )
                    log.info("merging overlapping collapse balls at %s and %s", ci, cj)
                    radius, mass = _grow_ball(f, center, x0, win_r, step, r_cap, tol_mass)
                    balls[i] = (center, radius, mass)
                    del balls[j]
                    merged = True
                    break
            if merged:
                break
    return balls


def _detect_radial(f, t, x0, b, win_r, r_cap, step, tol_mass, epsilon, window_mass):
    """Radial fields concentrate at the origin; grow a single central ball."""
    r = f.grid.axis_centers()
    in_window = r <= win_r
    if not in_window.any():
        raise ValueError("window does not meet the domain")
    median = float(np.median(f.values[in_window]))
    core = float(f.values[0])
    balls = ()
    if core > _PEAK_OVER_MEDIAN * median and core > 0.0:
        radius, mass = _grow_ball(f, (0.0, 0.0), (0.0, 0.0), win_r, step, r_cap, tol_mass)
        balls = (CollapseBall((0.0, 0.0), radius, mass, abs(mass - EIGHT_PI) < epsilon),)
    residual = window_mass - sum(bl.mass for bl in balls)
    return CollapseReport(t, balls, residual, tuple(x0), b, win_r, window_mass, epsilon)


def write_collapse_csv(report: CollapseReport, path) -> None:
    """Tabulate a report, one row per ball."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y,radius,mass,quantized,residual_mass,window_b,window_radius\n")
        for bl in report.balls:
            fh.write(
                f"{float(report.t)!r},{float(bl.center[0])!r},{float(bl.center[1])!r},"
                f"{float(bl.radius)!r},{float(bl.mass)!r},{int(bl.quantized)},"
                f"{float(report.residual_mass)!r},{float(report.window_b)!r},"
                f"{float(report.window_radius)!r}\n"
            )


# ---------------------------------------------------------------------------
# Radial averages, shell mass, window sweeps
# ---------------------------------------------------------------------------


def radial_average(f: Field, center, r: float, n_angles: int = 64) -> float:
    """Circle average of the density at radius r around a center.

    Square fields are sampled at equispaced angles with bilinear
    interpolation; radial fields interpolate directly in radius.
    Raises when the circle leaves the domain.
    """
    spec = f.grid
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if spec.domain_kind == RADIAL_DISK:
        if math.hypot(*center) > 1e-9 * spec.length:
            raise ValueError("radial averages on the disk are centered at the origin")
        if r > spec.length:
            raise ValueError("circle exits the domain")
        return float(interpolate(f, r))
    if (
        center[0] - r < 0.0
        or center[0] + r > spec.length
        or center[1] - r < 0.0
        or center[1] + r > spec.length
    ):
        raise ValueError("circle exits the domain")
    theta = 2.0 * math.pi * np.arange(n_angles) / n_angles
    xs = center[0] + r * np.cos(theta)
    ys = center[1] + r * np.sin(theta)
    return float(np.mean(interpolate(f, xs, ys)))


def shell_mass(f: Field, center, r: float, n_samples: int | None = None) -> float:
    """Trapezoid quadrature of rho * avg(rho) over rho in (0, r].

    Equals local_ball_mass / (2 pi) up to the difference between the two
    quadratures; the agreement is one of the module's invariants.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if n_samples is None:
        n_samples = max(16, int(math.ceil(2.0 * r / f.grid.h)))
    rho = np.linspace(0.0, r, n_samples + 1)
    vals = np.array([rr * radial_average(f, center, rr) for rr in rho])
    return float(np.trapezoid(vals, rho))


def mass_window_sweep(f: Field, t: float, est: BlowupEstimate, x0, b_list):
    """local_ball_mass at radii b R(t): exhibits the collapse-mass plateau."""
    radius_t = est.radius(t)
    rows = []
    for b in b_list:
        r = b * radius_t
        rows.append({"b": float(b), "radius": r, "mass": local_ball_mass(f, x0, r)})
    return rows
