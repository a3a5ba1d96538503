"""Backward self-similar zoom frames and scaling-back views.

A frame freezes the solution near an (estimated) blowup center in the
moving variables

    y = (x - x0) / sqrt(T_hat - t),    s = -log(T_hat - t),
    z(y, s) = (T_hat - t) * u(x, t),

sampled on a fixed y-grid covering the square |y|_inf <= y_half.  The
change of variables preserves mass, so the frame mass must reproduce
the physical mass in the pullback window (checked to interpolation
accuracy), and the second moment of z is the boundedness observable of
the parabolic envelope.

Frames are pullbacks of stored physical snapshots; the rescaled
equation is never integrated directly, which avoids a second solver and
a free-space convolution.  Because s depends sensitively on T_hat near
blowup, envelope series can be recomputed under small T_hat
perturbations and flagged when the plateau level moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import RADIAL_DISK, SQUARE, Field, box_mass, interpolate
from .diagnostics import BlowupEstimate


@dataclass(frozen=True)
class RescaledFrame:
    """Zoomed density z on the y-grid at self-similar time s."""

    s: float
    t: float
    t_hat: float
    center: tuple
    y_half: float
    values: np.ndarray
    frame_mass: float
    second_moment: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dy(self) -> float:
        return 2.0 * self.y_half / self.n

    def y_centers(self) -> np.ndarray:
        return -self.y_half + (np.arange(self.n) + 0.5) * self.dy


def _frame_moments(values: np.ndarray, y_half: float):
    n = values.shape[0]
    dy = 2.0 * y_half / n
    y = -y_half + (np.arange(n) + 0.5) * dy
    r2 = y[:, None] ** 2 + y[None, :] ** 2
    mass = float(values.sum() * dy ** 2)
    second = float((values * r2).sum() * dy ** 2)
    return mass, second


def _square_window_arc_fraction(rr: np.ndarray, half: float) -> np.ndarray:
    """Fraction of the circle of radius r inside the centered square."""
    return np.where(
        rr <= half,
        1.0,
        1.0 - 4.0 * np.arccos(np.clip(half / np.maximum(rr, 1e-300), 0.0, 1.0)) / math.pi,
    )


def _radial_frame_moments(field: Field, half: float, gap: float):
    """Exact mass / second moment of a radial pullback over the square
    window of physical half-width ``half``.

    The y-grid point-samples miss a collapse core narrower than a frame
    cell, so the moments integrate the piecewise-constant radial density
    directly, weighting each shell by its arc fraction in the window.
    """
    spec = field.grid
    r = spec.axis_centers()
    keep = r <= half * math.sqrt(2.0)
    rr = r[keep]
    frac = _square_window_arc_fraction(rr, half)
    contrib = field.values[keep] * spec.cell_areas()[keep] * frac
    mass = float(np.sum(contrib))
    second = float(np.sum(contrib * rr ** 2) / gap)
    return mass, second


def _sample_physical(field: Field, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    if field.grid.domain_kind == RADIAL_DISK:
        return interpolate(field, np.hypot(xs, ys))
    return interpolate(field, xs, ys)


def make_frame(
    state_or_field,
    est: BlowupEstimate,
    x0,
    y_max: float,
    n_y: int,
    t: float | None = None,
) -> RescaledFrame:
    """Pull one snapshot back to the self-similar frame.

    Accepts either a SimState (which carries its own time) or a bare
    Field plus ``t``.  The pullback square x0 +- y_max R(t) must lie
    inside the domain or the frame is refused as too wide for this t.
    """
    if hasattr(state_or_field, "field"):
        field = state_or_field.field
        t = state_or_field.t
    else:
        field = state_or_field
        if t is None:
            raise ValueError("a bare Field needs an explicit sample time t")
    if y_max <= 0 or n_y < 4:
        raise ValueError("need y_max > 0 and n_y >= 4")
    gap = est.t_hat - t
    if gap <= 0:
        raise ValueError(f"sample time {t} is not before T_hat = {est.t_hat}")
    scale = math.sqrt(gap)

    spec = field.grid
    half = y_max * scale
    if spec.domain_kind == SQUARE:
        if (
            x0[0] - half < 0.0
            or x0[0] + half > spec.length
            or x0[1] - half < 0.0
            or x0[1] + half > spec.length
        ):
            raise ValueError("pullback window exits the domain (frame too wide for this t)")
    else:
        if math.hypot(*x0) > 1e-9 * spec.length:
            raise ValueError("radial frames must be centered at the origin")
        if half * math.sqrt(2.0) > spec.length:
            raise ValueError("pullback window exits the domain (frame too wide for this t)")

    dy = 2.0 * y_max / n_y
    y = -y_max + (np.arange(n_y) + 0.5) * dy
    X = x0[0] + y[:, None] * scale + np.zeros((1, n_y))
    Y = x0[1] + np.zeros((n_y, 1)) + y[None, :] * scale
    z = gap * _sample_physical(field, X, Y)
    if spec.domain_kind == RADIAL_DISK:
        # point samples under-integrate a core narrower than a frame
        # cell; radial fields admit exact window quadrature instead
        mass, second = _radial_frame_moments(field, half, gap)
    else:
        mass, second = _frame_moments(z, y_max)
    s = -math.log(gap)
    return RescaledFrame(s, float(t), est.t_hat, tuple(x0), float(y_max), z, mass, second)


def pullback_window_mass(frame: RescaledFrame, field: Field) -> float:
    """Physical mass in the frame's pullback square (identity check)."""
    half = frame.y_half * math.sqrt(frame.t_hat - frame.t)
    if field.grid.domain_kind == RADIAL_DISK:
        # Fine radial quadrature of the density weighted by the fraction
        # of each circle of radius r lying inside the centered square:
        # 1 for r <= half, 1 - 4 arccos(half/r)/pi up to the corners.
        rr = np.linspace(0.0, half * math.sqrt(2.0), 4 * field.grid.n + 1)[1:]
        u = interpolate(field, rr)
        frac = np.where(
            rr <= half,
            1.0,
            1.0 - 4.0 * np.arccos(np.clip(half / rr, 0.0, 1.0)) / math.pi,
        )
        dr = rr[1] - rr[0]
        return float(np.sum(2.0 * math.pi * rr * u * frac) * dr)
    return box_mass(field, frame.center, half)


def envelope_series(frames) -> list:
    """(s, frame_mass, second_moment) rows, flagging second moments that
    exceed 3x the series median (the boundedness check)."""
    frames = sorted(frames, key=lambda fr: fr.s)
    if not frames:
        return []
    moments = np.array([fr.second_moment for fr in frames])
    med = float(np.median(moments))
    rows = []
    for fr in frames:
        rows.append(
            {
                "s": fr.s,
                "frame_mass": fr.frame_mass,
                "second_moment": fr.second_moment,
                "flagged": bool(fr.second_moment > 3.0 * med),
            }
        )
    return rows


def envelope_with_sensitivity(
    samples,
    est: BlowupEstimate,
    x0,
    y_max: float,
    n_y: int,
    rel_perturbation: float = 1e-3,
    plateau_count: int = 5,
):
    """Envelope series for T_hat and T_hat (1 +- rel_perturbation).

    ``samples`` is a sequence of (field, t) pairs.  Because s depends on
    log(T_hat - t), frames taken closer to T_hat than the perturbation
    scale itself are not T_hat-robust and are excluded from every
    series.  The plateau level is the mean frame mass over the last
    ``plateau_count`` frames; the result is trustworthy when the level
    shifts by < 1% under the perturbation, reported as ``stable``.
    """
    out = {}
    plateaus = {}
    # frames are only meaningful where T_hat errors cannot move them:
    # both the perturbation scale and the fit's own uncertainty (residual
    # times the extrapolation lever arm) bound the usable gap from below
    lever = max(est.t_hat - est.fit_window[0], 0.0)
    min_gap = max(est.t_hat * rel_perturbation, est.fit_residual * lever)
    for tag, factor in (("nominal", 1.0), ("low", 1.0 - rel_perturbation), ("high", 1.0 + rel_perturbation)):
        e = BlowupEstimate(est.t_hat * factor, est.fit_window, est.fit_residual)
        frames = []
        for field, t in samples:
            if est.t_hat - t <= min_gap:
                continue
            try:
                frames.append(make_frame(field, e, x0, y_max, n_y, t=t))
            except ValueError:
                continue
        series = envelope_series(frames)
        out[tag] = series
        tail = series[-plateau_count:] if series else []
        plateaus[tag] = (
            float(np.mean([row["frame_mass"] for row in tail])) if tail else float("nan")
        )
    level = plateaus["nominal"]
    shift = max(
        abs(plateaus["low"] - level), abs(plateaus["high"] - level)
    ) / max(abs(level), 1e-300)
    return {
        "series": out["nominal"],
        "series_low": out["low"],
        "series_high": out["high"],
        "plateau": level,
        "plateau_shift": shift,
        "stable": bool(shift < 0.01),
    }


@dataclass(frozen=True)
class ScaledBackFrame:
    """The scaling-back view a(y') = e^s z(e^{s/2} y') at s' = -e^{-s}."""

    s_prime: float
    s_source: float
    y_half: float
    values: np.ndarray
    mass: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _resample(values: np.ndarray, y_half_in: float, y_half_out: float, n_out: int) -> np.ndarray:
    """Bilinear resampling between centered square grids (clamped edges)."""
    n_in = values.shape[0]
    dy_in = 2.0 * y_half_in / n_in
    dy_out = 2.0 * y_half_out / n_out
    y_out = -y_half_out + (np.arange(n_out) + 0.5) * dy_out
    g = np.clip((y_out + y_half_in) / dy_in - 0.5, 0.0, n_in - 1.0)
    i0 = np.clip(g.astype(int), 0, n_in - 2)
    frac = g - i0
    w0 = 1.0 - frac
    a = values[np.ix_(i0, i0)] * np.outer(w0, w0)
    a += values[np.ix_(i0 + 1, i0)] * np.outer(frac, w0)
    a += values[np.ix_(i0, i0 + 1)] * np.outer(w0, frac)
    a += values[np.ix_(i0 + 1, i0 + 1)] * np.outer(frac, frac)
    return a


def scale_back(frame: RescaledFrame, n_out: int | None = None) -> ScaledBackFrame:
    """Apply the scaling-back transformation to one frame.

    At s = 0 this is the identity view (y' = y, a = z, s' = -1).  Mass
    is preserved by the change of variables; resampling onto ``n_out``
    output cells reintroduces only interpolation error.
    """
    if n_out is None:
        n_out = frame.n
    s = frame.s
    y_half_out = math.exp(-s / 2.0) * frame.y_half
    # a at y' samples z at y = e^{s/2} y', which sweeps the same +-y_half.
    a = math.exp(s) * _resample(frame.values, frame.y_half, frame.y_half, n_out)
    dy = 2.0 * y_half_out / n_out
    mass = float(a.sum() * dy ** 2)
    return ScaledBackFrame(-math.exp(-s), s, y_half_out, a, mass)


def restore_frame(back: ScaledBackFrame, n_out: int | None = None) -> np.ndarray:
    """Invert scale_back (round-trip check): recover z on its y-grid."""
    if n_out is None:
        n_out = back.n
    s = back.s_source
    return math.exp(-s) * _resample(back.values, back.y_half, back.y_half, n_out)
