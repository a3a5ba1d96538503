import math

import numpy as np
import pytest

from collapse_lab import (
    ConstantProfile,
    Field,
    GaussianProfile,
    GridSpec,
    TwoBumpsProfile,
    local_ball_mass,
    make_initial,
    total_mass,
)
from collapse_lab.diagnostics import (
    EIGHT_PI,
    BlowupEstimate,
    NoBlowupTrendError,
    detect_collapses,
    energy_trend_check,
    estimate_blowup_time,
    free_energy,
    mass_window_sweep,
    radial_average,
    shell_mass,
)
from collapse_lab.poisson import solve_dirichlet, solve_neumann
from collapse_lab.stepper import SimState, StepperConfig, initial_state, step


def _state(field, model="dirichlet"):
    solve = solve_dirichlet if model == "dirichlet" else solve_neumann
    return SimState(field, solve(field, 1e-12), 0.0, 0, 0.0, model)


# ---------------------------------------------------------------------------
# free energy
# ---------------------------------------------------------------------------


def test_free_energy_of_euler_constant_field():
    # u = e makes the entropy term vanish exactly, so F = -green_energy < 0
    spec = GridSpec("square", 32, 1.0)
    state = _state(Field(spec, np.full((32, 32), math.e)))
    rec = free_energy(state)
    assert rec.mass == pytest.approx(math.e, rel=1e-12)
    assert rec.free_energy < 0.0
    from collapse_lab.poisson import green_energy

    assert rec.free_energy == pytest.approx(-green_energy(state.field, state.potential), rel=1e-12)
    assert not rec.variant_energy


def test_free_energy_zero_field():
    spec = GridSpec("square", 16, 1.0)
    state = _state(Field(spec, np.zeros((16, 16))))
    rec = free_energy(state)
    assert rec.free_energy == 0.0
    assert rec.dissipation == 0.0


def test_free_energy_matches_fine_quadrature():
    # same formulas on a 4x finer grid act as the quadrature oracle
    coarse = GridSpec("square", 32, 1.0)
    fine = GridSpec("square", 128, 1.0)
    prof = GaussianProfile((0.5, 0.5), 0.12, 3.0)
    rec_c = free_energy(_state(make_initial(coarse, prof)))
    rec_f = free_energy(_state(make_initial(fine, prof)))
    assert rec_c.free_energy == pytest.approx(rec_f.free_energy, rel=0.01)


def test_free_energy_neumann_flagged_variant():
    spec = GridSpec("square", 32, 1.0)
    state = _state(make_initial(spec, GaussianProfile((0.5, 0.5), 0.1, 2.0)), "neumann")
    rec = free_energy(state)
    assert rec.variant_energy


def test_dissipation_nonnegative():
    spec = GridSpec("square", 32, 1.0)
    state = _state(make_initial(spec, GaussianProfile((0.4, 0.6), 0.1, 5.0)))
    assert free_energy(state).dissipation >= 0.0


# ---------------------------------------------------------------------------
# trend check
# ---------------------------------------------------------------------------


def test_trend_check_stationary_series():
    # constant state of the Neumann model: v = 0, u uniform, D = 0 exactly
    spec = GridSpec("square", 16, 1.0)
    f = Field(spec, np.full((16, 16), 2.0))
    recs = []
    for t in (0.0, 0.1, 0.2, 0.3):
        state = SimState(f, solve_neumann(f, 1e-12), t, 0, 0.0, "neumann")
        r = free_energy(state)
        recs.append(type(r)(t, r.free_energy, r.dissipation, r.mass, r.variant))
    verdict = energy_trend_check(recs)
    assert verdict.passed
    assert verdict.max_defect <= 1e-10


def test_trend_check_flags_increase():
    from collapse_lab.diagnostics import EnergyRecord

    recs = [
        EnergyRecord(0.0, 1.0, 0.5, 1.0, "dirichlet"),
        EnergyRecord(0.1, 0.9, 0.5, 1.0, "dirichlet"),
        EnergyRecord(0.2, 0.95, 0.5, 1.0, "dirichlet"),
    ]
    verdict = energy_trend_check(recs)
    assert verdict.violations == (1,)


def test_trend_check_clean_on_subcritical_run():
    spec = GridSpec("square", 32, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.12, 4.0), "dirichlet")
    cfg = StepperConfig()
    recs = [free_energy(state)]
    for _ in range(150):
        state = step(state, cfg)
        recs.append(free_energy(state))
    verdict = energy_trend_check(recs)
    assert verdict.passed


# ---------------------------------------------------------------------------
# blowup-time estimation
# ---------------------------------------------------------------------------


def test_estimate_exact_hyperbolic_data():
    ts = np.linspace(0.9, 0.99, 12)
    est = estimate_blowup_time([(t, 1.0 / (1.0 - t)) for t in ts])
    assert est.t_hat == pytest.approx(1.0, abs=1e-6)
    assert est.fit_residual <= 1e-9
    est2 = estimate_blowup_time([(t, 2.0 / (3.0 - t)) for t in np.linspace(2.0, 2.99, 20)])
    assert est2.t_hat == pytest.approx(3.0, abs=1e-6)


def test_estimate_radius_accessor():
    est = BlowupEstimate(1.0, (0.0, 0.9), 0.0)
    assert est.radius(0.99) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        est.radius(1.5)


def test_estimate_rejects_flat_series():
    with pytest.raises(NoBlowupTrendError):
        estimate_blowup_time([(t, 1.0 + 0.01 * t) for t in np.linspace(0, 1, 10)])
    with pytest.raises(NoBlowupTrendError):
        estimate_blowup_time([(0.0, 1.0), (0.1, 2.0)])  # too few samples


# ---------------------------------------------------------------------------
# collapse detection
# ---------------------------------------------------------------------------


def _synthetic_estimate(t, radius_t):
    # T_hat such that R(t) = radius_t
    return BlowupEstimate(t + radius_t ** 2, (0.0, t), 0.0)


def test_detect_flat_field_has_no_balls():
    spec = GridSpec("square", 64, 1.0)
    f = Field(spec, np.ones((64, 64)))
    est = _synthetic_estimate(0.0, 0.05)
    rep = detect_collapses(f, 0.0, est, (0.5, 0.5), b=8.0)
    assert rep.balls == ()
    assert rep.residual_mass == pytest.approx(rep.window_mass, rel=1e-12)


def test_detect_single_bump_quantized():
    spec = GridSpec("square", 128, 1.0)
    f = make_initial(spec, TwoBumpsProfile((0.5, 0.5), (0.9, 0.9), 0.05, EIGHT_PI, 1e-9))
    est = _synthetic_estimate(0.0, 0.1)
    rep = detect_collapses(f, 0.0, est, (0.5, 0.5), b=5.0, epsilon=0.5)
    assert len(rep.balls) == 1
    ball = rep.balls[0]
    assert ball.quantized
    assert ball.mass == pytest.approx(EIGHT_PI, abs=0.5)
    assert ball.center[0] == pytest.approx(0.5, abs=0.02)


def test_detect_two_bumps_disjoint_and_quantized():
    spec = GridSpec("square", 192, 1.0)
    f = make_initial(
        spec, TwoBumpsProfile((0.3, 0.5), (0.7, 0.5), 0.1, EIGHT_PI, EIGHT_PI)
    )
    est = _synthetic_estimate(0.0, 0.1)
    rep = detect_collapses(f, 0.0, est, (0.5, 0.5), b=20.0, epsilon=0.5)
    assert len(rep.balls) == 2
    for ball in rep.balls:
        assert ball.quantized
    (c1, r1), (c2, r2) = [(b.center, b.radius) for b in rep.balls]
    assert math.hypot(c1[0] - c2[0], c1[1] - c2[1]) > r1 + r2
    assert rep.residual_mass <= 1e-3 * total_mass(f)
    assert rep.residual_mass >= 0.0
    # mass bookkeeping: balls + residual = window mass
    assert sum(b.mass for b in rep.balls) + rep.residual_mass == pytest.approx(
        rep.window_mass, rel=1e-10
    )


def test_detect_translation_invariance():
    spec = GridSpec("square", 128, 1.0)
    shift_cells = 13
    shift = shift_cells * spec.h
    f1 = make_initial(spec, TwoBumpsProfile((0.35, 0.4), (0.55, 0.4), 0.05, EIGHT_PI, EIGHT_PI))
    f2 = Field(spec, np.roll(f1.values, shift_cells, axis=0))
    est = _synthetic_estimate(0.0, 0.08)
    rep1 = detect_collapses(f1, 0.0, est, (0.45, 0.4), b=20.0)
    rep2 = detect_collapses(f2, 0.0, est, (0.45 + shift, 0.4), b=20.0)
    assert len(rep1.balls) == len(rep2.balls) == 2
    for b1, b2 in zip(rep1.balls, rep2.balls):
        assert b2.center[0] - b1.center[0] == pytest.approx(shift, abs=1e-9)
        assert b2.center[1] == pytest.approx(b1.center[1], abs=1e-9)
        assert b2.mass == pytest.approx(b1.mass, rel=1e-9)


def test_detect_merges_overlapping_seeds():
    # one wide bump: plateau maxima must coalesce into a single ball
    spec = GridSpec("square", 128, 1.0)
    f = make_initial(spec, TwoBumpsProfile((0.5, 0.5), (0.52, 0.5), 0.08, EIGHT_PI, EIGHT_PI))
    est = _synthetic_estimate(0.0, 0.1)
    rep = detect_collapses(f, 0.0, est, (0.5, 0.5), b=20.0)
    assert len(rep.balls) == 1
    assert rep.balls[0].mass == pytest.approx(2 * EIGHT_PI, rel=0.01)


# ---------------------------------------------------------------------------
# radial averages and shell mass
# ---------------------------------------------------------------------------


def test_radial_average_constant_field():
    spec = GridSpec("square", 64, 1.0)
    f = Field(spec, np.full((64, 64), 3.0))
    assert radial_average(f, (0.5, 0.5), 0.3) == pytest.approx(3.0, rel=1e-12)


def test_radial_average_odd_function_vanishes():
    spec = GridSpec("square", 64, 1.0)
    x, _ = spec.cell_centers()
    f = Field(spec, x)  # u = x, odd around the circle center after recentering
    got = radial_average(f, (0.5, 0.5), 0.25)
    assert got == pytest.approx(0.5, abs=1e-10)  # mean of x over the circle


def test_radial_average_gaussian_profile():
    spec = GridSpec("square", 128, 1.0)
    sigma, amp = 0.15, 2.0
    x, y = spec.cell_centers()
    f = Field(spec, amp * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / (2 * sigma ** 2)))
    for r in (0.05, 0.1, 0.2):
        expected = amp * math.exp(-r ** 2 / (2 * sigma ** 2))
        assert radial_average(f, (0.5, 0.5), r) == pytest.approx(expected, rel=0.01)


def test_radial_average_circle_must_stay_inside():
    spec = GridSpec("square", 32, 1.0)
    f = Field(spec, np.ones((32, 32)))
    with pytest.raises(ValueError, match="exits"):
        radial_average(f, (0.9, 0.5), 0.2)


def test_shell_mass_constant_field():
    spec = GridSpec("square", 64, 1.0)
    c = 2.0
    f = Field(spec, np.full((64, 64), c))
    for r in (0.1, 0.2, 0.4):
        assert shell_mass(f, (0.5, 0.5), r) == pytest.approx(c * r ** 2 / 2, rel=1e-6)


def test_shell_mass_monotone_and_matches_ball_mass():
    spec = GridSpec("square", 128, 1.0)
    f = make_initial(spec, GaussianProfile((0.5, 0.5), 0.12, 5.0))
    prev = 0.0
    for r in np.linspace(0.05, 0.45, 9):
        s = shell_mass(f, (0.5, 0.5), r)
        assert s >= prev - 1e-12
        prev = s
        ball = local_ball_mass(f, (0.5, 0.5), r) / (2 * math.pi)
        assert s == pytest.approx(ball, rel=0.02)


def test_shell_mass_radial_field():
    spec = GridSpec("radial-disk", 256, 1.0)
    f = make_initial(spec, GaussianProfile((0, 0), 0.2, 4.0))
    s = shell_mass(f, (0.0, 0.0), 0.5)
    ball = local_ball_mass(f, (0.0, 0.0), 0.5) / (2 * math.pi)
    assert s == pytest.approx(ball, rel=0.02)


# ---------------------------------------------------------------------------
# window sweep
# ---------------------------------------------------------------------------


def test_mass_window_sweep_zero_field():
    spec = GridSpec("square", 32, 1.0)
    f = Field(spec, np.zeros((32, 32)))
    est = _synthetic_estimate(0.0, 0.02)
    rows = mass_window_sweep(f, 0.0, est, (0.5, 0.5), [1.0, 2.0, 5.0])
    assert [row["mass"] for row in rows] == [0.0, 0.0, 0.0]


def test_mass_window_sweep_plateau_at_bump_mass():
    spec = GridSpec("square", 128, 1.0)
    f = make_initial(spec, TwoBumpsProfile((0.5, 0.5), (0.1, 0.1), 0.02, EIGHT_PI, 1e-9))
    est = _synthetic_estimate(0.0, 0.01)  # bump width 0.02 = 2 R(t)
    rows = mass_window_sweep(f, 0.0, est, (0.5, 0.5), [5.0, 10.0, 20.0])
    for row in rows:
        assert row["mass"] == pytest.approx(EIGHT_PI, rel=1e-6)
