import math

import numpy as np
import pytest

from collapse_lab import (
    ConstantProfile,
    Field,
    GaussianProfile,
    GridSpec,
    local_ball_mass,
    total_mass,
)
from collapse_lab.poisson import Potential, solve_radial_dirichlet
from collapse_lab.radial_oracle import advance_profile, mass_at, profile_from_field
from collapse_lab.stepper import (
    DENSITY_CAP_HIT,
    MAX_STEPS,
    REACHED_T_END,
    NegativeDensityError,
    SimState,
    StepperConfig,
    StopRule,
    advance_field,
    initial_state,
    max_face_drift,
    run_until,
    stable_dt,
    step,
)


def _zero_potential(spec):
    return Potential(spec, np.zeros(spec.shape), "dirichlet", 0.0)


def test_stable_dt_diffusion_only():
    spec = GridSpec("square", 10, 1.0)  # h = 0.1
    f = Field(spec, np.ones((10, 10)))
    state = SimState(f, _zero_potential(spec), 0.0, 0, 0.0, "dirichlet")
    assert stable_dt(state, StepperConfig(dt_safety=1.0)) == pytest.approx(0.0025)
    # doubling safety doubles dt
    assert stable_dt(state, StepperConfig(dt_safety=0.5)) == pytest.approx(0.00125)


def test_stable_dt_with_drift():
    spec = GridSpec("square", 10, 1.0)
    # potential ramp of slope 10 across faces
    v = np.tile(np.arange(10) * 1.0, (10, 1))
    state = SimState(
        Field(spec, np.ones((10, 10))),
        Potential(spec, v, "dirichlet", 0.0),
        0.0, 0, 0.0, "dirichlet",
    )
    assert max_face_drift(state.potential) == pytest.approx(10.0)
    got = stable_dt(state, StepperConfig(dt_safety=1.0))
    assert got == pytest.approx(min(0.0025, 0.1 / 20.0))


def test_heat_hook_constant_field_unchanged():
    spec = GridSpec("square", 16, 1.0)
    f = Field(spec, np.full((16, 16), 2.0))
    out = advance_field(f, _zero_potential(spec), 1e-4, StepperConfig())
    assert np.array_equal(out.values, f.values)


def test_mass_conserved_each_step():
    spec = GridSpec("square", 32, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.1, 4.0), "dirichlet")
    cfg = StepperConfig()
    m0 = total_mass(state.field)
    for _ in range(50):
        state = step(state, cfg)
        assert abs(total_mass(state.field) - m0) <= 1e-13 * m0


def test_positivity_preserved():
    spec = GridSpec("square", 32, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.05, 12.0), "dirichlet")
    cfg = StepperConfig(dt_safety=0.3, positivity_mode="reject")
    for _ in range(30):
        state = step(state, cfg)  # reject mode would raise on a violation
        assert state.field.values.min() >= 0.0


def _spike_field(spec):
    vals = np.zeros(spec.shape)
    vals[spec.n // 2, spec.n // 2] = 1.0
    return Field(spec, vals)


def test_reject_mode_raises_on_unstable_dt():
    spec = GridSpec("square", 32, 1.0)
    f = _spike_field(spec)
    bad_dt = spec.h ** 2  # 4x the diffusion limit: the spike cell goes negative
    with pytest.raises(NegativeDensityError):
        advance_field(f, _zero_potential(spec), bad_dt,
                      StepperConfig(positivity_mode="reject"))


def test_clip_and_rebalance_conserves_mass():
    spec = GridSpec("square", 32, 1.0)
    f = _spike_field(spec)
    bad_dt = spec.h ** 2
    out = advance_field(f, _zero_potential(spec), bad_dt, StepperConfig())
    assert out.values.min() >= 0.0
    assert total_mass(out) == pytest.approx(total_mass(f), rel=1e-12)


def test_neumann_model_steps():
    spec = GridSpec("square", 32, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.1, 2.0), "neumann")
    cfg = StepperConfig()
    for _ in range(10):
        state = step(state, cfg)
    assert state.potential.bc_kind == "neumann"
    assert total_mass(state.field) == pytest.approx(2.0, rel=1e-12)


def test_run_until_t_end_zero_returns_input():
    spec = GridSpec("square", 16, 1.0)
    state = initial_state(spec, ConstantProfile(1.0), "dirichlet")
    out, reason = run_until(state, StepperConfig(), StopRule(t_end=0.0))
    assert reason == REACHED_T_END
    assert out is state


def test_run_until_lands_on_t_end():
    spec = GridSpec("square", 16, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.15, 1.0), "dirichlet")
    out, reason = run_until(state, StepperConfig(), StopRule(t_end=0.003))
    assert reason == REACHED_T_END
    assert out.t == pytest.approx(0.003, abs=1e-12)


def test_run_until_max_steps_and_callback():
    spec = GridSpec("square", 16, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.15, 1.0), "dirichlet")
    seen = []
    out, reason = run_until(
        state, StepperConfig(), StopRule(max_steps=7), on_step=lambda s: seen.append(s.t)
    )
    assert reason == MAX_STEPS
    assert out.step_index == 7
    assert len(seen) == 7
    assert all(b > a for a, b in zip(seen, seen[1:]))


def test_run_until_density_cap_on_supercritical():
    spec = GridSpec("square", 64, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), 0.08, 10 * math.pi), "dirichlet")
    cap = 5.0 * state.field.sup
    out, reason = run_until(state, StepperConfig(), StopRule(t_end=1.0, density_cap=cap))
    assert reason == DENSITY_CAP_HIT
    assert out.field.sup >= cap


def test_matches_radial_oracle_before_blowup():
    # radially symmetric gaussian on the square vs the 1D oracle on the
    # inscribed disk: center-ball masses agree within 2% over 100 steps
    lam, width = 4.0, 0.08
    spec = GridSpec("square", 64, 1.0)
    state = initial_state(spec, GaussianProfile((0.5, 0.5), width, lam), "dirichlet")
    cfg = StepperConfig()
    for _ in range(100):
        state = step(state, cfg)

    rspec = GridSpec("radial-disk", 1024, 0.5)
    from collapse_lab import make_initial

    rfield = make_initial(rspec, GaussianProfile((0.0, 0.0), width, lam))
    profile = profile_from_field(rfield)
    profile, reason = advance_profile(profile, t_end=state.t, dt_max=state.t / 200)
    assert reason == REACHED_T_END

    for r in (0.05, 0.1, 0.15, 0.2, 0.3, 0.4):
        m2d = local_ball_mass(state.field, (0.5, 0.5), r)
        m1d = float(mass_at(profile, r))
        assert abs(m2d - m1d) <= 0.02 * lam


def test_radial_grid_rejected_by_stepper():
    rspec = GridSpec("radial-disk", 64, 1.0)
    f = Field(rspec, np.ones(64))
    pot = solve_radial_dirichlet(f)
    with pytest.raises(ValueError, match="radial"):
        advance_field(f, pot, 1e-5, StepperConfig())
