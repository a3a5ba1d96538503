"""Shared fixtures: the expensive reference runs used by the acceptance suite."""

import math

import numpy as np
import pytest

import collapse_lab as cl
from collapse_lab import radial_oracle as ro
from collapse_lab import runner
from collapse_lab.presets import preset_text


@pytest.fixture(scope="session")
def subcritical_dirichlet_run(tmp_path_factory):
    """The shipped subcritical-dirichlet preset: 1000 steps at n = 64."""
    out = tmp_path_factory.mktemp("subcrit-dirichlet")
    run_dir = runner.run(preset_text("subcritical-dirichlet"), output_dir=out / "run")
    return run_dir


@pytest.fixture(scope="session")
def subcritical_neumann_run(tmp_path_factory):
    """The shipped subcritical-neumann preset: lambda = 0.9 * 4 pi to t = 10."""
    out = tmp_path_factory.mktemp("subcrit-neumann")
    run_dir = runner.run(preset_text("subcritical-neumann"), output_dir=out / "run")
    return run_dir


@pytest.fixture(scope="session")
def envelope_run():
    """The envelope-study preset run, driven in memory.

    A lone compactly supported supercritical bump (no ring): its zoom
    frames should carry the collapse quantum for the whole descent.
    Returns (sup_series, snapshots, sup0).
    """
    cfg = runner.RunConfig.from_text(preset_text("envelope-study"))
    profile = ro.profile_from_field(cfg.build_initial_field())
    sup0 = ro.oracle_density(profile).sup
    sup_series = [(0.0, sup0)]
    snapshots = [profile]
    last_snap = sup0
    steps = 0
    while True:
        prev = profile
        dt = ro.stable_oracle_dt(profile, safety=cfg.dt_safety)
        profile = ro.oracle_step(profile, dt)
        steps += 1
        sup = ro.oracle_density(profile).sup
        if sup >= cfg.density_cap_factor * sup0:
            if snapshots[-1] is not prev:
                snapshots.append(prev)
            break
        if steps % cfg.sample_every == 0:
            sup_series.append((profile.t, sup))
        if sup >= cfg.snapshot_sup_factor * last_snap:
            snapshots.append(profile)
            last_snap = sup
    return sup_series, snapshots, sup0


def quantization_initial_field():
    """Concentrated supercritical data for the collapse-mass experiments.

    Matches the shipped supercritical-radial preset: a compactly
    supported bump carrying 8.3 pi at the origin (local mass barely over
    the 8 pi quantum, no long tail trickling in late) plus the remaining
    1.7 pi parked in a far ring.  Total mass 10 pi on the half-unit disk
    with dr = 1/16384.
    """
    cfg = runner.RunConfig.from_text(preset_text("supercritical-radial"))
    return cfg.build_initial_field()


@pytest.fixture(scope="session")
def quantization_run():
    """High-resolution radial-oracle collapse run shared by the
    quantization and residual-vanishing criteria, with the shipped
    supercritical-radial preset parameters.

    Returns (sup_series, snapshots, sup0): sup samples every 5 steps and
    MassProfile snapshots at geometric sup growth, strictly below the
    growth cap (past ~1e4 the infall starves and the 1/sup fit loses its
    footing), plus the deepest pre-cap state.
    """
    cfg = runner.RunConfig.from_text(preset_text("supercritical-radial"))
    profile = ro.profile_from_field(cfg.build_initial_field())
    sup0 = ro.oracle_density(profile).sup
    sup_series = [(0.0, sup0)]
    snapshots = [profile]
    last_snap = sup0
    steps = 0
    while True:
        prev = profile
        dt = ro.stable_oracle_dt(profile, safety=cfg.dt_safety)
        profile = ro.oracle_step(profile, dt)
        steps += 1
        sup = ro.oracle_density(profile).sup
        if sup >= cfg.density_cap_factor * sup0:
            if snapshots[-1] is not prev:
                snapshots.append(prev)  # deepest usable state, just below the cap
            break
        if steps % cfg.sample_every == 0:
            sup_series.append((profile.t, sup))
        if sup >= cfg.snapshot_sup_factor * last_snap:
            snapshots.append(profile)
            last_snap = sup
    return sup_series, snapshots, sup0
