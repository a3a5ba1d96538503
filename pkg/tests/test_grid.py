import math

import numpy as np
import pytest

from collapse_lab import (
    ConstantProfile,
    Field,
    GaussianProfile,
    GridSpec,
    TwoBumpsProfile,
    box_mass,
    local_ball_mass,
    make_initial,
    read_field_csv,
    total_mass,
    write_field_csv,
)
from collapse_lab.grid import GridError, interpolate


def test_square_cells_tile_domain():
    spec = GridSpec("square", 64, 2.0)
    assert abs(spec.cell_areas().sum() - spec.domain_area) <= 1e-12 * spec.domain_area


def test_disk_shell_areas_tile_domain():
    spec = GridSpec("radial-disk", 100, 1.5)
    assert abs(spec.cell_areas().sum() - spec.domain_area) <= 1e-12 * spec.domain_area


def test_grid_validation():
    with pytest.raises(GridError):
        GridSpec("square", 4, 1.0)
    with pytest.raises(GridError):
        GridSpec("hexes", 32, 1.0)
    with pytest.raises(GridError):
        GridSpec("square", 32, -1.0)


def test_field_rejects_negative_and_shape_mismatch():
    spec = GridSpec("square", 8, 1.0)
    with pytest.raises(GridError):
        Field(spec, -np.ones((8, 8)))
    with pytest.raises(GridError):
        Field(spec, np.ones((4, 4)))
    f = Field(spec, np.ones((8, 8)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0  # snapshots are immutable


def test_total_mass_zero_and_unit():
    spec = GridSpec("square", 16, 1.0)
    assert total_mass(Field(spec, np.zeros((16, 16)))) == 0.0
    assert total_mass(Field(spec, np.ones((16, 16)))) == pytest.approx(1.0, rel=1e-14)


def test_total_mass_constant_disk_closed_form():
    c, radius = 2.5, 1.5
    spec = GridSpec("radial-disk", 128, radius)
    f = Field(spec, np.full(128, c))
    exact = c * math.pi * radius ** 2
    assert total_mass(f) == pytest.approx(exact, rel=1e-12)


def test_total_mass_linearity():
    spec = GridSpec("square", 32, 1.0)
    rng = np.random.default_rng(7)
    a = rng.random((32, 32))
    b = rng.random((32, 32))
    alpha, beta = 0.7, 2.3
    lhs = total_mass(Field(spec, alpha * a + beta * b))
    rhs = alpha * total_mass(Field(spec, a)) + beta * total_mass(Field(spec, b))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_make_initial_constant():
    spec = GridSpec("square", 16, 1.0)
    f = make_initial(spec, ConstantProfile(1.0))
    assert np.all(f.values == 1.0)


@pytest.mark.parametrize(
    "profile, expected",
    [
        (GaussianProfile((0.5, 0.5), 0.05, 8 * math.pi), 8 * math.pi),
        (GaussianProfile((0.3, 0.7), 0.1, 2.0), 2.0),
        (ConstantProfile(5.0), 5.0),
    ],
)
def test_make_initial_mass_renormalized(profile, expected):
    spec = GridSpec("square", 64, 1.0)
    f = make_initial(spec, profile)
    assert total_mass(f) == pytest.approx(expected, rel=1e-12)
    assert f.values.min() >= 0.0


def test_make_initial_two_bumps():
    spec = GridSpec("square", 128, 1.0)
    lam = 8 * math.pi
    f = make_initial(spec, TwoBumpsProfile((0.3, 0.5), (0.7, 0.5), 0.06, lam, lam))
    assert total_mass(f) == pytest.approx(2 * lam, rel=1e-12)
    # two disjoint regions of support
    left = local_ball_mass(f, (0.3, 0.5), 0.15)
    right = local_ball_mass(f, (0.7, 0.5), 0.15)
    assert left == pytest.approx(lam, rel=1e-9)
    assert right == pytest.approx(lam, rel=1e-9)


def test_make_initial_rejects_outside_center():
    spec = GridSpec("square", 16, 1.0)
    with pytest.raises(GridError, match="outside"):
        make_initial(spec, GaussianProfile((1.5, 0.5), 0.1, 1.0))
    with pytest.raises(GridError):
        make_initial(spec, TwoBumpsProfile((0.3, 0.5), (1.2, 0.5), 0.05, 1.0, 1.0))


def test_make_initial_radial_gaussian_center_must_be_origin():
    spec = GridSpec("radial-disk", 64, 1.0)
    f = make_initial(spec, GaussianProfile((0.0, 0.0), 0.2, 3.0))
    assert total_mass(f) == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(GridError):
        make_initial(spec, GaussianProfile((0.3, 0.0), 0.2, 3.0))


def test_local_ball_mass_zero_field_and_full_coverage():
    spec = GridSpec("square", 32, 1.0)
    assert local_ball_mass(Field(spec, np.zeros((32, 32))), (0.5, 0.5), 0.1) == 0.0
    f = make_initial(spec, GaussianProfile((0.5, 0.5), 0.08, 3.0))
    assert local_ball_mass(f, (0.5, 0.5), 2.0) == pytest.approx(total_mass(f), rel=1e-12)


def test_local_ball_mass_disk_area():
    spec = GridSpec("square", 64, 1.0)
    f = Field(spec, np.ones((64, 64)))
    got = local_ball_mass(f, (0.5, 0.5), 0.25)
    assert got == pytest.approx(math.pi / 16, rel=0.01)


def test_local_ball_mass_monotone_in_radius():
    spec = GridSpec("square", 48, 1.0)
    f = make_initial(spec, GaussianProfile((0.4, 0.6), 0.1, 2.0))
    radii = np.linspace(0.05, 1.5, 24)
    masses = [local_ball_mass(f, (0.5, 0.5), r) for r in radii]
    assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))
    assert masses[-1] == pytest.approx(total_mass(f), rel=1e-12)


def test_local_ball_mass_outside_domain_is_zero():
    spec = GridSpec("square", 16, 1.0)
    f = Field(spec, np.ones((16, 16)))
    assert local_ball_mass(f, (5.0, 5.0), 0.5) == 0.0


def test_local_ball_mass_radial_matches_cumulative():
    spec = GridSpec("radial-disk", 256, 1.0)
    f = make_initial(spec, GaussianProfile((0.0, 0.0), 0.2, 4.0))
    # piecewise-constant cumulative mass at a shell face is exact
    k = 64
    exact = float(np.sum(f.values[:k] * spec.cell_areas()[:k]))
    got = local_ball_mass(f, (0.0, 0.0), k * spec.h)
    assert got == pytest.approx(exact, rel=1e-3)


def test_box_mass_exact_for_aligned_box():
    spec = GridSpec("square", 32, 1.0)
    f = Field(spec, np.ones((32, 32)))
    assert box_mass(f, (0.5, 0.5), 0.25) == pytest.approx(0.25, rel=1e-12)
    assert box_mass(f, (0.0, 0.0), 0.25) == pytest.approx(0.0625, rel=1e-12)


def test_interpolate_recovers_bilinear_plane():
    spec = GridSpec("square", 32, 1.0)
    x, y = spec.cell_centers()
    f = Field(spec, 2.0 * x + 3.0 * y + 1.0)
    xs = np.array([0.3, 0.5, 0.71])
    ys = np.array([0.4, 0.25, 0.66])
    assert np.allclose(interpolate(f, xs, ys), 2 * xs + 3 * ys + 1, atol=1e-12)


def test_field_csv_round_trip(tmp_path):
    spec = GridSpec("square", 16, 1.0)
    f = make_initial(spec, GaussianProfile((0.5, 0.5), 0.1, 2.0))
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    g = read_field_csv(path)
    assert g.grid == f.grid
    assert np.array_equal(g.values, f.values)

    rspec = GridSpec("radial-disk", 32, 1.25)
    rf = make_initial(rspec, GaussianProfile((0.0, 0.0), 0.3, 1.0))
    rpath = tmp_path / "radial.csv"
    write_field_csv(rf, rpath)
    rg = read_field_csv(rpath)
    assert rg.grid == rf.grid
    assert np.array_equal(rg.values, rf.values)
