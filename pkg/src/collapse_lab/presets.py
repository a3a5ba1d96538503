"""Shipped experiment presets, one per headline property of the system."""

from __future__ import annotations

import math

_LAMBDA_SUBCRITICAL = 0.9 * 4.0 * math.pi
_LAMBDA_SUPER = 10.0 * math.pi
_LAMBDA_BUMP = 9.0 * math.pi

PRESETS = {
    # Global existence below the Neumann threshold: runs to t_end with a
    # bounded sup-norm.
    "subcritical-neumann": f"""\
model = neumann
domain = square
n = 64
side_length = 1.0
profile = gaussian
lambda = {_LAMBDA_SUBCRITICAL!r}
center_x = 0.5
center_y = 0.5
width = 0.08
dt_safety = 0.9
t_end = 10.0
sample_every = 200
output_dir = runs/subcritical-neumann
""",
    # Free-energy decrease along a smooth Dirichlet run; exactly 1000
    # steps so the series is a fixed-size determinism reference.
    "subcritical-dirichlet": """\
model = dirichlet
domain = square
n = 64
side_length = 1.0
profile = gaussian
lambda = 4.0
center_x = 0.5
center_y = 0.5
width = 0.1
dt_safety = 0.3
t_end = 1.0
max_steps = 1000
sample_every = 1
output_dir = runs/subcritical-dirichlet
""",
    # Radial-oracle collapse run: quantization and residual vanishing.
    # A compact 8.3 pi bump collapses while the remaining 1.7 pi waits in
    # a far ring, so the collapse forms from data whose local mass barely
    # exceeds the quantum; stopping around sup growth 1e4 keeps the
    # blowup-time fit ahead of the discrete-core regime.
    "supercritical-radial": f"""\
model = dirichlet
domain = radial-disk
n = 8192
disk_radius = 0.5
profile = core-ring
lambda = {_LAMBDA_SUPER!r}
core_mass = {8.3 * math.pi!r}
core_width = 0.12
ring_center = 0.4
ring_width = 0.025
dt_safety = 0.9
density_cap_factor = 1.05e4
sample_every = 5
snapshot_sup_factor = 1.08
output_dir = runs/supercritical-radial
""",
    # Two interior collapses forming from separated supercritical bumps.
    "two-bump": f"""\
model = dirichlet
domain = square
n = 128
side_length = 1.0
profile = two-bumps
lambda1 = {_LAMBDA_BUMP!r}
lambda2 = {_LAMBDA_BUMP!r}
center1_x = 0.3
center1_y = 0.5
center2_x = 0.7
center2_y = 0.5
width = 0.05
dt_safety = 0.3
density_cap_factor = 2.0e3
sample_every = 10
snapshot_sup_factor = 1.5
output_dir = runs/two-bump
""",
    # Self-similar frame study: a lone compact supercritical bump whose
    # zoom frames carry the collapse quantum with a bounded second moment.
    "envelope-study": f"""\
model = dirichlet
domain = radial-disk
n = 4096
disk_radius = 0.25
profile = bump
lambda = {8.3 * math.pi!r}
width = 0.06
dt_safety = 0.9
density_cap_factor = 1.05e4
sample_every = 5
snapshot_sup_factor = 1.08
output_dir = runs/envelope-study
""",
}


def preset_text(name: str) -> str:
    """Config text for a shipped preset."""
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise KeyError(f"unknown preset {name!r}; shipped presets: {known}") from None
