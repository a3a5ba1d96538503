"""collapse_lab: a finite-volume laboratory for 2D drift-diffusion aggregation.

The package couples a conservative explicit stepper for the density with
elliptic potential solves (Dirichlet or mean-corrected Neumann), plus the
diagnostics that matter for aggregation blowup: total mass, free energy
and its dissipation, local ball masses, collapse-ball detection with
8 pi quantization verdicts, self-similar zoom frames, and a high-resolution
radial oracle in cumulative-mass form.
"""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    SQUARE,
    RADIAL_DISK,
    GridSpec,
    Field,
    ConstantProfile,
    GaussianProfile,
    TwoBumpsProfile,
    make_initial,
    total_mass,
    local_ball_mass,
    box_mass,
    write_field_csv,
    read_field_csv,
)
from .poisson import (  # noqa: F401
    Potential,
    PoissonConvergenceError,
    solve_dirichlet,
    solve_neumann,
    solve_radial_dirichlet,
    green_energy,
)
from .stepper import (  # noqa: F401
    SimState,
    StepperConfig,
    StopRule,
    stable_dt,
    advance_field,
    step,
    run_until,
    initial_state,
)
from .radial_oracle import (  # noqa: F401
    MassProfile,
    profile_from_field,
    oracle_step,
    oracle_density,
    stable_oracle_dt,
    mass_at,
    write_profile_csv,
    read_profile_csv,
)
from .diagnostics import (  # noqa: F401
    EnergyRecord,
    TrendVerdict,
    BlowupEstimate,
    CollapseBall,
    CollapseReport,
    NoBlowupTrendError,
    free_energy,
    energy_trend_check,
    estimate_blowup_time,
    detect_collapses,
    radial_average,
    shell_mass,
    mass_window_sweep,
)
from .rescale import (  # noqa: F401
    RescaledFrame,
    ScaledBackFrame,
    make_frame,
    envelope_series,
    envelope_with_sensitivity,
    scale_back,
    restore_frame,
)
from .runner import RunConfig, run, resume, analyze  # noqa: F401
