import os

# The thread cap must land before numpy initializes its BLAS pools.
cap = os.environ.get("COLLAPSE_LAB_THREADS")
if cap:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)

from .cli import main  # noqa: E402

raise SystemExit(main())
