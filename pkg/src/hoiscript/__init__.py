"""Script-based scoring, partial-label training, and evaluation for
human-object interaction detection on a seeded synthetic world."""

import os as _os

# single-threaded BLAS unless the caller says otherwise; keeps every numeric
# path bit-identical across runs and across --threads settings
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
