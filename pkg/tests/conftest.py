import os

# Single-threaded BLAS keeps training runs bit-reproducible; must be set
# before numpy first loads its backend.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
