"""Operation-adversarial scenario generation for power-system reserve studies."""

import os as _os

__version__ = "0.1.0"

# Bound BLAS threads before numpy loads, if a limit was requested.
_threads = _os.environ.get("OASCEN_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
