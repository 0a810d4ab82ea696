"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``QPRESS_PURE_PYTHON=1``
forces the numpy fallback. Both modules stay importable for comparison.
"""

import os

from . import _kernels_py as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("QPRESS_PURE_PYTHON", "") in ("", "0"):
    backend = compiled_backend
    BACKEND = "cython"
else:
    backend = python_backend
    BACKEND = "python"

LOG_DOMAIN_THRESHOLD = python_backend.LOG_DOMAIN_THRESHOLD

perron_logroot = backend.perron_logroot
log_iterate = backend.log_iterate
prefix_logsumexp = backend.prefix_logsumexp
