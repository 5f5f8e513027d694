"""Pick the compiled tree kernels when available, else the NumPy fallback.

Set ``LATENTFOREST_PURE_PYTHON=1`` to force the fallback.
"""

import logging
import os

from latentforest.trees import _pykernels

logger = logging.getLogger(__name__)

BACKEND = "python"
kernels = _pykernels

if os.environ.get("LATENTFOREST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from latentforest.trees import _kernels as _ckernels
    except ImportError:  # extension not built
        logger.debug("compiled tree kernels unavailable; using NumPy fallback")
    else:
        kernels = _ckernels
        BACKEND = "cython"


def build_tree(*args):
    return kernels.build_tree(*args)


def predict_ensemble(*args):
    return kernels.predict_ensemble(*args)
