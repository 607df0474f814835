"""Pick the compiled kernel core when it is importable, else the numpy twin.

Set ``GRUSHINLAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernel_py

BACKEND = "python"
impl = _kernel_py

if not os.environ.get("GRUSHINLAB_PURE_PYTHON"):
    try:
        from . import _kernel_core as impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        pass

log_mehler = impl.log_mehler
grushin_sum = impl.grushin_sum
