import os
import subprocess
import sys

import pytest

from grushinlab import _backend


def _backend_in_subprocess(env):
    proc = subprocess.run(
        [sys.executable, "-c", "from grushinlab import _backend; print(_backend.BACKEND)"],
        capture_output=True, text=True, env=env, check=True)
    return proc.stdout.strip()


def test_fallback_forced_by_environment():
    assert _backend_in_subprocess({**os.environ, "GRUSHINLAB_PURE_PYTHON": "1"}) == "python"


def test_compiled_core_selected_when_built():
    try:
        from grushinlab import _kernel_core  # noqa: F401
    except ImportError:
        pytest.skip("compiled core not built")
    env = {k: v for k, v in os.environ.items() if k != "GRUSHINLAB_PURE_PYTHON"}
    assert _backend_in_subprocess(env) == "compiled"


def test_backend_exports_kernels():
    assert _backend.BACKEND in ("compiled", "python")
    assert callable(_backend.log_mehler) and callable(_backend.grushin_sum)
