import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(params=["numba", "numpy"])
def backend_env(request, monkeypatch):
    """Run a test under each kernel backend."""
    name = request.param
    if name == "numba":
        pytest.importorskip("numba")
    monkeypatch.setenv("PCAPML_BACKEND", name)
    return name
