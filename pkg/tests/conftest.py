import os
import sys

import pytest

# make the shared oracle helpers importable regardless of invocation dir
_HERE = os.path.dirname(os.path.abspath(__file__))
if _HERE not in sys.path:
    sys.path.insert(0, _HERE)

FIXTURES = os.path.join(_HERE, "fixtures")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
