import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anomkit.analysis import AnalysisParams
from anomkit.synth import BaseSignalConfig


@pytest.fixture(scope="session")
def default_params() -> AnalysisParams:
    return AnalysisParams()


@pytest.fixture(scope="session")
def default_base() -> BaseSignalConfig:
    return BaseSignalConfig()
