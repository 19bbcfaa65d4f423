import os
import shutil

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("SC2BA_CLI") or shutil.which("sc2ba")
    if not path:
        pytest.skip("sc2ba executable not available")
    return path
