import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def synth_path(tmp_path_factory):
    from _synth import write_synth
    path = tmp_path_factory.mktemp("synth") / "train.txt"
    write_synth(path, 1500, seed=3)
    return path
