import pytest

from corrcache.experiments import preset_config, run_experiment


@pytest.fixture(scope="session")
def preset_points():
    """Run each bundled preset once per session and cache the curves."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_experiment(preset_config(name))
        return cache[name]

    return get
