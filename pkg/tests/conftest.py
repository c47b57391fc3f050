import functools

import pytest

from hemker.pipeline import run_pipeline
from hemker.verification import default_params


@functools.lru_cache(maxsize=None)
def cached_run(eps: float, N: int, stages: str = "full"):
    return run_pipeline(default_params(eps, N), stages)


@pytest.fixture(scope="session")
def run():
    return cached_run
