import numpy as np
import pytest
from hypothesis import settings

from divc.experiments import synthetic_corpus
from divc.nnet.training import TrainConfig, blocks_from_volumes, train

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_model():
    """Briefly trained default-architecture model; quality is irrelevant, coding must be exact."""
    blocks = blocks_from_volumes(synthetic_corpus(4, seed=11), 8)
    return train(blocks, TrainConfig(lam=1e-2, steps=60, seed=3)).model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``with acceptance(n, title) as note:`` records one pass/fail line for criterion ``n``."""
    from contextlib import contextmanager

    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    @contextmanager
    def record(n: int, title: str):
        details = []
        try:
            yield details.append
        except BaseException as exc:
            results[n] = (False, title, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            print(f"criterion {n:2d} FAIL  {title}")
            raise
        results[n] = (True, title, "; ".join(details))
        print(f"criterion {n:2d} PASS  {title}  [{'; '.join(details)}]")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
