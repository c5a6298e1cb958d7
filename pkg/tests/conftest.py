import numpy as np
import pytest

from uniquant import experiments as ex
from uniquant.weightstore import ModelWeights


def random_model(rng, shapes=((10, 7), (7,), (3, 4, 2))):
    return ModelWeights.from_arrays(
        (f"t{k}", rng.standard_normal(s).astype(np.float32)) for k, s in enumerate(shapes)
    )


@pytest.fixture(scope="session")
def demo():
    """The trained demo network with its train / held-out split."""
    return ex.train_demo(0)


# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE, key=lambda c: (int(str(c).rstrip("abcdefghijklmnopqrstuvwxyz")), str(c))):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:<4} {'PASS' if ok else 'FAIL'}  {detail}")
