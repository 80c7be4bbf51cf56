import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from catfuse.model import CategoricalSchema, Dataset

# compiled kernels make first calls slow; deadlines would flake
settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_ds(codes, y, levels, cont=None, task="regression"):
    codes = np.asarray(codes)
    if codes.ndim == 1:
        codes = codes.reshape(-1, 1)
    n = codes.shape[0]
    cont = np.zeros((n, 0)) if cont is None else np.asarray(cont, float)
    return Dataset(CategoricalSchema.from_levels(levels), codes, cont, np.asarray(y, float), task)


@pytest.fixture
def toy4():
    return make_ds([0, 0, 1, 1], [1, 1, -1, -1], [2])


ACCEPTANCE: dict[int, str] = {}


def report(num: int, name: str, ok: bool | None, detail: str) -> bool | None:
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    ACCEPTANCE[num] = f"criterion {num:2d} {status}  {name}: {detail}"
    print(ACCEPTANCE[num])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
