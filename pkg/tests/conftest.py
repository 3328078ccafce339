import numpy as np
import pytest

from dynetc.plant import benchmark_plant


@pytest.fixture(scope="session")
def plant():
    """Benchmark plant with the rounded kappa = 0.48 override."""
    return benchmark_plant(kappa=0.48)


@pytest.fixture(scope="session")
def plant_exact():
    return benchmark_plant()


def min_eig(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


# criterion -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: int(k.split()[1])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
