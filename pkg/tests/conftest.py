import numpy as np
import pytest

from ticksim.clockmodel import ClockSpec, RegisterMode
from ticksim.qcore import random_density


def random_op(rng, d, scale=0.7):
    return scale * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))


def random_spec(rng, mode=None, d=None, n_ticks=None, n_l=1, n_j=1):
    """Generic clock with random H, L and J (d <= 3, N_T <= 3 unless given)."""
    d = int(rng.integers(1, 4)) if d is None else d
    n_ticks = int(rng.integers(1, 4)) if n_ticks is None else n_ticks
    mode = rng.choice([RegisterMode.PERIODIC, RegisterMode.CUTOFF]) if mode is None else mode
    h = random_op(rng, d)
    return ClockSpec(
        d=d, n_ticks=n_ticks, mode=mode, h=h + h.conj().T,
        l_ops=tuple(random_op(rng, d) for _ in range(n_l)),
        j_ops=tuple(random_op(rng, d) for _ in range(n_j)),
        rho_c0=random_density(d, rng),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, passed: bool, detail: str) -> None:
    line = f"acceptance {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
