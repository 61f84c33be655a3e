import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spdcsim.gaussian import (
    apply_loss,
    apply_symplectic,
    beam_splitter,
    make_coherent,
    make_thermal,
    make_tmsv,
    make_vacuum,
    phase_shift,
    tensor,
)

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE = []


def random_network(rng: np.random.Generator, n_modes: int, depth: int = 6):
    """TMSV pairs and a coherent or thermal mode, then random beam splitters, phases and loss."""
    parts = []
    k = 0
    while k + 1 < n_modes:
        parts.append(make_tmsv(rng.uniform(0, 0.8), rng.choice(["+", "-"]), (f"m{k}", f"m{k + 1}")))
        k += 2
    if k < n_modes:
        if rng.random() < 0.5:
            parts.append(make_coherent(rng.normal(0, 0.6), rng.normal(0, 0.6), f"m{k}"))
        else:
            parts.append(make_thermal(rng.uniform(0, 0.5), f"m{k}"))
    state = tensor(*parts) if parts else make_vacuum(n_modes)
    for _ in range(depth):
        if n_modes > 1:
            a, b = rng.choice(n_modes, 2, replace=False)
            state = apply_symplectic(state, beam_splitter(rng.uniform(0, 1), int(a), int(b)))
        state = apply_symplectic(state, phase_shift(rng.uniform(0, 2 * np.pi), int(rng.integers(n_modes))))
    return apply_loss(state, rng.uniform(0.3, 1.0, n_modes))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {name}: {detail}")
