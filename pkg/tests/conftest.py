import numpy as np
import pytest

from freqtrig.datasets import SynthSpec, generate_synthetic, quantize


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_task():
    """A reduced synthetic task (4 classes, 16x16x3, 100 per class) for quick model tests."""
    tx, ty, vx, vy = generate_synthetic(SynthSpec(per_class=100, test_per_class=50, seed=3))
    return quantize(tx), ty, quantize(vx), vy


@pytest.fixture(scope="session")
def acceptance(request):
    """Recorder for acceptance verdicts; lines are echoed again in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
