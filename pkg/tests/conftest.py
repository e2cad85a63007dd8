import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ancbench.loudspeaker import LoudspeakerModel
from ancbench.room import REFERENCE_GEOMETRY, build_scene_paths
from ancbench.system import AcousticScene

settings.register_profile("ancbench", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ancbench")


@pytest.fixture(scope="session")
def reference_paths():
    """Primary and secondary paths of the reference room at t60 = 0.2 s."""
    return build_scene_paths(REFERENCE_GEOMETRY, 0.2)


@pytest.fixture(scope="session")
def reference_scene(reference_paths):
    P, S = reference_paths
    return AcousticScene(P, S, LoudspeakerModel(0.5))


@pytest.fixture(scope="session")
def linear_reference_scene(reference_paths):
    P, S = reference_paths
    return AcousticScene(P, S, LoudspeakerModel())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, title: str, passed: bool, detail: str, elapsed_s: float, limit_s: float | None):
        in_time = limit_s is None or elapsed_s < limit_s
        ok = passed and in_time
        budget = f" (limit {limit_s:g} s)" if limit_s is not None else ""
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}; {elapsed_s:.1f} s{budget}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
