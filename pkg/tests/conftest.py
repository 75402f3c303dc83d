import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qdbell.config import load_preset  # noqa: E402
from qdbell.events import generate_run  # noqa: E402


def pytest_configure(config):
    config._acceptance = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion and assert it."""

    def record(number, title, checks):
        failed = [name for name, ok, _ in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = "; ".join(f"{name}: {info}" for name, _, info in checks)
        line = f"criterion {number} {status} {title} | {detail}"
        request.config._acceptance.append(line)
        print(line)
        assert not failed, f"criterion {number} failed checks: {', '.join(failed)}"

    return record


def _run(preset, **changes):
    cfg = load_preset(preset)
    manifest = cfg.manifest()
    if changes:
        import dataclasses
        manifest = dataclasses.replace(manifest, **changes)
    events, diag = generate_run(manifest)
    return cfg, manifest, events


@pytest.fixture(scope="session")
def calibrated_run():
    """Calibrated preset, 10^6 pulses per setting, all seven settings."""
    return _run("noise-calibrated")


@pytest.fixture(scope="session")
def small_calibrated_run():
    return _run("noise-calibrated", n_pulses=100_000)
