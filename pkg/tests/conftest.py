"""Shared test configuration: single-threaded torch, relaxed hypothesis
deadlines (CPU-only box), and an uncaptured summary section for the
acceptance criteria."""

import hypothesis
import torch

torch.set_num_threads(1)

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("default")

# One line per acceptance criterion, filled in by tests/test_acceptance.py and
# echoed after the run so the verdicts are visible without -s.
acceptance_report: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_report:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report:
            terminalreporter.write_line(line)
