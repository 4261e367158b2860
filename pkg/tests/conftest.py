import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "nonlocalma",
    deadline=None,
    max_examples=int(os.environ.get("NONLOCALMA_HYPOTHESIS_EXAMPLES", "25")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("nonlocalma")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
