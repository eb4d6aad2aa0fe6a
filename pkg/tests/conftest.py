import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levelflow import ScalarField, Window

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "levelflow",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("levelflow")

SEED = int(os.environ.get("LEVELFLOW_SEED", "0"))

# fields whose level sets are proper arcs on their windows
CORPUS = {
    "y": ("y", (-1, 1, -1, 1)),
    "y-x^2": ("y - x^2", (-2, 2, -2, 2)),
    "y-x^3": ("y - x^3", (-1, 1, -1, 1)),
    "atan": ("atan(y - tan(x)^2)", (-1.4, 1.4, -4, 4)),
}


def make_field(expr, bounds=(-1, 1, -1, 1), n=128) -> ScalarField:
    return ScalarField.from_expression(expr, Window(*bounds, n, n))


@pytest.fixture(scope="session")
def corpus_fields():
    return {k: make_field(e, b) for k, (e, b) in CORPUS.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def g():
    return make_field("y")


# one summary line per acceptance criterion

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    n = mark.kwargs["criterion"]
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        detail = (detail + " " if detail else "") + str(call.excinfo.value).splitlines()[0][:160]
    prev = _ACCEPTANCE.get(n, (True, []))
    _ACCEPTANCE[n] = (prev[0] and rep.passed, prev[1] + [detail] if detail else prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, details = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")
