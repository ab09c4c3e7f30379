import os
import sys
from collections import OrderedDict

import pytest

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA = OrderedDict(
    [
        (1, "S_GEN arithmetic over all 18 score-table entries"),
        (2, "absolute FAD values (substituted by criterion 3)"),
        (3, "Frechet property suite"),
        (4, "STFT/ISTFT round trip"),
        (5, "Griffin-Lim descent and pure-tone convergence"),
        (6, "encode -> invert fidelity"),
        (7, "preprocessing verdicts"),
        (8, "denoiser efficacy and determinism"),
        (9, "end-to-end FAD ordering"),
        (10, "HEEP suite"),
        (11, "golden-file stability"),
    ]
)

_outcomes: dict[int, list[tuple[str, str]]] = {}


def pytest_runtest_logreport(report):
    # count the call phase, plus setup errors that prevent a call
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            _outcomes.setdefault(value, []).append((report.nodeid, report.outcome))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    for mark in item.iter_markers("criterion"):
        item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        elif all(outcome == "passed" for _, outcome in results):
            status = "PASS"
        else:
            status = "FAIL"
        tr.write_line(f"criterion {n:2d}: {status:7s} {title} ({len(results or [])} checks)")
