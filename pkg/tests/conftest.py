import os

import numpy as np
import pytest

# criterion number -> (passed or None, detail lines)
_ACCEPTANCE = {}


class AcceptanceLog:
    def __init__(self, number: int, title: str):
        self.number = number
        self.entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": None, "notes": []})

    def note(self, text: str) -> None:
        self.entry["notes"].append(text)


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is None:
        raise RuntimeError("acceptance tests need @pytest.mark.criterion(n, title)")
    return AcceptanceLog(*marker.args)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "ok": None, "notes": []})
    entry["ok"] = call.excinfo is None


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        status = {True: "PASS", False: "FAIL", None: "NOT RUN"}[e["ok"]]
        tr.write_line(f"criterion {n:2d}: {status}  {e['title']}")
        for line in e["notes"]:
            tr.write_line(f"              {line}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
