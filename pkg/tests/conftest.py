import pytest

_RESULTS: dict = {}


class AcceptanceRecorder:
    def __init__(self, store):
        self.store = store

    def check(self, criterion: int, ok: bool, detail: str) -> None:
        prev = self.store.get(criterion)
        ok = bool(ok) and (prev is None or prev[0])
        text = detail if prev is None else f"{prev[1]}; {detail}"
        self.store[criterion] = (ok, text)
        assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture
def acceptance():
    return AcceptanceRecorder(_RESULTS)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        ok, detail = _RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
