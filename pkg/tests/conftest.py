import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = []


class _Record:
    def __init__(self, name, criterion):
        self.name = name
        self.criterion = criterion
        self.details = []

    def note(self, text):
        self.details.append(text)


@pytest.fixture
def acceptance():
    """Context manager recording one PASS/FAIL/SKIP line per criterion."""

    @contextmanager
    def record(name, criterion):
        rec = _Record(name, criterion)
        t0 = time.perf_counter()
        status = "FAIL"
        try:
            yield rec
            status = "PASS"
        except pytest.skip.Exception as exc:
            status = "SKIP"
            rec.note(str(exc.msg))
            raise
        except BaseException as exc:
            rec.note(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        finally:
            rec.note(f"{time.perf_counter() - t0:.1f}s")
            line = f"[{status}] {rec.name} ({rec.criterion}): " + "; ".join(rec.details)
            _ACCEPTANCE.append(line)
            print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
