import os
import sys
import threading

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# filled in by test_acceptance.py, printed once at the end of the session
CRITERIA: dict[int, tuple[bool, str]] = {}


def run_with_big_stack(fn, *args, stack_mb=512):
    """Run ``fn`` in a thread with a large C stack (the tree interpreter and
    deep read-backs recurse).  Re-raises whatever ``fn`` raised."""
    out = {}

    def target():
        try:
            out["value"] = fn(*args)
        except BaseException as e:  # noqa: BLE001 - handed back to the caller
            out["error"] = e

    old = threading.stack_size(stack_mb * 1024 * 1024)
    try:
        t = threading.Thread(target=target)
        t.start()
        t.join()
    finally:
        threading.stack_size(old)
    if "error" in out:
        raise out["error"]
    return out["value"]


@pytest.fixture
def big_stack():
    return run_with_big_stack


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
