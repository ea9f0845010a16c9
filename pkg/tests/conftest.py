import functools

import pytest

# criterion number -> (title, passed, detail)
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def criterion(number: int, title: str):
    """Record the outcome of an acceptance test for the end-of-run summary.

    The wrapped test may return a short detail string (measured values).
    """

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except AssertionError as exc:
                ACCEPTANCE[number] = (title, False, str(exc).splitlines()[0] if str(exc) else "assertion failed")
                raise
            except Exception as exc:
                ACCEPTANCE[number] = (title, False, f"{type(exc).__name__}: {exc}")
                raise
            ACCEPTANCE[number] = (title, True, detail or "")

        return wrapper

    return deco


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  #{n:<2d} {title}: {detail}")


@pytest.fixture(scope="session")
def circuit():
    from radqec.surface_code import build_cycle_circuit

    return build_cycle_circuit()
