import pytest

# criterion id -> (ok, detail); filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def record(cid: str, ok: bool, detail: str) -> bool:
    prev = ACCEPTANCE.get(cid)
    if prev is not None:
        # several tests can feed one criterion; it passes only if all of them do
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[cid] = (ok, detail)
    return ok


@pytest.fixture(scope="session")
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (int(c.split(".")[0]), c)):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'} - {detail}")
