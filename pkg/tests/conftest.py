import pytest

_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; returns the verdict so tests can assert on it."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def desk_merton():
    """The packaged Merton configuration run once, seed 0."""
    from sfnn.apps.merton import run_sfvnn
    from sfnn.cli import merton_setup, resolve_config

    cfg, tcfg, kwargs = merton_setup(resolve_config("merton", env={}))
    return cfg, tcfg, run_sfvnn(cfg, tcfg=tcfg, **kwargs)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
