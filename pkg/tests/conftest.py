import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    """Remember one acceptance verdict; all of them are printed at the end of the run."""
    _VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
