import time

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.call_failed = rep.failed


class Criterion:
    """Collects named checks for one acceptance criterion."""

    def __init__(self):
        self.number = None
        self.title = ""
        self.checks = []
        self.start = time.perf_counter()

    def __call__(self, number, title):
        self.number, self.title = number, title
        self.start = time.perf_counter()
        return self

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        print(f"  [{'ok' if ok else 'FAIL'}] {name} {detail}")

    def verify(self):
        failed = [f"{n} {d}" for n, ok, d in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion(request):
    c = Criterion()
    yield c
    if c.number is None:
        return
    passed = not getattr(request.node, "call_failed", True) and all(ok for _, ok, _ in c.checks)
    failed = [n for n, ok, _ in c.checks if not ok]
    note = f"{len(c.checks)} checks, {c.elapsed:.1f}s"
    if failed:
        note += "; failed: " + ", ".join(failed)
    elif not passed:
        note += "; raised an error"
    request.config.stash[_LINES].append((c.number, f"criterion {c.number:2d} {'PASS' if passed else 'FAIL'}  {c.title} ({note})"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
