import pytest
import torch

from lensfind.synthetic import make_synthetic_archive, toy_counts

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    item_marker = getattr(report, "criterion", None)
    if item_marker is None:
        return
    n, title = item_marker
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(n, (title, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _CRITERIA[n] = (title, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {status}: {title}")


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def toy_archive(tmp_path_factory):
    """Small synthetic FITS archive with its expected pool counts."""
    counts = toy_counts()
    root = make_synthetic_archive(tmp_path_factory.mktemp("archive"), counts, side=24,
                                  sides={"N4": 30, "L4": 30})
    return root, counts


@pytest.fixture(scope="session")
def l2_archive(tmp_path_factory):
    """Archive whose L2 pool holds the full 138 candidates."""
    counts = toy_counts(test_per_pool=2, l2=138)
    root = make_synthetic_archive(tmp_path_factory.mktemp("l2archive"), counts, side=16)
    return root, counts
