import pytest

from dacl.fixtures import FIXTURE_IDS, load_fixture, load_manifest


@pytest.fixture(scope="session")
def fixtures():
    """{fixture_id: (contract, manifest)} for all bundled fixtures."""
    return {fid: (load_fixture(fid), load_manifest(fid)) for fid in FIXTURE_IDS}


@pytest.fixture(scope="session")
def logistics(fixtures):
    return fixtures["logistics_msa"]


@pytest.fixture(scope="session")
def energy(fixtures):
    return fixtures["energy_sup"]


@pytest.fixture(scope="session")
def muni(fixtures):
    return fixtures["muni_ifb"]


@pytest.fixture(scope="session")
def health(fixtures):
    return fixtures["health_ppo"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Print one CRITERION n: PASS/FAIL line per acceptance test, on the
    real terminal (outside capture), so every run shows the verdicts."""
    outcome = yield
    report = outcome.get_result()
    number = getattr(item.function, "criterion_number", None)
    if number is None or report.when != "call":
        return
    title = getattr(item.function, "criterion_title", "")
    verdict = "PASS" if report.passed else "FAIL"
    capman = item.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print(f"CRITERION {number}: {verdict} - {title}")
