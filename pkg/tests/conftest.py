import pytest

from flowguard.flowmetrics import SegmenterConfig, extract_pcap
from flowguard.synthgen import ScenarioConfig, generate


@pytest.fixture(scope="session")
def capture_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("captures")


@pytest.fixture(scope="session")
def make_capture(capture_dir):
    """Generate (and cache) a scenario capture; returns (pcap, labels)."""
    cache = {}

    def make(scenario, seed=7, duration=600.0, tls=False):
        key = (scenario, seed, duration, tls)
        if key not in cache:
            stem = f"{scenario}_{seed}_{int(duration)}_{int(tls)}"
            pcap, labels = capture_dir / f"{stem}.pcap", capture_dir / f"{stem}.labels.csv"
            generate(ScenarioConfig(scenario, seed, duration, tls=tls), pcap, labels)
            cache[key] = (pcap, labels)
        return cache[key]

    return make


@pytest.fixture(scope="session")
def an1_features(make_capture):
    pcap, _ = make_capture("AN1", seed=7)
    vecs, _ = extract_pcap(pcap, SegmenterConfig("slotted", 60.0, 120.0))
    return vecs



# -- acceptance report -------------------------------------------------------

CRITERIA = {
    1: "DBSCAN matches brute force",
    2: "detector matches brute-force nearest-cluster rule",
    3: "robust scaling invariants",
    4: "silhouette hand value",
    5: "encryption blindness",
    6: "TLS keeps metadata shape",
    7: "desk-scale detection ordering",
    8: "timespan sweep",
    9: "serial and parallel tuning agree",
    10: "generator determinism",
    11: "DBSCAN noise monotone in eps",
    12: "model persistence",
}
_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """record(n, ok, detail) prints and stores one PASS/FAIL line."""
    results = request.config.stash[_RESULTS]

    def record(n, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {CRITERIA[n]}: {detail}"
        results[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, title in CRITERIA.items():
        terminalreporter.write_line(results.get(n, f"[FAIL] {n:>2}. {title}: no result recorded"))
