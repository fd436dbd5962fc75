from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixture_data import (EUS_OBJECTS, FIXTURE_B_OBJECTS, VSM_REGEX, XRD_REGEX,
                          eus_graph, fixture_b_graphs, ganb4se8_graph)
from qdh.hub import Hub, HubConfig
from qdh.object_store import DictionaryEntry

FIXTURES = Path(__file__).parent / "fixtures"

# per-criterion lines collected by the acceptance suite, echoed after the run
ACCEPTANCE_REPORT: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)

ADMIN = "root-admin"
PI = "dana"            # owns flux-lab
RESEARCHER = "priya"   # flux-lab member
OUTSIDER_PI = "mona"   # owns twod-lab
OUTSIDER = "sam"       # twod-lab member


def make_hub(data_dir: Path, **overrides) -> Hub:
    config = HubConfig(data_dir, admin_users=(ADMIN,), **overrides)
    return Hub(config).open()


def seed_groups(hub: Hub) -> None:
    hub.access.create_group(ADMIN, "flux-lab", PI)
    hub.access.add_member(PI, "flux-lab", RESEARCHER, "researcher")
    hub.access.create_group(ADMIN, "twod-lab", OUTSIDER_PI)
    hub.access.add_member(OUTSIDER_PI, "twod-lab", OUTSIDER, "phd_student")


def seed_fixtures(hub: Hub) -> None:
    hub.submit_graph(eus_graph(), PI, EUS_OBJECTS)
    for graph in fixture_b_graphs():
        hub.submit_graph(graph, RESEARCHER, FIXTURE_B_OBJECTS[graph.sample_id])
    hub.update_dictionary(DictionaryEntry("XRD", XRD_REGEX, "X-ray diffraction scans"), PI)
    hub.update_dictionary(DictionaryEntry("VSM", VSM_REGEX, "magnetometry loops"), PI)


@pytest.fixture
def hub(tmp_path):
    h = make_hub(tmp_path / "hub")
    seed_groups(h)
    yield h
    h.close()


@pytest.fixture
def populated_hub(tmp_path):
    h = make_hub(tmp_path / "hub")
    seed_groups(h)
    seed_fixtures(h)
    yield h
    h.close()


@pytest.fixture
def eus():
    return eus_graph()


@pytest.fixture
def fixture_b():
    return fixture_b_graphs()


@pytest.fixture
def ganb():
    return ganb4se8_graph()
