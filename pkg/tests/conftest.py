import os

import pytest
from hypothesis import HealthCheck, settings

from fogplace.power_profiles import load_profiles
from fogplace.toys import chain_doc
from fogplace.topology import load_topology, west_leeds

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("FOGPLACE_HYPOTHESIS", "default"))


def tiny_doc(patients=20, app="ecg", onu_olt_bps=468750.0):
    """1 clinic, 1 BS, 1 ONU, the OLT and the cloud chain."""
    nodes = [
        {"id": "c1", "kind": "Clinic", "patients_ecg": patients if app == "ecg" else 0,
         "patients_fall": patients if app == "fall" else 0},
        {"id": "b1", "kind": "BaseStation", "profile": "bs"},
        {"id": "o1", "kind": "Onu", "profile": "onu", "fog_candidate": True},
        {"id": "olt", "kind": "Olt", "profile": "olt", "fog_candidate": True},
    ]
    links = [
        {"a": "c1", "b": "b1", "capacity_bps": 120960.0},
        {"a": "b1", "b": "o1", "capacity_bps": 120960.0},
        {"a": "o1", "b": "olt", "capacity_bps": onu_olt_bps},
    ]
    cn, cl = chain_doc()
    return {"nodes": nodes + cn, "links": links + cl}


@pytest.fixture(scope="session")
def wl():
    return west_leeds()


@pytest.fixture(scope="session")
def profiles():
    return load_profiles()


@pytest.fixture
def tiny():
    return load_topology(tiny_doc())


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
