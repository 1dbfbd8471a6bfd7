import numpy as np
import pytest

from ionpair.config import data_path, parse_config, parse_fiber
from ionpair.propagate import AmplifierConfig
from ionpair.spectra import load_absorption_spectrum


@pytest.fixture(scope="session")
def nrl_absorption():
    return load_absorption_spectrum(data_path("nrl_absorption.csv"))


@pytest.fixture(scope="session")
def nrl_fiber():
    return parse_fiber(data_path("nrl_fiber.cfg"))


@pytest.fixture(scope="session")
def nrl_run():
    return parse_config(data_path("nrl_2050.cfg"))


@pytest.fixture(scope="session")
def nrl_config(nrl_run):
    return nrl_run.amplifier


@pytest.fixture(scope="session")
def exail_run():
    return parse_config(data_path("exail_family.cfg"))


@pytest.fixture
def small_config(nrl_fiber, nrl_absorption):
    """Short fiber, cheap to integrate, lossless ports."""
    return AmplifierConfig.co_pumped(nrl_fiber, nrl_absorption, 0.5, 2051e-9, 1e-3,
                                     1860e-9, 0.5, record_every=1e-3)


def pytest_collection_modifyitems(items):
    # the acceptance report prints last
    items.sort(key=lambda it: "test_acceptance" in it.nodeid)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
