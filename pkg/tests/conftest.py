import pytest

import drivebench


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {name}: {'PASS' if report.passed else 'FAIL'}")


@pytest.fixture
def straight_map():
    return drivebench.load_map_path(drivebench.data_path("straight200_map.json"))


@pytest.fixture
def straight_route_path():
    return drivebench.data_path("straight200_route.xml")


@pytest.fixture
def straight_world(straight_map):
    return drivebench.World(straight_map, seed=0)
