import time

import pytest

from p2gsim import lumped
from p2gsim.scenario import calibrate, load_scenario, run_case


@pytest.fixture(scope="session")
def summer():
    return load_scenario("summer_day.json")


@pytest.fixture(scope="session")
def winter():
    return load_scenario("winter_day.json")


@pytest.fixture(scope="session")
def summer_ref(summer):
    return run_case(summer, lumped.REFERENCE)


@pytest.fixture(scope="session")
def winter_ref(winter):
    return run_case(winter, lumped.REFERENCE)


@pytest.fixture(scope="session")
def four_weeks():
    """All four cases on the four representative weeks, with total wall time."""
    sc = load_scenario("four_weeks.json")
    t0 = time.perf_counter()
    ref = run_case(sc, lumped.REFERENCE)
    eta = calibrate(sc, ref)
    runs = {lumped.REFERENCE: ref,
            lumped.LPEN: run_case(sc, lumped.LPEN),
            lumped.LPGN: run_case(sc, lumped.LPGN),
            lumped.LPP2G: run_case(sc, lumped.LPP2G, eta_p2g=eta)}
    return {"scenario": sc, "runs": runs, "eta": eta, "seconds": time.perf_counter() - t0}
