import dataclasses

import numpy as np
import pytest

from p2gsim import dispatch, gas, lumped
from p2gsim.dispatch import (BLOCK, GAS_PRESSURE, NONE, PARTIAL, ControllerConfig,
                             InjectionRequest, allocate_injection, electrolyzer_dispatch,
                             injection_budget_kg_h, methanation_dispatch, priority_order,
                             update_curtailment)
from p2gsim.errors import UnmappedTransformer
from p2gsim.plant import RUNNING, PlantParams, PlantState

PLANT_MAP = {1: "TR1", 2: "TR2", 3: "TR3"}
CAPS = {1: 1200.0, 2: 1200.0, 3: 1200.0}
PARAMS = [PlantParams(id=i) for i in (1, 2, 3)]
CFG = ControllerConfig()


def test_electrolyzer_dispatch_examples():
    zero = electrolyzer_dispatch({"TR1": 0, "TR2": 0, "TR3": 0}, PLANT_MAP, CAPS)
    assert zero == {1: 0.0, 2: 0.0, 3: 0.0}
    sp = electrolyzer_dispatch({"TR1": 0, "TR2": 0, "TR3": 2.0}, PLANT_MAP, CAPS)
    assert sp == {1: 0.0, 2: 0.0, 3: 1200.0}
    assert 2.0 - sp[3] / 1000 == pytest.approx(0.8)
    sp = electrolyzer_dispatch({"TR1": 0.4, "TR2": 0, "TR3": 0}, PLANT_MAP, CAPS)
    assert sp == {1: pytest.approx(400.0), 2: 0.0, 3: 0.0}


def test_shared_transformer_split_in_id_order():
    sp = electrolyzer_dispatch({"T": 1.5}, {2: "T", 1: "T"}, {1: 1200.0, 2: 1200.0})
    assert sp == {1: 1200.0, 2: pytest.approx(300.0)}


def test_unmapped_transformer():
    with pytest.raises(UnmappedTransformer):
        electrolyzer_dispatch({"TR1": 1.0}, {1: "TR9"}, {1: 1200.0})


def test_low_buffers_give_no_commands():
    states = [PlantState.at_soc(p, 0.45) for p in PARAMS]
    commands, reasons = methanation_dispatch(PARAMS, states)
    assert commands == {1: 0.0, 2: 0.0, 3: 0.0}
    assert set(reasons.values()) == {NONE}


def test_eligible_units_commanded_to_full():
    states = [PlantState.at_soc(p, s) for p, s in zip(PARAMS, (0.5, 0.7, 0.2))]
    commands, _ = methanation_dispatch(PARAMS, states)
    assert commands == {1: 43.2, 2: 43.2, 3: 0.0}


def test_full_output_unit_kept_when_limit_binds():
    states = [PlantState(buffer_kwh=2500.0, meth_output_kg_h=30.0, mode=RUNNING),
              PlantState(buffer_kwh=2800.0, meth_output_kg_h=25.0, mode=RUNNING),
              PlantState(buffer_kwh=1600.0, meth_output_kg_h=43.2, mode=RUNNING)]
    commands, reasons = methanation_dispatch(PARAMS, states, allowed_kg_h=50.0)
    assert commands[3] == 43.2 and reasons[3] == NONE
    assert commands[1] == 0.0 and commands[2] == 0.0
    assert reasons[1] == reasons[2] == GAS_PRESSURE


def test_fuller_buffer_wins():
    reqs = [InjectionRequest(1, 21.6, 21.6, False, 0.8 * 3060),
            InjectionRequest(2, 21.6, 21.6, False, 0.6 * 3060)]
    assert [r.id for r in priority_order(reqs)] == [1, 2]
    assert allocate_injection(reqs, 30.0) == {1: 21.6, 2: 0.0}
    # equal buffers: lower id first
    tie = [dataclasses.replace(r, buffer_kwh=1000.0) for r in reversed(reqs)]
    assert [r.id for r in priority_order(tie)] == [1, 2]


def test_partial_vs_block_allocation():
    reqs = [InjectionRequest(1, 43.2, 21.6, True, 1000.0),
            InjectionRequest(2, 30.0, 21.6, False, 2000.0)]
    assert allocate_injection(reqs, 70.0, PARTIAL) == {1: 43.2, 2: pytest.approx(26.8)}
    assert allocate_injection(reqs, 70.0, BLOCK) == {1: 43.2, 2: 0.0}
    assert allocate_injection(reqs, 60.0, PARTIAL) == {1: 43.2, 2: 0.0}  # 16.8 < min load


def test_hysteresis():
    assert update_curtailment(False, 5.0, CFG) is True
    assert update_curtailment(True, 4.95, CFG) is True
    assert update_curtailment(False, 4.95, CFG) is False
    assert update_curtailment(True, 4.89, CFG) is False
    with pytest.raises(ValueError):
        ControllerConfig(curtail_barg=4.8, resume_barg=4.9)


def test_injection_budget():
    from p2gsim.scenario import data_dir
    g = gas.GasGrid.from_json(data_dir() / "example" / "gas_grid.json")
    dt = 900.0
    assert injection_budget_kg_h(g, 0.1, 4.8, True, CFG, dt) == pytest.approx(360.0)
    headroom = 0.2 * g.capacitance.sum()
    assert injection_budget_kg_h(g, 0.1, 4.8, False, CFG, dt) == pytest.approx(
        360.0 + headroom / dt * 3600)
    assert injection_budget_kg_h(g, 0.1, 5.1, False, CFG, dt) == pytest.approx(360.0)


def test_zero_surplus_step_is_pass_through(summer):
    system = summer.system()
    world = dispatch.initial_world(system, [0.1, 0.1, 0.1], 4.3)
    load = summer.load_mw[0]
    decision, new, rec = dispatch.step_coordinator(system, load, np.zeros_like(load),
                                                   summer.withdrawal_kg_s[0], world)
    assert set(decision.el_setpoints_kw.values()) == {0.0}
    assert set(decision.meth_commands_kg_h.values()) == {0.0}
    assert rec.system["p2g_mw"] == 0.0 and rec.system["sng_kg_s"] == 0.0
    # gas evolves on demand alone
    ref = gas.advance(summer.gas, world.gas,
                      gas.GasExchange(np.zeros(summer.gas.n), summer.withdrawal_kg_s[0]),
                      system.step_s, substep=system.controller.gas_substep_s)
    assert np.array_equal(new.gas.mass, ref.state.mass)


def test_surplus_fills_buffer_then_starts_methanation(summer):
    system = summer.system()
    world = dispatch.initial_world(system, [0.3, 0.3, 0.3], 4.3)
    load = np.zeros(summer.electric.n)
    gen = np.zeros(summer.electric.n)
    gen[summer.electric.index[30]] = 2.0  # TR3 feeder
    wit = summer.withdrawal_kg_s[0]
    started = None
    for k in range(20):
        soc_before = world.plants[2].soc(system.plants[2])
        decision, world, rec = dispatch.step_coordinator(system, load, gen, wit, world)
        assert decision.el_setpoints_kw[3] > 0
        if started is None and rec.plants["sng_kg_h"][2] > 0:
            started = k
            assert soc_before >= 0.5
    assert started is not None
    assert rec.plants["sng_kg_h"][0] == 0.0


def test_lpgn_accepts_at_most_demand(summer):
    system = summer.system(lumped.LumpedCaseSelector(lumped.LPGN))
    world = dispatch.initial_world(system, [0.9, 0.9, 0.9])
    assert world.gas is None
    wit = summer.withdrawal_kg_s[40]
    _, _, rec = dispatch.step_coordinator(system, summer.load_mw[40], summer.gen_mw[40], wit, world)
    assert rec.system["sng_kg_s"] <= wit.sum() + 1e-12
    assert "max_pressure_barg" not in rec.system
