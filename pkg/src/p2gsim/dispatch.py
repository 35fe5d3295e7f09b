"""Rule-based coordination of the P2G plants and the per-step co-simulation
pipeline that couples the electricity network, the plants and the gas network.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import electric, gas, lumped, plant
from .errors import P2GSimError, SimulationFault, UnmappedTransformer

NONE = "none"
GAS_PRESSURE = "gas-pressure"
BUFFER_FULL = "buffer-full"

PARTIAL = "partial"
BLOCK = "block"


@dataclass(frozen=True)
class ControllerConfig:
    curtail_barg: float = 5.0
    resume_barg: float = 4.9
    curtail_mode: str = PARTIAL  # or "block": curtailed units stop instead of turning down
    overshoot_tol_bar: float = 0.02
    gas_substep_s: float = 5.0
    gas_method: str = "implicit"
    bfs_tol: float = 1e-8
    bfs_max_iter: int = 100
    slack_voltage: complex = 1.0 + 0j
    record_detail: bool = True  # per-bus / per-gas-node / per-pipe traces

    def __post_init__(self):
        if self.resume_barg > self.curtail_barg:
            raise ValueError("resume pressure must not exceed the curtailment pressure")
        if self.curtail_mode not in (PARTIAL, BLOCK):
            raise ValueError(f"unknown curtail mode {self.curtail_mode!r}")


@dataclass
class ControlDecision:
    el_setpoints_kw: dict
    meth_commands_kg_h: dict
    curtailment: dict  # plant id -> reason


def electrolyzer_dispatch(rpf_mw, plant_map, capacities_kw):
    """Electrolyzer setpoints (kW) from the reverse power flow at each plant's transformer.

    Plants sharing a transformer take its RPF in plant-id order.
    """
    remaining = {tr: max(float(v), 0.0) * 1000.0 for tr, v in rpf_mw.items()}
    out = {}
    for pid in sorted(plant_map, key=_sort_key):
        tr = plant_map[pid]
        if tr not in remaining:
            raise UnmappedTransformer(f"plant {pid!r} mapped to unknown transformer {tr!r}")
        sp = min(remaining[tr], capacities_kw[pid])
        remaining[tr] -= sp
        out[pid] = sp
    return out


@dataclass(frozen=True)
class InjectionRequest:
    id: object
    feasible: float  # output the unit would reach this step if unconstrained
    min_load: float
    at_full: bool
    buffer_kwh: float


def priority_order(requests):
    """Units already at full output first, then fuller buffers, then lower id."""
    return sorted(requests, key=lambda r: (not r.at_full, -r.buffer_kwh, _sort_key(r.id)))


def allocate_injection(requests, allowed, mode=PARTIAL):
    """Share an injection budget by priority.

    Returns ``{id: allocation}``.  In partial mode the lowest-priority unit
    is turned down first (never below its min load, else blocked); in block
    mode a unit either gets its full feasible output or nothing.
    """
    out = {}
    remaining = float(allowed)
    for r in priority_order(requests):
        if mode == BLOCK:
            a = r.feasible if r.feasible <= remaining + 1e-12 else 0.0
        else:
            a = min(r.feasible, max(remaining, 0.0))
            if a < r.min_load:
                a = 0.0
        remaining -= a
        out[r.id] = a
    return out


def methanation_dispatch(params, states, allowed_kg_h=None, mode=PARTIAL):
    """Methanation commands (kg/h) and curtailment flags.

    A unit is eligible when it is already running or its buffer has reached
    the on-pressure; eligible units are commanded to full output.  When
    ``allowed_kg_h`` is given, the total is capped by priority allocation.
    """
    commands, reasons, requests = {}, {}, []
    for p, s in zip(params, states):
        running = s.mode == plant.RUNNING
        eligible = running or s.buffer_pressure(p) >= p.meth_on_pressure_bar
        if not eligible:
            commands[p.id] = 0.0
            reasons[p.id] = NONE
            continue
        if running:
            feasible = min(s.meth_output_kg_h + p.ramp_up_kg_h, p.meth_capacity_kg_h)
        else:
            feasible = p.min_load_kg_h
        commands[p.id] = p.meth_capacity_kg_h
        reasons[p.id] = NONE
        requests.append(InjectionRequest(
            p.id, feasible, p.min_load_kg_h,
            at_full=running and s.meth_output_kg_h >= p.meth_capacity_kg_h - 1e-9,
            buffer_kwh=s.buffer_kwh,
        ))
    if allowed_kg_h is not None and sum(r.feasible for r in requests) > allowed_kg_h:
        alloc = allocate_injection(requests, allowed_kg_h, mode)
        for r in requests:
            if alloc[r.id] < r.feasible:
                commands[r.id] = alloc[r.id]
                reasons[r.id] = GAS_PRESSURE
    return commands, reasons


def update_curtailment(curtailing, max_pressure_barg, cfg):
    """Hysteresis on the highest node pressure."""
    if max_pressure_barg >= cfg.curtail_barg:
        return True
    if max_pressure_barg < cfg.resume_barg:
        return False
    return curtailing


def injection_budget_kg_h(grid, withdrawal_kg_s, max_pressure_barg, curtailing, cfg, dt):
    """SNG the gas network can take this step without crossing the pressure limit.

    While curtailing, injection may only replace withdrawals.  Otherwise the
    remaining linepack headroom up to the limit is added, treating the
    network as one vessel; this keeps a single step from overshooting.
    """
    budget = withdrawal_kg_s * 3600.0
    if curtailing:
        return budget
    headroom_kg = max(cfg.curtail_barg - max_pressure_barg, 0.0) * float(grid.capacitance.sum())
    return budget + headroom_kg / dt * 3600.0


# --------------------------------------------------------------------------
# per-step coordinator

@dataclass(frozen=True, eq=False)
class System:
    """Static description of one simulated system and the active case."""

    electric: electric.ElectricGrid
    gas: gas.GasGrid
    plants: tuple
    controller: ControllerConfig = ControllerConfig()
    case: lumped.LumpedCaseSelector = lumped.LumpedCaseSelector()
    step_s: float = 900.0

    def __post_init__(self):
        trs = set(self.electric.transformers)
        for p in self.plants:
            if p.transformer not in trs:
                raise UnmappedTransformer(f"plant {p.id!r} mapped to unknown transformer {p.transformer!r}")

    @property
    def plant_enode(self):
        return np.array([self.electric.index[p.electric_node] for p in self.plants], dtype=int)

    @property
    def plant_gnode(self):
        return np.array([self.gas.index[p.gas_node] for p in self.plants], dtype=int)


@dataclass(frozen=True, eq=False)
class WorldState:
    plants: tuple
    gas: gas.GasState | None
    curtailing: bool = False
    step: int = 0


@dataclass
class StepRecord:
    decision: ControlDecision
    system: dict
    transformers: dict  # column -> array over transformers
    plants: dict  # column -> list over plants
    voltages: np.ndarray | None = None
    pressures_barg: np.ndarray | None = None
    pipe_flows: np.ndarray | None = None


def initial_world(system, plant_socs=None, gas_pressure_barg=None):
    socs = plant_socs if plant_socs is not None else [0.0] * len(system.plants)
    plants = tuple(plant.PlantState.at_soc(p, s) for p, s in zip(system.plants, socs))
    g = None
    if system.case.case != lumped.LPGN:
        p0 = system.gas.setpoint_barg if gas_pressure_barg is None else gas_pressure_barg
        g = gas.GasState.from_pressure(system.gas, p0 + gas.P_ATM)
    return WorldState(plants=plants, gas=g)


def _power_flow(system, load_mw, gen_mw, extra_mw, stage, step):
    cfg = system.controller
    inj = electric.injection_from_mw(system.electric, load_mw, gen_mw, extra_mw)
    try:
        sol = electric.bfs_power_flow(system.electric, inj, cfg.slack_voltage, cfg.bfs_tol,
                                      cfg.bfs_max_iter)
    except P2GSimError as exc:
        raise SimulationFault(f"step {step}: power flow ({stage}) failed: {exc}", step=step) from exc
    return inj, sol


def step_coordinator(system, load_mw, gen_mw, withdrawal_kg_s, world):
    """Advance the coupled system by one step.

    Pipeline: power flow without P2G -> transformer RPF -> electrolyzer
    dispatch -> methanation dispatch against the current gas pressures ->
    plant steps -> power flow with the actual P2G loads -> gas network step
    (citygate regulated inside the gas integrator).
    """
    case = system.case.case
    cfg = system.controller
    eg = system.electric
    dt = system.step_s
    step = world.step
    ids = [p.id for p in system.plants]
    trs = list(eg.transformers)
    node_tr = np.array([trs.index(t) for t in eg.node_transformer], dtype=int)
    tr_load = np.bincount(node_tr, load_mw, len(trs))
    tr_res = np.bincount(node_tr, gen_mw, len(trs))
    total_load, total_gen = float(np.sum(load_mw)), float(np.sum(gen_mw))

    # 1. network state without P2G
    _, sol0 = _power_flow(system, load_mw, gen_mw, None, "pre-dispatch", step)
    tr_pre = np.array([sol0.transformer_mw[t] for t in trs])
    tr_surplus = np.maximum(-tr_pre, 0.0)

    # 2. electrolyzer setpoints
    caps = {p.id: p.el_capacity_kw for p in system.plants}
    lumped_res = None
    if case == lumped.LPEN:
        lumped_res = lumped.lpen_step(total_gen, total_load, [caps[i] for i in ids])
        setpoints = dict(zip(ids, lumped_res.setpoints_kw))
    else:
        setpoints = electrolyzer_dispatch(dict(zip(trs, tr_surplus)),
                                          {p.id: p.transformer for p in system.plants}, caps)

    # 3. gas-side injection budget
    wit_total = float(np.sum(withdrawal_kg_s))
    curtailing = world.curtailing
    if case == lumped.LPGN:
        allowed = wit_total * 3600.0
        max_p = None
    else:
        max_p = float(np.max(world.gas.pressure)) - gas.P_ATM
        curtailing = update_curtailment(world.curtailing, max_p, cfg)
        allowed = injection_budget_kg_h(system.gas, wit_total, max_p, curtailing, cfg, dt)

    # 4. plants
    new_states, rows = [], []
    if case == lumped.LPP2G:
        commands, reasons, results = _lpp2g_plants(system, world, setpoints, allowed)
    else:
        commands, reasons = methanation_dispatch(system.plants, world.plants, allowed,
                                                 cfg.curtail_mode)
        results = []
        for p, s in zip(system.plants, world.plants):
            try:
                results.append(plant.plant_step(p, s, setpoints[p.id], commands[p.id], dt))
            except P2GSimError as exc:
                raise SimulationFault(f"step {step}: plant {p.id!r}: {exc}", step=step) from exc
    for p, r in zip(system.plants, results):
        if reasons[p.id] == NONE and r.buffer_limited:
            reasons[p.id] = BUFFER_FULL
        new_states.append(r.state)
        rows.append(r)

    if max_p is not None and GAS_PRESSURE in reasons.values():
        curtailing = True  # the limit binds: hold back until the pressure drops below resume

    # 5. power flow with the actual P2G consumption
    p2g_mw = np.zeros(eg.n)
    np.add.at(p2g_mw, system.plant_enode, [r.el_kw / 1000.0 for r in rows])
    inj1, sol1 = _power_flow(system, load_mw, gen_mw, p2g_mw, "post-dispatch", step)
    tr_post = np.array([sol1.transformer_mw[t] for t in trs])
    losses_mw = electric.branch_losses(eg, sol1) * eg.s_base_mva
    p2g_total = float(p2g_mw.sum())

    # 6. gas network
    sng_kg_s = np.array([r.sng_kg_h for r in rows]) / 3600.0
    if case == lumped.LPGN:
        lg = lumped.lpgn_step(wit_total, float(sng_kg_s.sum()))
        gas_state, imp, linepack_kg = None, lg.gas_import, 0.0
        pressures = flows = None
    else:
        injection = np.zeros(system.gas.n)
        np.add.at(injection, system.plant_gnode, sng_kg_s)
        try:
            res = gas.advance(system.gas, world.gas,
                              gas.GasExchange(injection, np.asarray(withdrawal_kg_s, float)), dt,
                              substep=cfg.gas_substep_s, method=cfg.gas_method)
        except P2GSimError as exc:
            raise SimulationFault(f"step {step}: gas network: {exc}", step=step) from exc
        gas_state, imp = res.state, res.citygate_import
        linepack_kg = float(np.sum(gas_state.mass))
        pressures, flows = gas_state.gauge(), res.pipe_flow

    decision = ControlDecision(setpoints, commands, reasons)
    sys_row = {
        "load_mw": total_load,
        "gen_mw": total_gen,
        "losses_mw": losses_mw,
        "p2g_mw": p2g_total,
        "hv_import_mw": float(np.maximum(tr_post, 0).sum()),
        "rpf_mw": float(np.maximum(-tr_post, 0).sum()),
        "surplus_mw": float(tr_surplus.sum()),
        "lumped_surplus_mw": max(total_gen - total_load, 0.0),
        "lumped_rpf_mw": max(total_gen - total_load - p2g_total, 0.0),
        "lumped_import_mw": max(total_load + p2g_total - total_gen, 0.0),
        "withdrawal_kg_s": wit_total,
        "sng_kg_s": float(sng_kg_s.sum()),
        "citygate_import_kg_s": float(imp),
        "linepack_kg": linepack_kg,
        "curtailing": bool(curtailing),
    }
    if max_p is not None:
        sys_row["max_pressure_barg"] = float(np.max(pressures))
    tr_cols = {
        "power_pre_mw": tr_pre,
        "power_mw": tr_post,
        "import_mw": np.maximum(tr_post, 0.0),
        "rpf_mw": np.maximum(-tr_post, 0.0),
        "surplus_mw": tr_surplus,
        "load_mw": tr_load,
        "res_mw": tr_res,
    }
    plant_cols = {
        "el_setpoint_kw": [float(setpoints[i]) for i in ids],
        "el_kw": [r.el_kw for r in rows],
        "electrolyzer_kw": [r.electrolyzer_kw for r in rows],
        "aux_kw": [r.aux_kw for r in rows],
        "meth_command_kg_h": [float(commands[i]) for i in ids],
        "sng_kg_h": [r.sng_kg_h for r in rows],
        "sng_kw": [r.sng_kw for r in rows],
        "h2_produced_kwh": [r.h2_produced_kwh for r in rows],
        "h2_consumed_kwh": [r.h2_consumed_kwh for r in rows],
        "soc": [s.soc(p) for p, s in zip(system.plants, new_states)],
        "buffer_bar": [s.buffer_pressure(p) for p, s in zip(system.plants, new_states)],
        "mode": [s.mode for s in new_states],
        "curtailment": [reasons[i] for i in ids],
    }
    record = StepRecord(
        decision=decision,
        system=sys_row,
        transformers=tr_cols,
        plants=plant_cols,
        voltages=sol1.v if cfg.record_detail else None,
        pressures_barg=pressures if cfg.record_detail else None,
        pipe_flows=flows if cfg.record_detail else None,
    )
    new_world = WorldState(plants=tuple(new_states), gas=gas_state, curtailing=curtailing,
                           step=step + 1)
    return decision, new_world, record


def _lpp2g_plants(system, world, setpoints, allowed_kg_h):
    """Fixed-efficiency plants; a gas-side cap turns the electric load down with it."""
    eta = system.case.eta_p2g
    if eta is None:
        raise ValueError("LPP2G case needs a calibrated eta_p2g")
    dt_h = system.step_s / 3600.0
    commands, reasons, requests, sng_kw = {}, {}, [], {}
    for p, s in zip(system.plants, world.plants):
        aux = p.aux_kw if system.case.aux_kw is None else system.case.aux_kw
        el_in = setpoints[p.id] + aux if setpoints[p.id] > 0 else 0.0
        sng_kw[p.id] = lumped.lpp2g_step(el_in, eta, aux)
        commands[p.id] = sng_kw[p.id] / p.sng_lhv_kwh_per_kg
        reasons[p.id] = NONE
        requests.append(InjectionRequest(
            p.id, commands[p.id], 0.0,
            at_full=s.el_load_kw >= p.el_capacity_kw - 1e-9,
            buffer_kwh=0.0,
        ))
    if allowed_kg_h is not None and sum(r.feasible for r in requests) > allowed_kg_h:
        alloc = allocate_injection(requests, allowed_kg_h, PARTIAL)
        for r in requests:
            if alloc[r.id] < r.feasible:
                commands[r.id] = alloc[r.id]
                reasons[r.id] = GAS_PRESSURE
    results = []
    for p, s in zip(system.plants, world.plants):
        aux = p.aux_kw if system.case.aux_kw is None else system.case.aux_kw
        out_kg_h = commands[p.id]
        out_kw = out_kg_h * p.sng_lhv_kwh_per_kg
        el_kw = lumped.lpp2g_electric_for_sng(out_kw, eta, aux)
        used_aux = aux if el_kw > 0 else 0.0
        new = replace(
            s,
            el_load_kw=el_kw - used_aux,
            meth_output_kg_h=out_kg_h,
            mode=plant.RUNNING if out_kg_h > 0 else plant.STANDBY,
            el_in_kwh=s.el_in_kwh + el_kw * dt_h,
            sng_out_kwh=s.sng_out_kwh + out_kw * dt_h,
        )
        results.append(plant.PlantStepResult(
            state=new, el_kw=el_kw, aux_kw=used_aux, electrolyzer_kw=el_kw - used_aux,
            sng_kg_h=out_kg_h, sng_kw=out_kw, h2_produced_kwh=0.0, h2_consumed_kwh=0.0,
        ))
    return commands, reasons, results


def _sort_key(x):
    return (0, x, "") if isinstance(x, (int, float)) else (1, 0, str(x))
