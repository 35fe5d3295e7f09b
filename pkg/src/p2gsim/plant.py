"""Power-to-Gas plant: PEM electrolyzer, hydrogen buffer, methanation reactor.

Energies are LHV based: electricity and H2 in kWh, SNG output in kg/h (with
the SNG lower heating value converting to kW).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BufferUnderflow, SchemaError

STANDBY = "standby"
RUNNING = "running"


@dataclass(frozen=True)
class PlantParams:
    id: object = 1
    el_capacity_kw: float = 1200.0
    meth_capacity_kg_h: float = 43.2
    buffer_capacity_kwh: float = 3060.0
    buffer_max_pressure_bar: float = 30.0
    meth_on_pressure_bar: float = 15.0
    ramp_up_kg_h: float = 3.8  # max output increase between consecutive steps
    ramp_down_kg_h: float = 46.0
    min_load_fraction: float = 0.5
    aux_fraction: float = 0.01  # of the nominal electric load
    # electrolyzer efficiency (H2 LHV out / electric in) vs load fraction
    el_efficiency_curve: tuple = ((0.0, 0.61), (1.0, 0.61))
    meth_efficiency: float = 0.78  # SNG LHV out / H2 LHV in
    sng_lhv_kwh_per_kg: float = 13.89
    electric_node: object = None
    gas_node: object = None
    transformer: object = None

    def __post_init__(self):
        if min(self.el_capacity_kw, self.meth_capacity_kg_h, self.buffer_capacity_kwh,
               self.buffer_max_pressure_bar) <= 0:
            raise SchemaError(f"plant {self.id}: capacities must be positive")
        if not 0 < self.min_load_fraction < 1:
            raise SchemaError(f"plant {self.id}: min load fraction must lie in (0, 1)")
        if not self.meth_on_pressure_bar < self.buffer_max_pressure_bar:
            raise SchemaError(f"plant {self.id}: on-threshold must be below max buffer pressure")
        if self.ramp_up_kg_h < 0 or self.ramp_down_kg_h < 0 or self.aux_fraction < 0:
            raise SchemaError(f"plant {self.id}: ramps and aux share must be nonnegative")
        xs = np.array([p[0] for p in self.el_efficiency_curve], dtype=float)
        etas = np.array([p[1] for p in self.el_efficiency_curve], dtype=float)
        if len(xs) < 1 or np.any(np.diff(xs) <= 0):
            raise SchemaError(f"plant {self.id}: efficiency curve needs increasing load fractions")
        if np.any(etas <= 0) or np.any(etas > 1) or not 0 < self.meth_efficiency <= 1:
            raise SchemaError(f"plant {self.id}: efficiencies must lie in (0, 1]")

    @property
    def min_load_kg_h(self):
        return self.min_load_fraction * self.meth_capacity_kg_h

    @property
    def aux_kw(self):
        return self.aux_fraction * self.el_capacity_kw

    @property
    def meth_capacity_kw(self):
        return self.meth_capacity_kg_h * self.sng_lhv_kwh_per_kg

    @property
    def flat_efficiency(self):
        etas = {p[1] for p in self.el_efficiency_curve}
        return etas.pop() if len(etas) == 1 else None

    def el_efficiency(self, load_kw):
        xs = [p[0] for p in self.el_efficiency_curve]
        etas = [p[1] for p in self.el_efficiency_curve]
        return float(np.interp(load_kw / self.el_capacity_kw, xs, etas))


@dataclass(frozen=True)
class PlantState:
    buffer_kwh: float = 0.0
    meth_output_kg_h: float = 0.0
    mode: str = STANDBY
    el_load_kw: float = 0.0
    # cumulative counters (kWh)
    el_in_kwh: float = 0.0
    h2_produced_kwh: float = 0.0
    sng_out_kwh: float = 0.0

    def soc(self, params):
        return self.buffer_kwh / params.buffer_capacity_kwh

    def buffer_pressure(self, params):
        return self.soc(params) * params.buffer_max_pressure_bar

    @classmethod
    def at_soc(cls, params, soc):
        return cls(buffer_kwh=float(soc) * params.buffer_capacity_kwh)


@dataclass(frozen=True)
class ElectrolyzerResult:
    load_kw: float
    h2_kwh: float
    headroom_limited: bool = False


@dataclass(frozen=True)
class MethanationResult:
    sng_kg_h: float
    h2_kwh: float
    mode: str


@dataclass(frozen=True)
class PlantStepResult:
    state: PlantState
    el_kw: float  # electrolyzer + auxiliaries
    aux_kw: float
    electrolyzer_kw: float
    sng_kg_h: float
    sng_kw: float
    h2_produced_kwh: float
    h2_consumed_kwh: float
    buffer_limited: bool = False


def electrolyzer_step(params, state, setpoint_kw, dt):
    """Electrolyzer load for one step; no ramp limit, clamped by buffer headroom."""
    if setpoint_kw < 0:
        raise ValueError("electrolyzer setpoint must be nonnegative")
    dt_h = dt / 3600.0
    load = min(float(setpoint_kw), params.el_capacity_kw)
    if load <= 0:
        return ElectrolyzerResult(0.0, 0.0)
    headroom = max(params.buffer_capacity_kwh - state.buffer_kwh, 0.0)
    h2 = load * params.el_efficiency(load) * dt_h
    if h2 <= headroom:
        return ElectrolyzerResult(load, h2)
    if headroom <= 0:
        return ElectrolyzerResult(0.0, 0.0, headroom_limited=True)
    eta = params.flat_efficiency
    if eta is not None:
        load = headroom / (eta * dt_h)
    else:
        # load * eta(load) is increasing on a sane curve; bisect for the headroom
        lo, hi = 0.0, load
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid * params.el_efficiency(mid) * dt_h > headroom:
                hi = mid
            else:
                lo = mid
        load = lo
    return ElectrolyzerResult(load, headroom, headroom_limited=True)


def buffer_update(params, state, h2_in, h2_out):
    """Add ``h2_in`` and remove ``h2_out`` (kWh) from the hydrogen buffer."""
    if h2_in < 0 or h2_out < 0:
        raise ValueError("hydrogen flows must be nonnegative")
    available = state.buffer_kwh + h2_in
    cap = params.buffer_capacity_kwh
    if h2_out > available * (1 + 1e-12) + 1e-9:
        raise BufferUnderflow(
            f"plant {params.id}: requested {h2_out:.6g} kWh H2 but only {available:.6g} available"
        )
    energy = available - h2_out
    if energy > cap * (1 + 1e-12) + 1e-9:
        raise BufferUnderflow(f"plant {params.id}: buffer overfilled ({energy:.6g} kWh)")
    return replace(state, buffer_kwh=min(max(energy, 0.0), cap))


def methanation_step(params, state, commanded_kg_h, dt, h2_available=None):
    """Methanation output for one step (kg/h) and the H2 it consumes (kWh).

    Startup from hot standby needs the buffer at or above the on-pressure and
    jumps straight to min load; startup and shutdown are exempt from ramps.
    """
    if commanded_kg_h < 0:
        raise ValueError("methanation command must be nonnegative")
    dt_h = dt / 3600.0
    if h2_available is None:
        h2_available = state.buffer_kwh
    h2_per_kg = params.sng_lhv_kwh_per_kg / params.meth_efficiency
    min_load = params.min_load_kg_h
    cap = params.meth_capacity_kg_h
    prev = state.meth_output_kg_h if state.mode == RUNNING else 0.0

    if commanded_kg_h < min_load:
        out = 0.0
    elif state.mode != RUNNING:
        on = state.buffer_pressure(params) >= params.meth_on_pressure_bar
        out = min_load if on else 0.0
    else:
        out = min(max(commanded_kg_h, prev - params.ramp_down_kg_h), prev + params.ramp_up_kg_h)
        out = min(max(out, min_load), cap)

    if out > 0:
        supported = h2_available / (h2_per_kg * dt_h)
        if supported < out:
            # reducing to what the buffer holds must stay a legal ramp, else stop
            floor = min_load if state.mode != RUNNING else max(min_load, prev - params.ramp_down_kg_h)
            out = supported if supported >= floor else 0.0
    mode = RUNNING if out > 0 else STANDBY
    return MethanationResult(out, out * h2_per_kg * dt_h, mode)


def plant_step(params, state, el_setpoint_kw, sng_command_kg_h, dt=900.0):
    """Electrolyzer, then methanation, then buffer bookkeeping for one step."""
    el = electrolyzer_step(params, state, el_setpoint_kw, dt)
    meth = methanation_step(params, state, sng_command_kg_h, dt,
                            h2_available=state.buffer_kwh + el.h2_kwh)
    new = buffer_update(params, state, el.h2_kwh, meth.h2_kwh)
    energized = el.load_kw > 0 or meth.mode == RUNNING
    aux = params.aux_kw if energized else 0.0
    dt_h = dt / 3600.0
    total = el.load_kw + aux
    new = replace(
        new,
        meth_output_kg_h=meth.sng_kg_h,
        mode=meth.mode,
        el_load_kw=el.load_kw,
        el_in_kwh=state.el_in_kwh + total * dt_h,
        h2_produced_kwh=state.h2_produced_kwh + el.h2_kwh,
        sng_out_kwh=state.sng_out_kwh + meth.sng_kg_h * dt_h * params.sng_lhv_kwh_per_kg,
    )
    return PlantStepResult(
        state=new,
        el_kw=total,
        aux_kw=aux,
        electrolyzer_kw=el.load_kw,
        sng_kg_h=meth.sng_kg_h,
        sng_kw=meth.sng_kg_h * params.sng_lhv_kwh_per_kg,
        h2_produced_kwh=el.h2_kwh,
        h2_consumed_kwh=meth.h2_kwh,
        buffer_limited=el.headroom_limited and el.load_kw < min(el_setpoint_kw, params.el_capacity_kw),
    )
