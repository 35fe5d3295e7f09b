"""Medium-pressure gas distribution network.

Pipe flows follow the Renouard relation for the mean pressure (pressures in
bar absolute, length in m, diameter in mm, flow in Sm3/h)::

    P_m**2 - P_n**2 = 25.24 * L * Q**1.82 * D**-4.82

Node pressures follow the ideal-gas state equation ``P * 1e5 * V = m * R * T``
with node masses integrated from the continuity equation.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DanglingReference,
    IntegrationUnstable,
    NegativeMass,
    ParseError,
    SchemaError,
)

P_ATM = 1.01325  # bar
RENOUARD_K = 25.24
RENOUARD_Q_EXP = 1.82
RENOUARD_D_EXP = 4.82
PA_PER_BAR = 1e5


@dataclass(frozen=True)
class GasProps:
    rho_n: float = 0.78  # kg/Sm3
    r_gas: float = 518.3  # J/kg/K
    temperature: float = 288.15  # K
    lhv_kwh_per_kg: float = 13.89

    @property
    def rt(self):
        return self.r_gas * self.temperature


def pipe_flow(p_m, p_n, length, diameter, gas=GasProps()):
    """Signed mass flow (kg/s) from m to n; vectorised over numpy arrays."""
    p_m = np.asarray(p_m, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    if not (np.all(np.isfinite(p_m)) and np.all(np.isfinite(p_n))):
        raise ValueError("pressures must be finite")
    dp2 = p_m * p_m - p_n * p_n
    q = (np.abs(dp2) * np.asarray(diameter, dtype=float) ** RENOUARD_D_EXP
         / (RENOUARD_K * np.asarray(length, dtype=float))) ** (1.0 / RENOUARD_Q_EXP)
    out = np.sign(dp2) * q * gas.rho_n / 3600.0
    return out if out.ndim else float(out)


def pipe_dp2(mdot, length, diameter, gas=GasProps()):
    """Forward Renouard form: P_m**2 - P_n**2 (bar2) for a signed mass flow."""
    mdot = np.asarray(mdot, dtype=float)
    q = np.abs(mdot) * 3600.0 / gas.rho_n
    out = np.sign(mdot) * RENOUARD_K * np.asarray(length, dtype=float) * q**RENOUARD_Q_EXP \
        * np.asarray(diameter, dtype=float) ** (-RENOUARD_D_EXP)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class GasGrid:
    node_ids: tuple
    volume: np.ndarray  # m3
    citygate: int  # node index
    pipe_ids: tuple
    pipe_from: np.ndarray
    pipe_to: np.ndarray
    length: np.ndarray  # m
    diameter: np.ndarray  # mm
    gas: GasProps = GasProps()
    p_min_barg: float = 1.5
    p_max_barg: float = 5.0
    setpoint_barg: float = 4.3
    citygate_gain: float = 2.0  # kg/s per bar
    citygate_capacity: float = 5.0  # kg/s

    def __post_init__(self):
        if np.any(self.length <= 0) or np.any(self.diameter <= 0) or np.any(self.volume <= 0):
            raise SchemaError("pipe lengths, diameters and node volumes must be positive")
        if not (self.p_max_barg > self.p_min_barg > -P_ATM):
            raise SchemaError("pressure limits must satisfy max > min > -1.01325 bar_g")

    @property
    def n(self):
        return len(self.node_ids)

    @cached_property
    def index(self):
        return {nid: k for k, nid in enumerate(self.node_ids)}

    @cached_property
    def capacitance(self):
        """kg of gas per bar of pressure, per node."""
        return self.volume * PA_PER_BAR / self.gas.rt

    @cached_property
    def conductance(self):
        """k such that mdot = k * sign(x) * |x|**(1/1.82), x = P_m**2 - P_n**2."""
        q_coef = (self.diameter**RENOUARD_D_EXP / (RENOUARD_K * self.length)) ** (1.0 / RENOUARD_Q_EXP)
        return q_coef * self.gas.rho_n / 3600.0

    @cached_property
    def resistance(self):
        """r such that P_m**2 - P_n**2 = r * f * |f|**0.82 with f in kg/s."""
        return self.conductance ** (-RENOUARD_Q_EXP)

    @cached_property
    def _incidence(self):
        """Node-by-pipe incidence: +1 at the 'from' node, -1 at the 'to' node."""
        inc = np.zeros((self.n, len(self.pipe_ids)))
        cols = np.arange(len(self.pipe_ids))
        inc[self.pipe_from, cols] = 1.0
        inc[self.pipe_to, cols] = -1.0
        return inc

    @property
    def setpoint_abs(self):
        return self.setpoint_barg + P_ATM

    @classmethod
    def from_dict(cls, data, source="<gas grid>"):
        return _gas_grid_from_dict(data, source)

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        return _gas_grid_from_dict(data, str(path))


@dataclass(frozen=True, eq=False)
class GasState:
    pressure: np.ndarray  # bar absolute
    mass: np.ndarray  # kg
    time: float = 0.0  # s

    @classmethod
    def from_pressure(cls, grid, p_abs, time=0.0):
        p = np.broadcast_to(np.asarray(p_abs, dtype=float), (grid.n,)).copy()
        return cls(pressure=p, mass=p * grid.capacitance, time=time)

    @classmethod
    def from_mass(cls, grid, mass, time=0.0):
        mass = np.asarray(mass, dtype=float)
        return cls(pressure=mass / grid.capacitance, mass=mass.copy(), time=time)

    def gauge(self):
        return self.pressure - P_ATM


@dataclass(frozen=True)
class GasExchange:
    injection: np.ndarray  # kg/s per node
    withdrawal: np.ndarray  # kg/s per node
    citygate_import: float | None = None  # None -> regulated by the citygate controller

    def __post_init__(self):
        if np.any(np.asarray(self.injection) < 0) or np.any(np.asarray(self.withdrawal) < 0):
            raise ValueError("injection and withdrawal rates must be nonnegative")
        if self.citygate_import is not None and self.citygate_import < 0:
            raise ValueError("citygate import must be nonnegative")


@dataclass
class GasStepResult:
    state: GasState
    citygate_import: float  # kg/s, average over the step
    injected: float  # kg
    withdrawn: float  # kg
    imported: float  # kg
    pipe_flow: np.ndarray = field(default_factory=lambda: np.zeros(0))  # kg/s at step end
    substeps: int = 0
    newton_iterations: int = 0


def network_flows(grid, p_abs):
    """Signed pipe flows (kg/s) for the given absolute node pressures."""
    pa, pb = p_abs[grid.pipe_from], p_abs[grid.pipe_to]
    x = pa * pa - pb * pb
    return grid.conductance * np.sign(x) * np.abs(x) ** (1.0 / RENOUARD_Q_EXP)


def _net_pipe_inflow(grid, f):
    n = grid.n
    return np.bincount(grid.pipe_to, f, n) - np.bincount(grid.pipe_from, f, n)


def citygate_regulate(grid, state):
    """One-way proportional citygate controller (kg/s, never negative)."""
    err = grid.setpoint_abs - state.pressure[grid.citygate]
    return float(min(max(grid.citygate_gain * err, 0.0), grid.citygate_capacity))


def _import_rate(grid, p_cg):
    return min(max(grid.citygate_gain * (grid.setpoint_abs - p_cg), 0.0), grid.citygate_capacity)


def linepack(grid, state):
    """Stored gas mass (kg) and its energy content (kWh, LHV)."""
    mass = float(np.sum(state.mass))
    return {"mass_kg": mass, "energy_kwh": mass * grid.gas.lhv_kwh_per_kg}


def advance(grid, state, exch, dt, substep=5.0, method="implicit", max_rel_change=0.05,
            newton_tol=1e-9, max_newton=60):
    """Integrate node masses over ``dt`` seconds.

    ``method`` is ``"implicit"`` (backward Euler, Newton per sub-step) or
    ``"explicit"`` (forward Euler).  Either way the mass update of each
    sub-step uses one set of pipe flows, so the network total changes by
    exactly the external exchange.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if method not in ("implicit", "explicit"):
        raise ValueError(f"unknown integration method {method!r}")
    nsub = max(1, int(math.ceil(dt / substep - 1e-9)))
    h = dt / nsub
    inj = np.asarray(exch.injection, dtype=float)
    wit = np.asarray(exch.withdrawal, dtype=float)
    ext = inj - wit
    cap = grid.capacitance
    cg = grid.citygate
    fixed_import = exch.citygate_import
    mass = state.mass.copy()
    p = state.pressure.copy()
    imported = 0.0
    newton_total = 0
    tol = newton_tol * max(float(mass.sum()), 1.0)
    f = None
    for _ in range(nsub):
        if method == "implicit":
            p_new, f, its = _implicit_pressures(grid, p, mass, ext, h, fixed_import, tol,
                                                max_newton, f)
            newton_total += its
        else:
            p_new = p
            f = network_flows(grid, p_new)
        imp = fixed_import if fixed_import is not None else _import_rate(grid, p_new[cg])
        net = ext + _net_pipe_inflow(grid, f)
        net[cg] += imp
        mass_new = mass + h * net
        if np.any(mass_new < 0):
            k = int(np.argmin(mass_new))
            raise NegativeMass(f"node {grid.node_ids[k]!r} mass went negative ({mass_new[k]:.3g} kg)")
        p_next = mass_new / cap
        rel = np.max(np.abs(p_next - p) / np.maximum(p, 1e-12))
        if rel > max_rel_change:
            k = int(np.argmax(np.abs(p_next - p) / np.maximum(p, 1e-12)))
            raise IntegrationUnstable(
                f"node {grid.node_ids[k]!r} pressure changed by {100 * rel:.1f}% in one sub-step "
                f"of {h:g} s"
            )
        imported += imp * h
        mass, p = mass_new, p_next
    new_state = GasState(pressure=p, mass=mass, time=state.time + dt)
    return GasStepResult(
        state=new_state,
        citygate_import=imported / dt,
        injected=float(inj.sum() * dt),
        withdrawn=float(wit.sum() * dt),
        imported=imported,
        pipe_flow=network_flows(grid, p),
        substeps=nsub,
        newton_iterations=newton_total,
    )


def step_pressures(grid, state, exch, dt, **kw):
    return advance(grid, state, exch, dt, **kw).state


def _implicit_pressures(grid, p0, m0, ext, h, fixed_import, tol, max_newton, f0=None):
    """Backward-Euler sub-step solved by Newton in (pressure, pipe flow).

    Unknowns are node pressures P and pipe flows f with residuals

        node:  cap * P - m0 - h * (ext + import(P) + A f)      [kg]
        pipe:  P_a**2 - P_b**2 - r * f * |f|**0.82            [bar2]

    The pipe relation in this forward form is smooth at zero flow, unlike
    its inverse, so Newton converges quadratically on dead-end pipes.
    """
    n, e = grid.n, len(grid.pipe_ids)
    cap = grid.capacitance
    a_idx, b_idx = grid.pipe_from, grid.pipe_to
    r = grid.resistance
    cg = grid.citygate
    qe = RENOUARD_Q_EXP
    inc = grid._incidence
    rows_e = np.arange(e)
    base = m0 + h * ext
    p = p0.copy()
    f = network_flows(grid, p0) if f0 is None else f0.copy()
    x_scale = float(np.max(p0)) ** 2
    g = np.zeros((e, n))
    for it in range(1, max_newton + 1):
        pa, pb = p[a_idx], p[b_idx]
        af = np.abs(f)
        res_n = cap * p - base - h * _net_pipe_inflow(grid, f)
        if fixed_import is None:
            imp_raw = grid.citygate_gain * (grid.setpoint_abs - p[cg])
            imp = min(max(imp_raw, 0.0), grid.citygate_capacity)
            dimp = -grid.citygate_gain if 0.0 < imp_raw < grid.citygate_capacity else 0.0
        else:
            imp, dimp = fixed_import, 0.0
        res_n[cg] -= h * imp
        res_e = pa * pa - pb * pb - r * f * af ** (qe - 1.0)
        if np.max(np.abs(res_n)) <= tol and (e == 0 or np.max(np.abs(res_e)) <= 1e-13 * x_scale):
            return p, f, it - 1
        # Jacobian blocks: [[diag(cap) , h*inc], [g, diag(d)]]; the pipe block is
        # diagonal, so the flows are eliminated and only the node system is solved.
        # |f| floored in d only: loops of zero-flow pipes are otherwise singular
        d = -qe * r * np.maximum(af, 1e-6) ** (qe - 1.0)
        g[:] = 0.0
        g[rows_e, a_idx] = 2.0 * pa
        g[rows_e, b_idx] -= 2.0 * pb
        w = (h / d)[None, :] * inc
        schur = -(w @ g)
        schur[np.diag_indices(n)] += cap
        schur[cg, cg] -= h * dimp
        dp = np.linalg.solve(schur, res_n - w @ res_e)
        df = (res_e - g @ dp) / d
        alpha = 1.0
        while np.any(p - alpha * dp <= 0.0):
            alpha *= 0.5
            if alpha < 1e-6:
                raise IntegrationUnstable("Newton step drives a node pressure non-positive")
        p = p - alpha * dp
        f = f - alpha * df
    raise IntegrationUnstable(f"implicit sub-step did not converge in {max_newton} Newton iterations")


# --------------------------------------------------------------------------
# schema

def _gas_grid_from_dict(data, source):
    def need(obj, key, where):
        if key not in obj:
            raise SchemaError(f"{source}: missing key '{where}{key}'")
        return obj[key]

    g = data.get("gas", {})
    gas = GasProps(
        rho_n=float(g.get("rho_n", 0.78)),
        r_gas=float(g.get("r_gas", 518.3)),
        temperature=float(g.get("temperature_k", 288.15)),
        lhv_kwh_per_kg=float(g.get("lhv_kwh_per_kg", 13.89)),
    )
    lim = data.get("limits", {})
    cgc = data.get("citygate", {})
    nodes = need(data, "nodes", "")
    pipes = need(data, "pipes", "")
    node_ids = []
    for k, nd in enumerate(nodes):
        nid = need(nd, "id", f"nodes[{k}].")
        if nid in node_ids:
            raise SchemaError(f"{source}: duplicate gas node id {nid!r}")
        node_ids.append(nid)
    index = {nid: k for k, nid in enumerate(node_ids)}

    flagged = [nd["id"] for nd in nodes if nd.get("citygate")]
    if "node" in cgc:
        flagged = list(dict.fromkeys(flagged + [cgc["node"]]))
    if len(flagged) != 1:
        raise SchemaError(f"{source}: exactly one citygate node required, found {len(flagged)}")
    if flagged[0] not in index:
        raise DanglingReference(f"{source}: citygate node {flagged[0]!r} not among nodes")

    pf, pt, length, diam, pids = [], [], [], [], []
    for k, pp in enumerate(pipes):
        a = need(pp, "from", f"pipes[{k}].")
        b = need(pp, "to", f"pipes[{k}].")
        for end in (a, b):
            if end not in index:
                raise DanglingReference(f"{source}: pipes[{k}] references unknown node {end!r}")
        if a == b:
            raise SchemaError(f"{source}: pipes[{k}] is a self-loop")
        pf.append(index[a])
        pt.append(index[b])
        length.append(float(need(pp, "length_m", f"pipes[{k}].")))
        diam.append(float(need(pp, "diameter_mm", f"pipes[{k}].")))
        pids.append(pp.get("id", k))
    pf, pt = np.array(pf, dtype=np.intp), np.array(pt, dtype=np.intp)
    length, diam = np.array(length), np.array(diam)
    if np.any(length <= 0) or np.any(diam <= 0):
        raise SchemaError(f"{source}: pipe length and diameter must be positive")

    # connectivity
    adj = [[] for _ in node_ids]
    for a, b in zip(pf, pt):
        adj[a].append(b)
        adj[b].append(a)
    seen = {index[flagged[0]]}
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if len(seen) != len(node_ids):
        raise SchemaError(f"{source}: gas network is not connected")

    # default node volume: half of every incident pipe's internal volume
    pipe_vol = math.pi / 4.0 * (diam / 1000.0) ** 2 * length
    volume = 0.5 * (np.bincount(pf, pipe_vol, len(node_ids)) + np.bincount(pt, pipe_vol, len(node_ids)))
    for k, nd in enumerate(nodes):
        if "volume_m3" in nd:
            volume[k] = float(nd["volume_m3"])

    return GasGrid(
        node_ids=tuple(node_ids),
        volume=volume,
        citygate=index[flagged[0]],
        pipe_ids=tuple(pids),
        pipe_from=pf,
        pipe_to=pt,
        length=length,
        diameter=diam,
        gas=gas,
        p_min_barg=float(lim.get("p_min_barg", 1.5)),
        p_max_barg=float(lim.get("p_max_barg", 5.0)),
        setpoint_barg=float(cgc.get("setpoint_barg", 4.3)),
        citygate_gain=float(cgc.get("gain_kg_s_per_bar", 2.0)),
        citygate_capacity=float(cgc.get("capacity_kg_s", 5.0)),
    )


def with_volumes(grid, volume):
    """Copy of ``grid`` with node volumes replaced."""
    return replace(grid, volume=np.asarray(volume, dtype=float))
