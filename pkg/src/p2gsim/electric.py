"""Radial MV distribution network: topology, Backward-Forward Sweep power flow,
and per-transformer balances (import / reverse power flow).

Indexing convention: the slack node is excluded from the node vector, and
branch ``b`` is the branch whose downstream end is node ``b``.  With that
ordering the path matrix ``gamma[b, n]`` is 1 iff branch ``b`` lies on the path
from the slack to node ``n``, so that

    branch currents   i_B = gamma @ i_N
    node voltages     v   = v_slack - gamma.T @ (z_B * i_B)
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DanglingReference,
    NonRadialTopology,
    NotConverged,
    ParseError,
    SchemaError,
    VoltageCollapse,
)

CONSTANT_POWER = "constant_power"
CONSTANT_ADMITTANCE = "constant_admittance"
LOAD_MODELS = (CONSTANT_POWER, CONSTANT_ADMITTANCE)


@dataclass(frozen=True, eq=False)
class ElectricGrid:
    node_ids: tuple  # non-slack nodes, index order
    slack_id: object
    parent: np.ndarray  # parent node index per node, -1 for the slack
    z: np.ndarray  # complex series impedance of branch b (pu)
    branch_ids: tuple
    node_feeder: tuple
    feeder_transformer: dict
    load_model: tuple
    pf_load: np.ndarray
    pf_gen: np.ndarray
    s_base_mva: float = 10.0
    v_base_kv: float = 22.0

    def __post_init__(self):
        if np.any(self.z.real < 0):
            raise SchemaError("branch resistance must be nonnegative")
        for m in self.load_model:
            if m not in LOAD_MODELS:
                raise SchemaError(f"unknown load model {m!r}")

    @property
    def n(self):
        return len(self.node_ids)

    @cached_property
    def index(self):
        return {nid: k for k, nid in enumerate(self.node_ids)}

    @cached_property
    def gamma(self):
        return build_gamma(self)

    @cached_property
    def _gamma_pair(self):
        g = self.gamma.astype(float)
        return g, np.ascontiguousarray(g.T)

    @cached_property
    def transformers(self):
        """transformer id -> sorted list of feeder-root branch indices."""
        out = {tr: [] for tr in dict.fromkeys(self.feeder_transformer.values())}
        for b in range(self.n):
            if self.parent[b] == -1:
                out[self.feeder_transformer[self.node_feeder[b]]].append(b)
        return out

    @cached_property
    def node_transformer(self):
        return tuple(self.feeder_transformer[f] for f in self.node_feeder)

    @property
    def z_base_ohm(self):
        return self.v_base_kv**2 / self.s_base_mva

    @classmethod
    def from_dict(cls, data, source="<electric grid>"):
        return _grid_from_dict(data, source)

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        return _grid_from_dict(data, str(path))


@dataclass
class NodeInjection:
    """Per-node complex quantities in per-unit (length ``grid.n``).

    ``s_load`` is the constant-power demand, ``y_load`` the constant-admittance
    demand and ``s_gen`` the constant-power generation.
    """

    s_load: np.ndarray
    y_load: np.ndarray
    s_gen: np.ndarray

    def __post_init__(self):
        for name in ("s_load", "y_load", "s_gen"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(self.s_gen.real < 0):
            raise ValueError("generation must have nonnegative real part")

    @property
    def s_net(self):
        return self.s_load - self.s_gen

    @classmethod
    def zeros(cls, n):
        z = np.zeros(n, dtype=complex)
        return cls(z.copy(), z.copy(), z.copy())


@dataclass
class FlowSolution:
    v: np.ndarray
    i_branch: np.ndarray
    iterations: int
    converged: bool
    v_slack: complex
    slack_power: complex = 0j  # pu, leaving the slack into the network
    transformer_mw: dict = field(default_factory=dict)


def _pf_q(p, pf):
    pf = np.clip(pf, 1e-6, 1.0)
    return p * np.tan(np.arccos(pf))


def injection_from_mw(grid, load_mw, gen_mw, extra_load_mw=None):
    """Convert active-power series values (MW per node) to a NodeInjection.

    Reactive power follows the per-node power factors (loads inductive).
    ``extra_load_mw`` is added as a unity power factor constant-power load,
    used for P2G plant consumption.
    """
    sb = grid.s_base_mva
    p_load = np.asarray(load_mw, dtype=float) / sb
    p_gen = np.asarray(gen_mw, dtype=float) / sb
    s_load = p_load + 1j * _pf_q(p_load, grid.pf_load)
    s_gen = p_gen + 1j * _pf_q(p_gen, grid.pf_gen)
    adm = np.array([m == CONSTANT_ADMITTANCE for m in grid.load_model])
    # constant-admittance loads are specified by their power at 1 pu voltage
    y_load = np.where(adm, np.conj(s_load), 0)
    s_load = np.where(adm, 0, s_load)
    if extra_load_mw is not None:
        s_load = s_load + np.asarray(extra_load_mw, dtype=float) / sb
    return NodeInjection(s_load.astype(complex), y_load.astype(complex), s_gen.astype(complex))


def build_gamma(grid):
    """B x N path matrix: gamma[b, n] = 1 iff branch b is on the slack->n path."""
    n = grid.n
    parent = np.asarray(grid.parent)
    gamma = np.zeros((n, n), dtype=np.int8)
    for node in range(n):
        k, steps = node, 0
        while k != -1:
            gamma[k, node] = 1
            k = parent[k]
            steps += 1
            if steps > n:
                raise NonRadialTopology("cycle detected while tracing path to slack")
    return gamma


def incidence_matrix(grid):
    """Node-to-branch incidence (N x B) with the slack row removed.

    ``inv(incidence)`` equals ``gamma`` (KCL: incidence @ i_B = i_N).
    """
    n = grid.n
    a = np.zeros((n, n), dtype=float)
    for b in range(n):
        a[b, b] = 1.0
        if grid.parent[b] >= 0:
            a[grid.parent[b], b] = -1.0
    return a


def bfs_power_flow(grid, inj, slack_voltage=1.0 + 0j, tol=1e-8, max_iter=100,
                   v_floor=0.5, strict=True):
    """Backward-Forward Sweep with flat start.

    Iterates until the largest voltage change between two iterations is at
    most ``tol``.  Raises NotConverged when ``max_iter`` is exhausted (unless
    ``strict`` is False, in which case the last iterate is returned with
    ``converged=False``) and VoltageCollapse when any |v| drops below
    ``v_floor``.
    """
    if abs(slack_voltage) <= 0:
        raise ValueError("slack voltage must be nonzero")
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma, gamma_t = grid._gamma_pair
    z = grid.z
    y = inj.y_load
    s_conj = np.conj(inj.s_net)
    v1 = complex(slack_voltage)
    v = np.full(grid.n, v1, dtype=complex)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        i_node = y * v + s_conj / np.conj(v)
        i_br = gamma @ i_node
        v_new = v1 - gamma_t @ (z * i_br)
        dv = np.max(np.abs(v_new - v)) if grid.n else 0.0
        v = v_new
        if grid.n and np.min(np.abs(v)) < v_floor:
            raise VoltageCollapse(
                f"voltage {np.min(np.abs(v)):.3f} pu below floor {v_floor} at iteration {it}"
            )
        if dv <= tol:
            converged = True
            break
    i_node = y * v + s_conj / np.conj(v)
    i_br = gamma @ i_node
    roots = grid.parent == -1
    sol = FlowSolution(
        v=v, i_branch=i_br, iterations=it, converged=converged, v_slack=v1,
        slack_power=complex(v1 * np.conj(i_br[roots].sum())),
        transformer_mw={
            tr: float(np.real(v1 * np.conj(i_br[bs])).sum() * grid.s_base_mva)
            for tr, bs in grid.transformers.items()
        },
    )
    if not converged and strict:
        err = NotConverged(f"BFS did not converge in {max_iter} iterations")
        err.solution = sol
        raise err
    return sol


def kcl_residual(grid, inj, sol):
    """Largest |i_B[b] - sum(children) - i_N[b]| over nodes (pu)."""
    i_node = inj.y_load * sol.v + np.conj(inj.s_net) / np.conj(sol.v)
    child_sum = np.zeros(grid.n, dtype=complex)
    has_parent = grid.parent >= 0
    np.add.at(child_sum, grid.parent[has_parent], sol.i_branch[has_parent])
    return float(np.max(np.abs(sol.i_branch - child_sum - i_node))) if grid.n else 0.0


def branch_losses(grid, sol):
    """Active power losses in pu."""
    return float(np.sum(grid.z.real * np.abs(sol.i_branch) ** 2))


def load_consumption(grid, inj, sol):
    """Complex power drawn by loads minus generation (pu)."""
    return complex(np.sum(inj.s_net + np.conj(inj.y_load) * np.abs(sol.v) ** 2))


@dataclass(frozen=True)
class TransformerFlow:
    power_mw: float  # signed, positive HV -> MV
    import_mw: float
    rpf_mw: float


def transformer_balance(grid, sol):
    """Per-transformer signed power, import and reverse power flow (MW)."""
    if not sol.converged:
        raise NotConverged("transformer balance requires a converged solution")
    out = {}
    for tr, p in sol.transformer_mw.items():
        out[tr] = TransformerFlow(power_mw=p, import_mw=max(p, 0.0), rpf_mw=max(-p, 0.0))
    return out


# --------------------------------------------------------------------------
# schema

def _grid_from_dict(data, source):
    def need(obj, key, where):
        if key not in obj:
            raise SchemaError(f"{source}: missing key '{where}{key}'")
        return obj[key]

    bases = data.get("bases", {})
    s_base = float(bases.get("s_mva", 10.0))
    v_base = float(bases.get("v_kv", 22.0))
    z_base = v_base**2 / s_base
    slack = need(data, "slack", "")
    nodes = need(data, "nodes", "")
    branches = need(data, "branches", "")
    feeders = need(data, "feeders", "")
    transformers = need(data, "transformers", "")

    feeder_tr = {}
    for k, f in enumerate(feeders):
        feeder_tr[need(f, "id", f"feeders[{k}].")] = need(f, "transformer", f"feeders[{k}].")
    tr_ids = {need(t, "id", f"transformers[{k}].") for k, t in enumerate(transformers)}
    for fid, tr in feeder_tr.items():
        if tr not in tr_ids:
            raise DanglingReference(f"{source}: feeder {fid!r} references unknown transformer {tr!r}")

    node_info = {}
    for k, nd in enumerate(nodes):
        nid = need(nd, "id", f"nodes[{k}].")
        if nid in node_info:
            raise SchemaError(f"{source}: duplicate node id {nid!r}")
        node_info[nid] = nd
    if slack not in node_info:
        raise SchemaError(f"{source}: slack node {slack!r} not among nodes")

    adj = {nid: [] for nid in node_info}
    br_z, br_ids = {}, {}
    for k, br in enumerate(branches):
        a = need(br, "from", f"branches[{k}].")
        b = need(br, "to", f"branches[{k}].")
        for end in (a, b):
            if end not in node_info:
                    raise DanglingReference(f"{source}: branches[{k}] references unknown node {end!r}")
        if "r_pu" in br:
            zc = complex(float(br["r_pu"]), float(br.get("x_pu", 0.0)))
        elif "r_ohm" in br:
            zc = complex(float(br["r_ohm"]), float(br.get("x_ohm", 0.0))) / z_base
        else:
            raise SchemaError(f"{source}: branches[{k}] needs r_pu/x_pu or r_ohm/x_ohm")
        if zc.real < 0:
            raise SchemaError(f"{source}: branches[{k}] has negative resistance")
        adj[a].append((b, k))
        adj[b].append((a, k))
        br_z[k] = zc
        br_ids[k] = br.get("id", k)

    n_nodes = len(node_info) - 1
    if len(branches) != n_nodes:
        raise NonRadialTopology(
            f"{source}: radial network needs {n_nodes} branches, found {len(branches)}"
        )

    # orient branches away from the slack (breadth-first)
    order, parent_of, via = [], {slack: None}, {}
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        for w, k in adj[u]:
            if w in parent_of:
                if parent_of[u] != w or via.get(u) != k:
                    raise NonRadialTopology(f"{source}: cycle through branch {br_ids[k]!r}")
                continue
            parent_of[w] = u
            via[w] = k
            order.append(w)
            queue.append(w)
    if len(order) != n_nodes:
        missing = sorted(set(node_info) - set(parent_of), key=str)
        raise NonRadialTopology(f"{source}: nodes not connected to slack: {missing[:5]}")

    index = {nid: i for i, nid in enumerate(order)}
    parent = np.array([-1 if parent_of[nid] == slack else index[parent_of[nid]] for nid in order])
    z = np.array([br_z[via[nid]] for nid in order], dtype=complex)

    # feeder: explicit per node, else inherited from the root of its subtree
    node_feeder = []
    for i, nid in enumerate(order):
        f = node_info[nid].get("feeder")
        if f is None:
            p = parent[i]
            if p < 0:
                raise SchemaError(f"{source}: feeder-root node {nid!r} needs a 'feeder'")
            f = node_feeder[p]
        if f not in feeder_tr:
            raise DanglingReference(f"{source}: node {nid!r} references unknown feeder {f!r}")
        if parent[i] >= 0 and node_feeder[parent[i]] != f:
            raise SchemaError(f"{source}: node {nid!r} changes feeder mid-path")
        node_feeder.append(f)
    # each feeder must root at exactly one branch
    roots_per_feeder = {}
    for i in range(n_nodes):
        if parent[i] == -1:
            roots_per_feeder.setdefault(node_feeder[i], []).append(i)
    for f in feeder_tr:
        if len(roots_per_feeder.get(f, [])) != 1:
            raise SchemaError(f"{source}: feeder {f!r} must have exactly one root branch")

    load_model = tuple(node_info[nid].get("load_model", CONSTANT_POWER) for nid in order)
    pf_load = np.array([float(node_info[nid].get("pf_load", 0.95)) for nid in order])
    pf_gen = np.array([float(node_info[nid].get("pf_gen", 1.0)) for nid in order])
    if np.any((pf_load <= 0) | (pf_load > 1)) or np.any((pf_gen <= 0) | (pf_gen > 1)):
        raise SchemaError(f"{source}: power factors must lie in (0, 1]")
    for nid in order:
        m = node_info[nid].get("load_model", CONSTANT_POWER)
        if m not in LOAD_MODELS:
            raise SchemaError(f"{source}: node {nid!r} has unknown load_model {m!r}")
    if not math.isfinite(s_base) or s_base <= 0 or v_base <= 0:
        raise SchemaError(f"{source}: bases must be positive")

    return ElectricGrid(
        node_ids=tuple(order),
        slack_id=slack,
        parent=parent,
        z=z,
        branch_ids=tuple(br_ids[via[nid]] for nid in order),
        node_feeder=tuple(node_feeder),
        feeder_transformer=dict(feeder_tr),
        load_model=load_model,
        pf_load=pf_load,
        pf_gen=pf_gen,
        s_base_mva=s_base,
        v_base_kv=v_base,
    )
