"""Scenario loading and the time loop that drives one case over the horizon.

A scenario is a root JSON file referencing two topology files and three CSV
series (``timestamp,node_id,value``) by path relative to the root file::

    {
      "name": "...",
      "electric_grid": "electric_grid.json",
      "gas_grid": "gas_grid.json",
      "series": {"electric_load": "load.csv.gz",          # MW
                 "electric_generation": "gen.csv.gz",      # MW
                 "gas_withdrawal": "gas.csv.gz"},          # kg/s
      "time": {"step_s": 900, "segments": [{"start": "2023-01-09T00:00", "steps": 672}]},
      "plants": [{"id": 1, "electric_node": 7, "gas_node": 4, "transformer": "TR1"}],
      "controller": {"curtail_barg": 5.0, "resume_barg": 4.9, "gas_substep_s": 300},
      "case": {"name": "reference"},
      "calendar": {"non_heating_months": [4, 5, 6, 7, 8, 9]},
      "initial": {"plant_soc": 0.0, "gas_pressure_barg": 4.3}
    }

``time`` may also be a single ``{"start", "steps"}`` pair.  Segments are
independent windows (e.g. representative weeks); with
``reset_state_per_segment`` (default true) plants and gas restart from the
initial state at each segment start.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, dispatch, lumped
from .electric import ElectricGrid
from .errors import (DanglingReference, HorizonMismatch, ParseError, SchemaError,
                     SimulationFault, ValidationError)
from .gas import GasGrid
from .plant import PlantParams
from .results import TraceBuilder

DATA_ENV = "P2GSIM_DATA"
SERIES = ("electric_load", "electric_generation", "gas_withdrawal")
DEFAULT_NON_HEATING = (4, 5, 6, 7, 8, 9)
TIME_FORMAT = "%Y-%m-%dT%H:%M:%S"


def data_dir():
    """Default data directory: ``$P2GSIM_DATA`` or the repository's ``data/``."""
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data"


def resolve_scenario_path(path):
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    for alt in (data_dir() / p, data_dir() / "example" / p):
        if alt.exists():
            return alt
    return p


@dataclass(frozen=True)
class Calendar:
    non_heating_months: tuple = DEFAULT_NON_HEATING

    def season(self, month):
        return "non_heating" if month in self.non_heating_months else "heating"


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    electric: ElectricGrid
    gas: GasGrid
    plants: tuple
    controller: dispatch.ControllerConfig
    case: lumped.LumpedCaseSelector
    step_s: float
    timestamps: tuple  # ISO-8601 labels, one per step
    segment: np.ndarray  # segment index per step
    load_mw: np.ndarray  # steps x electric nodes
    gen_mw: np.ndarray
    withdrawal_kg_s: np.ndarray  # steps x gas nodes
    calendar: Calendar
    initial_soc: tuple
    initial_pressure_barg: float
    reset_state_per_segment: bool = True
    config_hash: str = ""

    @property
    def steps(self):
        return len(self.timestamps)

    def system(self, case=None):
        return dispatch.System(self.electric, self.gas, self.plants, self.controller,
                               case or self.case, self.step_s)

    def with_case(self, case, eta_p2g=None):
        sel = dataclasses.replace(self.case, case=case,
                                  eta_p2g=eta_p2g if eta_p2g is not None else self.case.eta_p2g)
        return dataclasses.replace(self, case=sel)

    def window(self, start, stop):
        """Sub-scenario over steps ``start:stop`` (same config hash plus the window)."""
        sl = slice(start, stop)
        return dataclasses.replace(
            self, timestamps=self.timestamps[sl], segment=self.segment[sl],
            load_mw=self.load_mw[sl], gen_mw=self.gen_mw[sl],
            withdrawal_kg_s=self.withdrawal_kg_s[sl],
            config_hash=_sha(f"{self.config_hash}:{start}:{stop}".encode()),
        )


# --------------------------------------------------------------------------
# loading

def load_scenario(path, overrides=None):
    """Read, validate and assemble a Scenario.

    ``overrides`` is a nested dict deep-merged over the root config before
    validation (e.g. ``{"case": {"name": "lpgn"}}``).
    """
    path = resolve_scenario_path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise SchemaError(f"{path}: root must be an object")
    if overrides:
        cfg = _merge(cfg, overrides)
    base = path.parent
    src = str(path)

    files = {}
    egrid_path = base / _need(cfg, "electric_grid", src)
    ggrid_path = base / _need(cfg, "gas_grid", src)
    files["electric_grid"] = egrid_path
    files["gas_grid"] = ggrid_path
    eg = ElectricGrid.from_json(_exists(egrid_path, src, "electric_grid"))
    gg = GasGrid.from_json(_exists(ggrid_path, src, "gas_grid"))

    step_s, timestamps, segment = _time_grid(_need(cfg, "time", src), src)
    plants = _plants(_need(cfg, "plants", src), eg, gg, src)
    controller = _dataclass_from(dispatch.ControllerConfig, cfg.get("controller", {}),
                                 f"{src}: controller")
    case_cfg = dict(cfg.get("case", {}))
    case_name = case_cfg.pop("name", lumped.REFERENCE)
    try:
        case = lumped.LumpedCaseSelector(case=case_name, **case_cfg)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{src}: case: {exc}") from None
    cal_cfg = cfg.get("calendar", {})
    months = tuple(int(m) for m in cal_cfg.get("non_heating_months", DEFAULT_NON_HEATING))
    if any(not 1 <= m <= 12 for m in months):
        raise SchemaError(f"{src}: calendar.non_heating_months must hold months 1-12")
    init = cfg.get("initial", {})
    soc = init.get("plant_soc", 0.0)
    socs = tuple(float(s) for s in (soc if isinstance(soc, list) else [soc] * len(plants)))
    if len(socs) != len(plants) or any(not 0 <= s <= 1 for s in socs):
        raise SchemaError(f"{src}: initial.plant_soc must be one value in [0, 1] per plant")
    p0 = float(init.get("gas_pressure_barg", gg.setpoint_barg))
    if not gg.p_min_barg <= p0 <= gg.p_max_barg:
        raise SchemaError(f"{src}: initial.gas_pressure_barg outside the network limits")

    series_cfg = _need(cfg, "series", src)
    arrays = {}
    index = {t: k for k, t in enumerate(timestamps)}
    for name in SERIES:
        rel = _need(series_cfg, name, f"{src}: series.")
        f = base / rel
        files[f"series.{name}"] = f
        grid_ids = eg.node_ids if name.startswith("electric") else gg.node_ids
        arrays[name] = _read_series(_exists(f, src, f"series.{name}"), name, grid_ids, index,
                                    timestamps, segment)

    h = hashlib.sha256()
    hashed = {k: v for k, v in cfg.items() if k != "case"}
    h.update(json.dumps(hashed, sort_keys=True, separators=(",", ":")).encode())
    for key in sorted(files):
        h.update(key.encode() + b"\0" + _sha(files[key].read_bytes()).encode())

    return Scenario(
        name=str(cfg.get("name", path.stem)),
        electric=eg,
        gas=gg,
        plants=plants,
        controller=controller,
        case=case,
        step_s=step_s,
        timestamps=timestamps,
        segment=segment,
        load_mw=arrays["electric_load"],
        gen_mw=arrays["electric_generation"],
        withdrawal_kg_s=arrays["gas_withdrawal"],
        calendar=Calendar(months),
        initial_soc=socs,
        initial_pressure_barg=p0,
        reset_state_per_segment=bool(cfg["time"].get("reset_state_per_segment", True)),
        config_hash=h.hexdigest(),
    )


def _sha(b):
    return hashlib.sha256(b).hexdigest()


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _need(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing key '{key}'")
    return obj[key]


def _exists(path, src, key):
    if not path.exists():
        raise ParseError(f"{src}: '{key}' points to missing file {path}")
    return path


def _time_grid(tcfg, src):
    step_s = float(tcfg.get("step_s", 900))
    if not step_s > 0:
        raise SchemaError(f"{src}: time.step_s must be positive")
    segs = tcfg.get("segments")
    if segs is None:
        segs = [{"start": _need(tcfg, "start", f"{src}: time"), "steps": _need(tcfg, "steps", f"{src}: time")}]
    stamps, seg_idx = [], []
    for k, s in enumerate(segs):
        where = f"{src}: time.segments[{k}]"
        try:
            start = pd.Timestamp(_need(s, "start", where))
        except ValueError as exc:
            raise ParseError(f"{where}.start: {exc}") from None
        n = int(_need(s, "steps", where))
        if n <= 0:
            raise SchemaError(f"{where}.steps must be positive")
        t = start + pd.to_timedelta(np.arange(n) * step_s, unit="s")
        stamps.extend(t.strftime(TIME_FORMAT))
        seg_idx.extend([k] * n)
    if len(set(stamps)) != len(stamps) or stamps != sorted(stamps):
        raise SchemaError(f"{src}: time segments overlap or are out of order")
    return step_s, tuple(stamps), np.array(seg_idx, dtype=int)


def _dataclass_from(cls, d, where):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _plants(items, eg, gg, src):
    out, seen = [], set()
    trs = set(eg.transformers)
    for k, item in enumerate(items):
        where = f"{src}: plants[{k}]"
        d = dict(item)
        if "el_efficiency_curve" in d:
            d["el_efficiency_curve"] = tuple(tuple(map(float, pt)) for pt in d["el_efficiency_curve"])
        for key in ("id", "electric_node", "gas_node", "transformer"):
            _need(d, key, where)
        if d["electric_node"] not in eg.index:
            raise DanglingReference(f"{where}: unknown electric node {d['electric_node']!r}")
        if d["gas_node"] not in gg.index:
            raise DanglingReference(f"{where}: unknown gas node {d['gas_node']!r}")
        if d["transformer"] not in trs:
            raise DanglingReference(f"{where}: unknown transformer {d['transformer']!r}")
        if eg.node_transformer[eg.index[d["electric_node"]]] != d["transformer"]:
            raise SchemaError(f"{where}: electric node {d['electric_node']!r} is not supplied by "
                              f"transformer {d['transformer']!r}")
        if d["id"] in seen:
            raise SchemaError(f"{where}: duplicate plant id {d['id']!r}")
        seen.add(d["id"])
        out.append(_dataclass_from(PlantParams, d, where))
    return tuple(out)


def _spans(timestamps, segment):
    edges = np.flatnonzero(np.diff(segment)) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [len(timestamps)])) - 1
    return [(timestamps[a], timestamps[b]) for a, b in zip(starts, stops)]


def _read_series(path, name, grid_ids, index, timestamps, segment):
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError, OSError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    if list(df.columns) != ["timestamp", "node_id", "value"]:
        raise ParseError(f"{path}:1: header must be 'timestamp,node_id,value'")
    values = pd.to_numeric(df["value"], errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.argmax(bad))
        raise ParseError(f"{path}:{k + 2}: value {df['value'].iat[k]!r} is not a finite number")
    if (values < 0).any():
        k = int(np.argmax(values < 0))
        raise SchemaError(f"{path}:{k + 2}: negative value in series {name!r}")
    ts = pd.to_datetime(df["timestamp"], errors="coerce", format="ISO8601")
    if ts.isna().any():
        k = int(np.argmax(ts.isna().to_numpy()))
        raise ParseError(f"{path}:{k + 2}: bad timestamp {df['timestamp'].iat[k]!r}")
    labels = ts.dt.strftime(TIME_FORMAT).to_numpy()

    node_pos = {str(n): i for i, n in enumerate(grid_ids)}
    nodes = df["node_id"].to_numpy()
    col = np.array([node_pos.get(n, -1) for n in nodes])
    if (col < 0).any():
        k = int(np.argmax(col < 0))
        raise DanglingReference(f"{path}:{k + 2}: series {name!r} references unknown node {nodes[k]!r}")
    row = np.array([index.get(t, -1) for t in labels])
    # only rows inside a segment's span must sit on the grid; gaps between segments are skipped
    inside = np.zeros(len(labels), dtype=bool)
    for lo, hi in _spans(timestamps, segment):
        inside |= (labels >= lo) & (labels <= hi)
    off = (row < 0) & inside
    if off.any():
        k = int(np.argmax(off))
        raise HorizonMismatch(f"{path}:{k + 2}: series {name!r} timestamp {labels[k]} is off the time grid")
    keep = row >= 0
    row, col, values = row[keep], col[keep], values[keep]
    out = np.zeros((len(timestamps), len(grid_ids)))
    seen = np.zeros(out.shape, dtype=int)
    np.add.at(seen, (row, col), 1)
    if (seen > 1).any():
        r, c = np.argwhere(seen > 1)[0]
        raise SchemaError(f"{path}: series {name!r} repeats node {grid_ids[c]!r} at {timestamps[r]}")
    out[row, col] = values
    present = seen.any(axis=0)
    gaps = (seen == 0) & present[None, :]
    if gaps.any():
        r, c = np.argwhere(gaps)[0]
        raise HorizonMismatch(f"{path}: series {name!r} for node {grid_ids[c]!r} does not cover the "
                              f"horizon (missing {timestamps[r]})")
    if not present.any():
        raise HorizonMismatch(f"{path}: series {name!r} has no rows inside the horizon")
    return out


# --------------------------------------------------------------------------
# running

def run_case(scenario, case=None, eta_p2g=None, progress=None):
    """Simulate one case over the horizon and return its ResultSet.

    For LPP2G without an efficiency, a Reference run is done first to
    calibrate it.  On failure a SimulationFault carries the partial trace.
    """
    sc = scenario.with_case(case or scenario.case.case, eta_p2g)
    calibrated = False
    if sc.case.case == lumped.LPP2G and sc.case.eta_p2g is None:
        sc = sc.with_case(lumped.LPP2G, calibrate(scenario))
        calibrated = True
    system = sc.system()
    eg, gg = sc.electric, sc.gas
    builder = TraceBuilder(list(eg.transformers), [p.id for p in sc.plants], eg.node_ids,
                           gg.node_ids, gg.pipe_ids)
    meta = run_meta(sc, calibrated)
    world = None
    for t in range(sc.steps):
        if world is None or (sc.reset_state_per_segment and sc.segment[t] != sc.segment[t - 1]):
            fresh = dispatch.initial_world(system, sc.initial_soc, sc.initial_pressure_barg)
            world = dataclasses.replace(fresh, step=t)
        lp0 = float(world.gas.mass.sum()) if world.gas is not None else 0.0
        try:
            _, world, rec = dispatch.step_coordinator(system, sc.load_mw[t], sc.gen_mw[t],
                                                      sc.withdrawal_kg_s[t], world)
        except SimulationFault as exc:
            exc.partial = builder.build({**meta, "failed_step": t, "error": str(exc)})
            raise
        head = {"step": t, "timestamp": sc.timestamps[t], "segment": int(sc.segment[t]),
                "step_s": sc.step_s, "linepack_start_kg": lp0}
        builder.add(head, rec)
        if progress is not None:
            progress(t + 1, sc.steps)
    return builder.build(meta)


def run_meta(sc, calibrated=False):
    return {
        "version": __version__,
        "scenario": sc.name,
        "case": sc.case.case,
        "config_hash": sc.config_hash,
        "eta_p2g": sc.case.eta_p2g,
        "eta_p2g_calibrated": calibrated,
        "step_s": sc.step_s,
        "steps": sc.steps,
        "non_heating_months": list(sc.calendar.non_heating_months),
        "lhv_kwh_per_kg": sc.gas.gas.lhv_kwh_per_kg,
        "curtail_barg": sc.controller.curtail_barg,
        "overshoot_tol_bar": sc.controller.overshoot_tol_bar,
    }


def calibrate(scenario, reference=None):
    """Yearly-average P2G efficiency from a Reference run.

    Defined as total SNG energy over total electric input net of the
    auxiliaries, the quantity the fixed-efficiency plant multiplies.
    """
    ref = reference if reference is not None else run_case(scenario, lumped.REFERENCE)
    pl = ref["plants"]
    dt_h = ref.meta["step_s"] / 3600.0
    sng = float(pl["sng_kw"].sum()) * dt_h
    net = float((pl["el_kw"] - pl["aux_kw"]).sum()) * dt_h
    if net <= 0:
        raise ValidationError("calibration needs a Reference run in which the plants consume power")
    return sng / net
