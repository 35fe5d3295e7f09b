"""Result trace of one run: a metadata dict plus long-format pandas tables.

Tables (all keyed by the integer ``step``):

- ``system``: one row per step (timestamps, totals, gas balance, limits)
- ``transformers``: one row per step and transformer
- ``plants``: one row per step and plant
- ``buses``, ``gas_nodes``, ``pipes``: detail traces, present when recorded

Persisted either as a directory of CSV files plus ``meta.json`` or as one
JSON document.  Both formats load back to an identical ResultSet.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IncompleteTrace, ParseError

TABLES = ("system", "transformers", "plants", "buses", "gas_nodes", "pipes")
FORMATS = ("csv", "json")


@dataclass
class ResultSet:
    meta: dict
    tables: dict = field(default_factory=dict)

    def __getitem__(self, name):
        try:
            return self.tables[name]
        except KeyError:
            raise IncompleteTrace(f"trace has no {name!r} table") from None

    @property
    def steps(self):
        return len(self.tables.get("system", ()))

    def equals(self, other):
        if self.meta != other.meta or list(self.tables) != list(other.tables):
            return False
        return all(self.tables[k].equals(other.tables[k]) for k in self.tables)


class TraceBuilder:
    """Accumulates per-step records and turns them into tables."""

    def __init__(self, transformer_ids, plant_ids, bus_ids, gas_node_ids, pipe_ids):
        self.tr_ids = list(transformer_ids)
        self.plant_ids = list(plant_ids)
        self.bus_ids = list(bus_ids)
        self.gas_node_ids = list(gas_node_ids)
        self.pipe_ids = list(pipe_ids)
        self.system, self.tr, self.plants = [], [], []
        self.v, self.p, self.f = [], [], []

    def add(self, head, record):
        self.system.append({**head, **record.system})
        self.tr.append(record.transformers)
        self.plants.append(record.plants)
        if record.voltages is not None:
            self.v.append(record.voltages)
        if record.pressures_barg is not None:
            self.p.append(record.pressures_barg)
            self.f.append(record.pipe_flows)

    def __len__(self):
        return len(self.system)

    def build(self, meta):
        n = len(self.system)
        tables = {"system": pd.DataFrame(self.system)}
        steps = np.arange(n)
        tables["transformers"] = _long(steps, "transformer", self.tr_ids, self.tr)
        tables["plants"] = _long(steps, "plant", self.plant_ids, self.plants)
        if self.v and len(self.v) == n:
            v = np.array(self.v)
            tables["buses"] = _long_matrix(steps, "node", self.bus_ids, {
                "vm_pu": np.abs(v), "va_deg": np.degrees(np.angle(v))})
        if self.p and len(self.p) == n:
            tables["gas_nodes"] = _long_matrix(steps, "node", self.gas_node_ids,
                                               {"pressure_barg": np.array(self.p)})
            tables["pipes"] = _long_matrix(steps, "pipe", self.pipe_ids,
                                           {"flow_kg_s": np.array(self.f)})
        return ResultSet(meta=meta, tables=tables)


def _long(steps, key, ids, rows):
    k = len(ids)
    data = {"step": np.repeat(steps, k), key: ids * len(steps)}
    if rows:
        for col in rows[0]:
            vals = [v for r in rows for v in list(r[col])]
            data[col] = vals
    return pd.DataFrame(data)


def _long_matrix(steps, key, ids, cols):
    k = len(ids)
    data = {"step": np.repeat(steps, k), key: list(ids) * len(steps)}
    for c, m in cols.items():
        data[c] = np.asarray(m, dtype=float).reshape(-1)
    return pd.DataFrame(data)


# --------------------------------------------------------------------------
# persistence

def persist_results(results, path, fmt="csv"):
    """Write ``results`` to ``path`` (a directory for csv, a file for json)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    meta = dict(results.meta)
    # ordered [table, [[column, dtype], ...]] pairs; survives key sorting
    meta["layout"] = [[k, [[c, str(t)] for c, t in df.dtypes.items()]] for k, df in results.tables.items()]
    if fmt == "csv":
        path.mkdir(parents=True, exist_ok=True)
        for name, df in results.tables.items():
            df.to_csv(path / f"{name}.csv", index=False, lineterminator="\n")
        (path / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    else:
        doc = {"meta": meta, "tables": {k: {c: df[c].tolist() for c in df.columns}
                                        for k, df in results.tables.items()}}
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, sort_keys=False) + "\n")
    return path


def load_results(path):
    """Load a trace written by :func:`persist_results` (format detected from ``path``)."""
    path = Path(path)
    if path.is_dir():
        meta = _read_json(path / "meta.json")
        dtypes = _layout(meta)
        tables = {}
        for name in dtypes:
            f = path / f"{name}.csv"
            if not f.exists():
                raise IncompleteTrace(f"{f} is missing")
            str_cols = {c: str for c, t in dtypes[name].items() if t == "object"}
            df = pd.read_csv(f, dtype=str_cols, keep_default_na=False, float_precision="round_trip")
            tables[name] = _cast(df, dtypes[name], f)
        return ResultSet(meta=meta, tables=tables)
    doc = _read_json(path)
    try:
        meta, raw = doc["meta"], doc["tables"]
    except (KeyError, TypeError):
        raise IncompleteTrace(f"{path}: expected 'meta' and 'tables' keys") from None
    dtypes = _layout(meta)
    tables = {k: _cast(pd.DataFrame(v), dtypes.get(k, {}), path) for k, v in raw.items()}
    return ResultSet(meta=meta, tables=tables)


def _layout(meta):
    return {name: dict(cols) for name, cols in meta.pop("layout", [])}


def _cast(df, dtypes, where):
    if list(df.columns) != list(dtypes):
        raise IncompleteTrace(f"{where}: columns {list(df.columns)} differ from the recorded layout")
    for c, t in dtypes.items():
        if str(df[c].dtype) != t:
            df[c] = df[c].astype(t)
    return df


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise IncompleteTrace(f"{path} not found") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
