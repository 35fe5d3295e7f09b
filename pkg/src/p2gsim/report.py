"""Seasonal energy tables, cross-case deltas and plot-ready series."""
from __future__ import annotations

from dataclasses import dataclass

import pandas as pd

from .errors import IncompleteTrace, ScenarioMismatch, UnknownView, WindowOutOfRange

SEASONS = ("heating", "non_heating", "year")
PLANT_METRICS = ("el_gwh", "sng_gwh")
TR_METRICS = ("demand_gwh", "res_gwh", "surplus_gwh", "absorbed_gwh", "rpf_gwh")
GAS_METRICS = ("demand_gwh", "imported_gwh", "sng_gwh", "linepack_change_gwh")
HEADLINE = ("plants.total.el_gwh", "plants.total.sng_gwh", "transformers.total.rpf_gwh",
            "gas.network.imported_gwh")
VIEWS = ("balance", "pressure", "transformer", "buffer")
LAYOUT_VERSION = 1

_SYSTEM_COLS = ("step", "timestamp", "step_s", "load_mw", "gen_mw", "lumped_surplus_mw",
                "lumped_rpf_mw", "withdrawal_kg_s", "sng_kg_s", "citygate_import_kg_s",
                "linepack_kg", "linepack_start_kg")


@dataclass
class SeasonalSummary:
    """``cells[season][group][entity][metric]`` in GWh.

    Groups are ``plants`` (per plant id plus ``total``), ``transformers``
    (per transformer plus ``total``) and ``gas`` (single entity ``network``).
    """

    case: str
    config_hash: str
    non_heating_months: tuple
    cells: dict

    def frame(self, group):
        rows = []
        for season in SEASONS:
            for entity, metrics in self.cells[season][group].items():
                rows.append({"season": season, "entity": str(entity), **metrics})
        return pd.DataFrame(rows)

    def value(self, season, metric):
        group, entity, name = metric.split(".")
        return self.cells[season][group][_key(self.cells[season][group], entity)][name]


def _key(d, entity):
    for k in d:
        if str(k) == entity:
            return k
    raise KeyError(entity)


def summarize_seasonal(results, non_heating_months=None):
    """Integrate the trace into energies per season (rectangle rule)."""
    sy = results["system"]
    missing = [c for c in _SYSTEM_COLS if c not in sy.columns]
    if missing:
        raise IncompleteTrace(f"system table lacks columns {missing}")
    n = results.meta.get("steps")
    if n is not None and len(sy) != n:
        raise IncompleteTrace(f"trace holds {len(sy)} of {n} steps")
    months = tuple(non_heating_months or results.meta.get("non_heating_months", (4, 5, 6, 7, 8, 9)))
    lhv = float(results.meta.get("lhv_kwh_per_kg", 13.89))
    lumped_el = results.meta.get("case") == "lpen"

    month = sy["timestamp"].str.slice(5, 7).astype(int)
    season_of_step = pd.Series(["non_heating" if m in months else "heating" for m in month],
                               index=sy["step"].to_numpy())
    hours = (sy["step_s"] / 3600.0).to_numpy()
    hours_of_step = pd.Series(hours, index=sy["step"].to_numpy())

    cells = {}
    for season in ("heating", "non_heating"):
        mask = (season_of_step == season).to_numpy()
        s = sy[mask]
        h = hours[mask]
        pl = results["plants"]
        pl = pl[pl["step"].map(season_of_step).to_numpy() == season]
        ph = pl["step"].map(hours_of_step).to_numpy()
        plants = {}
        for pid, grp in pl.assign(_h=ph).groupby("plant", sort=False):
            plants[pid] = {"el_gwh": float((grp["el_kw"] * grp["_h"]).sum()) / 1e6,
                           "sng_gwh": float((grp["sng_kw"] * grp["_h"]).sum()) / 1e6}
        plants["total"] = {m: sum(v[m] for v in plants.values()) for m in PLANT_METRICS}

        tr = results["transformers"]
        tr = tr[tr["step"].map(season_of_step).to_numpy() == season]
        th = tr["step"].map(hours_of_step).to_numpy()
        trs = {}
        for tid, grp in tr.assign(_h=th).groupby("transformer", sort=False):
            e = {c: float((grp[c] * grp["_h"]).sum()) / 1e3
                 for c in ("load_mw", "res_mw", "surplus_mw", "rpf_mw")}
            trs[tid] = _tr_cells(e["load_mw"], e["res_mw"], e["surplus_mw"], e["rpf_mw"])
        if lumped_el:
            total = _tr_cells(float((s["load_mw"] * h).sum()) / 1e3, float((s["gen_mw"] * h).sum()) / 1e3,
                              float((s["lumped_surplus_mw"] * h).sum()) / 1e3,
                              float((s["lumped_rpf_mw"] * h).sum()) / 1e3)
        else:
            total = {m: sum(v[m] for v in trs.values()) for m in TR_METRICS}
        trs["total"] = total

        kg_to_gwh = lhv / 1e6
        gas = {"network": {
            "demand_gwh": float((s["withdrawal_kg_s"] * h).sum()) * 3600 * kg_to_gwh,
            "imported_gwh": float((s["citygate_import_kg_s"] * h).sum()) * 3600 * kg_to_gwh,
            "sng_gwh": float((s["sng_kg_s"] * h).sum()) * 3600 * kg_to_gwh,
            "linepack_change_gwh": float((s["linepack_kg"] - s["linepack_start_kg"]).sum()) * kg_to_gwh,
        }}
        cells[season] = {"plants": plants, "transformers": trs, "gas": gas}

    year = {}
    for group in ("plants", "transformers", "gas"):
        h, nh = cells["heating"][group], cells["non_heating"][group]
        keys = list(dict.fromkeys([*h, *nh]))
        year[group] = {}
        for k in keys:
            a, b = h.get(k), nh.get(k)
            names = (a or b).keys()
            year[group][k] = {m: (a[m] if a else 0.0) + (b[m] if b else 0.0) for m in names}
        for season in ("heating", "non_heating"):
            for k in keys:
                cells[season][group].setdefault(k, {m: 0.0 for m in year[group][k]})
    cells["year"] = year
    return SeasonalSummary(case=results.meta.get("case", "?"),
                           config_hash=results.meta.get("config_hash", ""),
                           non_heating_months=months, cells=cells)


def _tr_cells(demand, res, surplus, rpf):
    return {"demand_gwh": demand, "res_gwh": res, "surplus_gwh": surplus,
            "absorbed_gwh": surplus - rpf, "rpf_gwh": rpf}


@dataclass(frozen=True)
class CaseDelta:
    metric: str  # group.entity.name
    season: str
    reference: float
    variant: float
    delta: float | None  # (variant - reference) / reference; None when reference is 0
    ratio: float | None
    headline: bool

    @property
    def defined(self):
        return self.delta is not None


def compare_cases(ref, variant):
    """Relative deviation and ratio for every metric present in both summaries."""
    if ref.config_hash != variant.config_hash:
        raise ScenarioMismatch(f"config hashes differ ({ref.config_hash[:12]} vs {variant.config_hash[:12]})")
    if tuple(ref.non_heating_months) != tuple(variant.non_heating_months):
        raise ScenarioMismatch("summaries use different season calendars")
    out = []
    for season in SEASONS:
        for group, ents in ref.cells[season].items():
            other = {str(k): v for k, v in variant.cells[season].get(group, {}).items()}
            for ent, metrics in ents.items():
                if str(ent) not in other:
                    continue
                for name, r in metrics.items():
                    if name not in other[str(ent)]:
                        continue
                    v = other[str(ent)][name]
                    metric = f"{group}.{ent}.{name}"
                    delta = (v - r) / r if r != 0 else None
                    ratio = v / r if r != 0 else None
                    out.append(CaseDelta(metric, season, r, v, delta, ratio, metric in HEADLINE))
    return out


def deltas_frame(deltas):
    return pd.DataFrame([d.__dict__ for d in deltas])


def emit_plotdata(results, view, window=None):
    """Tidy per-view series; ``window`` is an inclusive (from, to) pair of ISO timestamps."""
    if view not in VIEWS:
        raise UnknownView(f"unknown view {view!r}; expected one of {VIEWS}")
    sy = results["system"]
    stamps = sy[["step", "timestamp"]]
    if window is not None:
        lo, hi = (pd.Timestamp(w).strftime("%Y-%m-%dT%H:%M:%S") for w in window)
        first, last = stamps["timestamp"].iloc[0], stamps["timestamp"].iloc[-1]
        if lo > hi or lo < first or hi > last:
            raise WindowOutOfRange(f"window {lo}..{hi} not inside the trace span {first}..{last}")
        stamps = stamps[(stamps["timestamp"] >= lo) & (stamps["timestamp"] <= hi)]
    if view == "balance":
        cols = ["timestamp", "load_mw", "gen_mw", "p2g_mw", "hv_import_mw", "rpf_mw",
                "withdrawal_kg_s", "sng_kg_s", "citygate_import_kg_s"]
        if "max_pressure_barg" in sy.columns:
            cols.append("max_pressure_barg")
        return sy.loc[stamps.index, cols].reset_index(drop=True)
    table, key, cols = {
        "pressure": ("gas_nodes", "node", ["pressure_barg"]),
        "transformer": ("transformers", "transformer", ["power_mw", "import_mw", "rpf_mw", "surplus_mw"]),
        "buffer": ("plants", "plant", ["soc", "buffer_bar", "el_kw", "sng_kg_h", "curtailment"]),
    }[view]
    df = results[table].merge(stamps, on="step", how="inner")
    df = df.rename(columns={key: "node_id" if view == "pressure" else key})
    return df[["timestamp", "node_id" if view == "pressure" else key, *cols]].reset_index(drop=True)
