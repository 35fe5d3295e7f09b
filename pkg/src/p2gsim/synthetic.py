"""Deterministic synthetic example system.

Builds a 43-node radial MV grid (5 feeders, 3 transformers), a 70-node
meshed MP gas grid with one citygate, three P2G plants and 15-minute series
for four representative weeks (January, April, July, October).  Magnitudes
follow a mid-size northern-Italian urban district: about 14 MW of PV, 4 MW
of wind concentrated behind the third transformer, 30 GWh/yr electric demand
and 36 GWh/yr of gas with a strong winter peak.  Everything derives from a
fixed seed, so regenerating yields byte-identical files.
"""
from __future__ import annotations

import gzip
import io
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

SEED = 20230716
STEP_S = 900
WEEKS = ("2023-01-16", "2023-04-17", "2023-07-17", "2023-10-16")
SUMMER_DAY = "2023-07-19"
WINTER_DAY = "2023-01-21"
LHV_SNG = 13.89  # kWh/kg

# feeders: transformer, node ids (chain order, first node hangs off the slack)
FEEDERS = {
    "F1": ("TR1", list(range(2, 10))),
    "F2": ("TR2", list(range(10, 18))),
    "F3": ("TR2", list(range(18, 27))),
    "F4": ("TR3", list(range(27, 36))),
    "F5": ("TR3", list(range(36, 44))),
}
PLANTS = (
    {"id": 1, "electric_node": 7, "gas_node": 4, "transformer": "TR1"},
    {"id": 2, "electric_node": 11, "gas_node": 30, "transformer": "TR2"},
    {"id": 3, "electric_node": 30, "gas_node": 45, "transformer": "TR3"},
)
# yearly-average demand (MW) and installed PV (MW) per transformer
TR_LOAD_MW = {"TR1": 0.89, "TR2": 1.88, "TR3": 0.66}
TR_PV_MW = {"TR1": 4.24, "TR2": 5.98, "TR3": 4.08}
WIND_MW = {40: 2.2, 43: 2.2}
# month -> (PV peak as share of installed, day length h, mean clearness)
PV_MONTH = {1: (0.55, 9.0, 0.55), 4: (0.80, 13.0, 0.65), 7: (0.85, 15.2, 0.80), 10: (0.65, 11.0, 0.60)}
WIND_MONTH = {1: 0.14, 4: 0.10, 7: 0.06, 10: 0.10}  # capacity factor
LOAD_MONTH = {1: 0.98, 4: 0.95, 7: 1.12, 10: 0.95}
GAS_MONTH_MW = {1: 10.5, 4: 1.45, 7: 0.60, 10: 4.6}  # mean withdrawal (LHV MW)


def electric_grid_dict():
    nodes = [{"id": 1}]
    branches, feeders = [], []
    cable = (0.0021, 0.0016)  # pu per segment (about 0.8 km of 22 kV cable)
    trafo = (0.0015, 0.030)
    bid = 1
    for fid, (tr, ids) in FEEDERS.items():
        feeders.append({"id": fid, "transformer": tr})
        for k, n in enumerate(ids):
            nodes.append({"id": n, "feeder": fid} if k == 0 else {"id": n})
            # a short lateral every third node keeps the feeders from being pure chains
            parent = 1 if k == 0 else (ids[k - 2] if k % 3 == 2 else ids[k - 1])
            r, x = (trafo[0] + cable[0], trafo[1] + cable[1]) if k == 0 else cable
            branches.append({"id": bid, "from": parent, "to": n, "r_pu": r, "x_pu": x})
            bid += 1
    return {
        "bases": {"s_mva": 10.0, "v_kv": 22.0},
        "slack": 1,
        "nodes": nodes,
        "branches": branches,
        "feeders": feeders,
        "transformers": [{"id": t} for t in ("TR1", "TR2", "TR3")],
    }


def gas_grid_dict(n=70, extra_edges=24, seed=SEED):
    """Meshed 70-node network: a spanning tree over random sites plus short chords."""
    rng = np.random.default_rng(seed + 1)
    pts = rng.uniform(0, 3600, size=(n, 2))
    pts[0] = (0.0, 1800.0)  # citygate at the west edge
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    # Prim's tree from the citygate; node numbering follows insertion order
    in_tree = np.zeros(n, bool)
    in_tree[0] = True
    best = d[0].copy()
    link = np.zeros(n, int)
    order, edges = [0], []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        in_tree[j] = True
        order.append(j)
        edges.append((link[j], j))
        closer = d[j] < best
        best = np.where(closer, d[j], best)
        link = np.where(closer, j, link)
    tree = {frozenset(e) for e in edges}
    chords = sorted(((d[a, b], a, b) for a in range(n) for b in range(a + 1, n)
                     if frozenset((a, b)) not in tree and d[a, b] < 900), key=lambda t: t[0])
    rng.shuffle(chords)
    edges += [(a, b) for _, a, b in chords[:extra_edges]]
    num = {old: k + 1 for k, old in enumerate(order)}

    # diameters by distance from the citygate along the tree
    depth = {0: 0}
    for a, b in edges[: n - 1]:
        depth[b] = depth[a] + 1
    sizes = (300, 250, 200, 150, 125)
    pipes = []
    for k, (a, b) in enumerate(edges):
        lvl = min(depth.get(a, 9), depth.get(b, 9))
        dia = sizes[min(lvl // 3, len(sizes) - 1)]
        pipes.append({"id": k + 1, "from": num[a], "to": num[b],
                      "length_m": round(float(d[a, b]) * 1.3, 1), "diameter_mm": dia})
    nodes = [{"id": k + 1} for k in range(n)]
    nodes[0]["citygate"] = True
    return {
        "gas": {"rho_n": 0.78, "r_gas": 518.3, "temperature_k": 288.15, "lhv_kwh_per_kg": LHV_SNG},
        "limits": {"p_min_barg": 1.5, "p_max_barg": 5.0},
        "citygate": {"node": 1, "setpoint_barg": 4.3, "gain_kg_s_per_bar": 2.0, "capacity_kg_s": 5.0},
        "nodes": nodes,
        "pipes": pipes,
    }


def _day_load_shape(hours, weekend):
    base = 0.62 + 0.45 * np.exp(-((hours - 10.5) / 2.8) ** 2) + 0.62 * np.exp(-((hours - 19.5) / 2.0) ** 2)
    base = base / base.mean()
    return base * (0.85 if weekend else 1.06)


def _gas_shape(hours, heating):
    if heating:
        s = 0.55 + 0.9 * np.exp(-((hours - 7.5) / 2.0) ** 2) + 0.7 * np.exp(-((hours - 19.0) / 2.5) ** 2)
    else:  # domestic hot water and cooking: sharp morning and evening peaks, quiet midday
        s = 0.15 + 1.2 * np.exp(-((hours - 7.5) / 1.4) ** 2) + 1.5 * np.exp(-((hours - 20.0) / 1.8) ** 2)
    return s / s.mean()


def week_series(start, rng, days=7):
    """Per-node electric load, generation (MW) and gas withdrawal (kg/s) for one window."""
    t0 = pd.Timestamp(start)
    n = days * 96
    stamps = t0 + pd.to_timedelta(np.arange(n) * STEP_S, unit="s")
    hours = (np.arange(n) % 96) / 4.0 + 0.125
    day = np.arange(n) // 96
    month = t0.month
    weekend = ((t0.dayofweek + day) % 7) >= 5

    # electric load
    shape = np.concatenate([_day_load_shape(hours[:96], w) for w in weekend[::96]])
    noise = 1 + 0.04 * rng.standard_normal(n)
    load = {}
    for fid, (tr, ids) in FEEDERS.items():
        count = sum(len(v) for t, v in FEEDERS.values() if t == tr)
        w = 0.6 + 0.8 * rng.random(len(ids))
        for node, wk in zip(ids, w):
            load[node] = TR_LOAD_MW[tr] * LOAD_MONTH[month] / count * wk * shape * noise
    # renormalise each transformer to its target mean
    for tr in TR_LOAD_MW:
        ids = [i for t, v in FEEDERS.values() if t == tr for i in v]
        tot = sum(load[i] for i in ids)
        scale = TR_LOAD_MW[tr] * LOAD_MONTH[month] / tot.mean()
        for i in ids:
            load[i] = load[i] * scale

    # PV: clear-sky bell times a daily clearness with intra-day cloud noise
    peak, length, clear = PV_MONTH[month]
    sr = 12.0 - length / 2
    bell = np.clip(np.sin(np.pi * (hours - sr) / length), 0, None) ** 1.3
    kd = np.clip(clear + 0.25 * rng.standard_normal(days), 0.15, 1.0)
    cloud = np.clip(1 - 0.25 * np.abs(rng.standard_normal(n)) * (1 - kd[day]), 0.2, 1.0)
    pv_pu = peak * bell * np.repeat(kd, 96) * cloud
    gen = {}
    for fid, (tr, ids) in FEEDERS.items():
        count = sum(len(v) for t, v in FEEDERS.values() if t == tr)
        w = 0.5 + rng.random(len(ids))
        w = w / w.mean()
        for node, wk in zip(ids, w):
            gen[node] = TR_PV_MW[tr] / count * wk * pv_pu

    # wind: AR(1) speed through a cubic power curve, rescaled to the monthly capacity factor
    speed = np.empty(n)
    x = rng.standard_normal()
    for k in range(n):
        x = 0.985 * x + math.sqrt(1 - 0.985**2) * rng.standard_normal()
        speed[k] = x
    v = np.exp(0.55 * speed)

    def power(a):
        return np.clip((a * v - 0.6) / 1.6, 0, 1) ** 3

    lo, hi = 0.0, 50.0  # speed scale matching the monthly capacity factor
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if power(mid).mean() < WIND_MONTH[month] else (lo, mid)
    curve = power(0.5 * (lo + hi))
    for node, cap in WIND_MW.items():
        gen[node] = gen[node] + cap * curve

    # gas: demand shape split over consumer nodes
    heating = month not in (4, 5, 6, 7, 8, 9)
    gshape = np.concatenate([_gas_shape(hours[:96], heating)] * days)
    temp = np.repeat(1 + 0.12 * rng.standard_normal(days), 96)
    total_kg_s = GAS_MONTH_MW[month] * 1000 / LHV_SNG / 3600 * gshape * np.clip(temp, 0.6, 1.4)
    gas_nodes = [k for k in range(2, 71) if k % 4 != 3]  # some junction-only nodes
    w = rng.gamma(2.0, 1.0, len(gas_nodes))
    w = w / w.sum()
    gas = {node: total_kg_s * wk for node, wk in zip(gas_nodes, w)}
    return stamps, load, gen, gas


def build_series(weeks=WEEKS, seed=SEED):
    rng = np.random.default_rng(seed)
    out = {"electric_load": [], "electric_generation": [], "gas_withdrawal": []}
    for start in weeks:
        stamps, load, gen, gas = week_series(start, rng)
        labels = stamps.strftime("%Y-%m-%dT%H:%M:%S")
        for key, data in (("electric_load", load), ("electric_generation", gen), ("gas_withdrawal", gas)):
            for node in sorted(data):
                out[key].append(pd.DataFrame({"timestamp": labels, "node_id": node,
                                              "value": np.maximum(data[node], 0.0)}))
    return {k: pd.concat(v, ignore_index=True) for k, v in out.items()}


def _write_gz_csv(df, path):
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format="%.7g", lineterminator="\n")
    with open(path, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
        gz.write(buf.getvalue().encode())


def scenario_dict(name, time, controller=None, initial=None):
    return {
        "name": name,
        "electric_grid": "electric_grid.json",
        "gas_grid": "gas_grid.json",
        "series": {
            "electric_load": "electric_load.csv.gz",
            "electric_generation": "electric_generation.csv.gz",
            "gas_withdrawal": "gas_withdrawal.csv.gz",
        },
        "time": time,
        "plants": [dict(p) for p in PLANTS],
        "controller": controller or {},
        "case": {"name": "reference"},
        "calendar": {"non_heating_months": [4, 5, 6, 7, 8, 9]},
        "initial": initial or {"plant_soc": 0.0, "gas_pressure_barg": 4.3},
    }


def write_example(out_dir):
    """Write topologies, series and the three bundled scenario files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "electric_grid.json").write_text(json.dumps(electric_grid_dict(), indent=1) + "\n")
    (out / "gas_grid.json").write_text(json.dumps(gas_grid_dict(), indent=1) + "\n")
    for key, df in build_series().items():
        _write_gz_csv(df, out / f"{key}.csv.gz")
    scenarios = {
        "four_weeks.json": scenario_dict(
            "four representative weeks",
            {"step_s": STEP_S, "segments": [{"start": f"{w}T00:00:00", "steps": 672} for w in WEEKS]},
            controller={"gas_substep_s": 300.0},
        ),
        "summer_day.json": scenario_dict(
            "summer day", {"step_s": STEP_S, "start": f"{SUMMER_DAY}T00:00:00", "steps": 96},
            controller={"gas_substep_s": 60.0},
            initial={"plant_soc": [0.4, 0.45, 0.5], "gas_pressure_barg": 4.6},
        ),
        "winter_day.json": scenario_dict(
            "winter day", {"step_s": STEP_S, "start": f"{WINTER_DAY}T00:00:00", "steps": 96},
            controller={"gas_substep_s": 60.0},
            initial={"plant_soc": [0.55, 0.55, 0.7], "gas_pressure_barg": 4.3},
        ),
    }
    for fname, sc in scenarios.items():
        (out / fname).write_text(json.dumps(sc, indent=1) + "\n")
    return out
