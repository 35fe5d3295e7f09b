"""Acceptance criteria 1-9; each test prints one PASS/FAIL line."""
import filecmp
import time

import numpy as np
import pytest

from p2gsim import dispatch, gas, lumped, report
from p2gsim.electric import ElectricGrid, NodeInjection, bfs_power_flow
from p2gsim.plant import RUNNING, PlantParams, PlantState, plant_step
from p2gsim.results import load_results, persist_results
from p2gsim.scenario import load_scenario, run_case

from oracles import newton_power_flow, plant_violations, random_radial


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_1_power_flow_oracle(verdict):
    rng = np.random.default_rng(1)
    worst, elapsed = 0.0, 0.0
    for _ in range(50):
        n = int(rng.integers(1, 16))
        g = ElectricGrid.from_dict(random_radial(rng, n))
        inj = NodeInjection.zeros(n)
        inj.s_load[:] = rng.uniform(0, 0.3, n) * np.exp(1j * rng.uniform(0, 0.5, n))
        t0 = time.perf_counter()
        sol = bfs_power_flow(g, inj, tol=1e-12)
        elapsed += time.perf_counter() - t0
        worst = max(worst, float(np.max(np.abs(sol.v - newton_power_flow(g, inj)))))
    verdict(1, worst < 1e-8 and elapsed < 1.0, f"max |dv| {worst:.2e} pu, BFS time {elapsed:.3f} s")


def test_2_renouard_round_trip(verdict):
    rng = np.random.default_rng(2)
    pm, pn = rng.uniform(1.0, 7.0, 1000), rng.uniform(1.0, 7.0, 1000)
    length, d = rng.uniform(10, 5000, 1000), rng.uniform(50, 400, 1000)
    f = gas.pipe_flow(pm, pn, length, d)
    dp2 = gas.pipe_dp2(f, length, d)
    back = gas.pipe_flow(np.sqrt(pn**2 + dp2), pn, length, d)
    rel = float(np.max(np.abs(back - f) / np.abs(f)))
    antisym = bool(np.all(gas.pipe_flow(pn, pm, length, d) == -f))
    verdict(2, rel < 1e-9 and antisym, f"max rel error {rel:.2e}, antisymmetry exact: {antisym}")


def test_3_gas_mass_conservation(verdict):
    sc = load_scenario("summer_day.json", {"controller": {"gas_substep_s": 5.0, "record_detail": False}})
    t0 = time.perf_counter()
    res = run_case(sc)
    elapsed = time.perf_counter() - t0
    sy = res["system"]
    net = float(((sy.sng_kg_s + sy.citygate_import_kg_s - sy.withdrawal_kg_s) * sy.step_s).sum())
    change = float(sy.linepack_kg.iloc[-1] - sy.linepack_start_kg.iloc[0])
    rel = abs(change - net) / abs(change)
    verdict(3, sc.steps == 96 and rel < 1e-6 and elapsed < 10.0,
            f"linepack change {change:.4f} kg vs exchange {net:.4f} kg, rel {rel:.1e}, {elapsed:.1f} s")


def _priority(p, prev):
    at_full = prev.mode == RUNNING and prev.meth_output_kg_h >= p.meth_capacity_kg_h - 1e-9
    return (not at_full, -prev.buffer_kwh, p.id)


def test_4_pressure_limit_and_priority(summer, summer_ref, verdict):
    sy, pl = summer_ref["system"], summer_ref["plants"]
    limit = summer.controller.curtail_barg + summer.controller.overshoot_tol_bar
    max_p = float(sy.max_pressure_barg.max())
    ids = [p.id for p in summer.plants]
    by_step = {k: g.set_index("plant") for k, g in pl.groupby("step")}
    episodes = ordered = full_kept = 0
    for k in sorted(by_step)[1:]:
        cur, prev = by_step[k], by_step[k - 1]
        blocked = [i for i in ids if cur.at[i, "curtailment"] == dispatch.GAS_PRESSURE]
        if not blocked:
            continue
        episodes += 1
        states = {p.id: PlantState(buffer_kwh=prev.at[p.id, "soc"] * p.buffer_capacity_kwh,
                                   meth_output_kg_h=prev.at[p.id, "sng_kg_h"], mode=prev.at[p.id, "mode"])
                  for p in summer.plants}
        kept = [i for i in ids if i not in blocked and cur.at[i, "sng_kg_h"] > 0]
        prio = {p.id: _priority(p, states[p.id]) for p in summer.plants}
        if all(prio[r] < prio[b] for r in kept for b in blocked):
            ordered += 1
        if any(states[r].meth_output_kg_h >= 43.2 - 1e-9 for r in kept):
            full_kept += 1
    ok = max_p <= limit and episodes > 0 and ordered == episodes and full_kept > 0
    verdict(4, ok, f"max {max_p:.5f} bar_g (limit {limit}), {episodes} curtailed steps, "
                   f"{ordered} in priority order, {full_kept} with a full-output unit retained")


def test_5_plant_constraint_fuzz(verdict):
    rng = np.random.default_rng(5)
    params = [PlantParams(id=1), PlantParams(id=2, ramp_up_kg_h=10.0, min_load_fraction=0.3),
              PlantParams(id=3, el_efficiency_curve=((0.0, 0.5), (0.6, 0.66), (1.0, 0.6)))]
    violations, steps = [], 0
    for p in params:
        s = PlantState.at_soc(p, rng.uniform())
        for _ in range(10_000):
            sp = rng.choice([0.0, rng.uniform(0, 1500), 1200.0, 5000.0])
            cmd = rng.choice([0.0, rng.uniform(0, 60), p.min_load_kg_h, p.meth_capacity_kg_h])
            r = plant_step(p, s, sp, cmd, 900.0)
            violations += plant_violations(p, s, r, sp)
            s = r.state
            steps += 1
    verdict(5, not violations, f"{steps} steps over {len(params)} parameter sets, "
                               f"{len(violations)} violations")


def test_6_lumped_conformance(verdict):
    checks = []
    r = lumped.lpen_step(10.0, 6.0, [1200.0] * 3)
    checks += [(r.rpf_mw, 4.0), (r.hv_import_mw, 0.0)]
    r = lumped.lpen_step(6.0, 10.0, [1200.0] * 3)
    checks += [(r.rpf_mw, 0.0), (r.hv_import_mw, 4.0)]
    r = lumped.lpen_step(10.2, 6.0, [1200.0] * 3)
    checks += [(v, 1200.0) for v in r.setpoints_kw] + [(r.residual_mw, 0.6)]
    for wit, off, acc, imp in ((1.0, 0.3, 0.3, 0.7), (0.1, 0.3, 0.1, 0.0), (0.0, 0.3, 0.0, 0.0)):
        g = lumped.lpgn_step(wit, off)
        checks += [(g.sng_accepted, acc), (g.gas_import, imp)]
    checks += [(lumped.lpp2g_step(0.0, 0.445, 12.0), 0.0),
               (lumped.lpp2g_step(1200.0, 0.445, 12.0), 0.445 * 1188.0),
               (lumped.lpp2g_step(12.0, 0.445, 12.0), 0.0)]
    worst = max(abs(a - b) for a, b in checks)
    verdict(6, worst <= 1e-12, f"{len(checks)} values, max deviation {worst:.1e}")


def test_7_directional_reproduction(four_weeks, verdict):
    s = {c: report.summarize_seasonal(r) for c, r in four_weeks["runs"].items()}
    ref, en, gn, p2 = s["reference"], s["lpen"], s["lpgn"], s["lpp2g"]
    surplus = [ref.value("year", f"transformers.{t}.surplus_gwh") for t in ("TR1", "TR2", "TR3")]
    share = max(surplus) / sum(surplus)
    el_delta = en.value("year", "plants.total.el_gwh") / ref.value("year", "plants.total.el_gwh") - 1
    sng_nh = gn.value("non_heating", "plants.total.sng_gwh") / ref.value("non_heating", "plants.total.sng_gwh")
    sng_h = gn.value("heating", "plants.total.sng_gwh") / ref.value("heating", "plants.total.sng_gwh")
    rpf = p2.value("non_heating", "transformers.total.rpf_gwh") / ref.value("non_heating", "transformers.total.rpf_gwh")
    heat = [p2.value("heating", f"plants.total.{m}") / ref.value("heating", f"plants.total.{m}")
            for m in ("el_gwh", "sng_gwh")]
    parts = {
        "lpen": share >= 0.55 and el_delta < 0,
        "lpgn": 0.5 <= sng_nh <= 0.9 and abs(sng_h - 1) <= 0.02,
        "lpp2g": rpf > 1 and all(abs(h - 1) <= 0.05 for h in heat),
        "runtime": four_weeks["seconds"] < 60,
    }
    detail = (f"surplus share {share:.0%}, LPEN el {el_delta:+.1%}; LPGN non-heating SNG {sng_nh:.0%}, "
              f"heating {sng_h - 1:+.1%}; LPP2G non-heating RPF x{rpf:.2f}, heating el/SNG "
              f"{heat[0] - 1:+.1%}/{heat[1] - 1:+.1%}; {four_weeks['seconds']:.1f} s; "
              f"failed: {[k for k, v in parts.items() if not v] or 'none'}")
    verdict(7, all(parts.values()), detail)


def test_8_calibration_consistency(four_weeks, winter, verdict):
    eta = four_weeks["eta"]
    res = run_case(winter, lumped.LPP2G, eta_p2g=eta)
    pl = res["plants"]
    unconstrained = (pl.curtailment == dispatch.NONE).all()
    ratio = float(pl.sng_kw.sum() / (pl.el_kw - pl.aux_kw).sum())
    verdict(8, unconstrained and abs(ratio - eta) <= 1e-6,
            f"calibrated {eta:.6f}, winter LPP2G ratio {ratio:.6f}, unconstrained: {unconstrained}")


def test_9_determinism_and_persistence(summer, tmp_path, verdict):
    sc = summer.window(40, 80)
    a, b = run_case(sc), run_case(sc)
    pa, pb = persist_results(a, tmp_path / "a"), persist_results(b, tmp_path / "b")
    cmp = filecmp.dircmp(pa, pb)
    same_csv = not cmp.diff_files and not cmp.left_only and not cmp.right_only
    ja, jb = persist_results(a, tmp_path / "a.json", "json"), persist_results(b, tmp_path / "b.json", "json")
    same_json = ja.read_bytes() == jb.read_bytes()
    mem = report.summarize_seasonal(a)
    from_csv = report.summarize_seasonal(load_results(pa))
    from_json = report.summarize_seasonal(load_results(ja))
    same_summary = mem == from_csv == from_json
    verdict(9, same_csv and same_json and same_summary,
            f"csv identical: {same_csv}, json identical: {same_json}, summaries equal: {same_summary}")
