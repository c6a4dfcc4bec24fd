#!/usr/bin/env python3
"""Generates the bundled test cases and freezes reference power-flow solutions.

Reference voltages come from PYPOWER's Newton solver, run at a tight
tolerance. Run from the repository root:

    python3 tools/fixtures/make_fixtures.py tests/data
"""

import json
import math
import sys
from pathlib import Path

import networkx as nx
import numpy as np
from pypower.api import case14, ppoption, runpf

DEG = math.pi / 180.0


def fmt(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_matpower(path, name, ppc, comment):
    lines = [f"function mpc = {name}", f"% {comment}", "mpc.version = '2';", f"mpc.baseMVA = {fmt(ppc['baseMVA'])};", ""]
    heads = {
        "bus": "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "gen": "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
        "branch": "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
    }
    widths = {"bus": 13, "gen": 10, "branch": 13}
    for key in ("bus", "gen", "branch"):
        lines.append(heads[key])
        lines.append(f"mpc.{key} = [")
        for row in ppc[key]:
            lines.append("\t" + "\t".join(fmt(v) for v in row[: widths[key]]) + ";")
        lines.append("];")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def solve(ppc, enforce_q):
    """Newton solve; with enforce_q, PV buses whose units exceed their
    reactive range become PQ at the limit and the case is re-solved.
    PYPOWER's own limit loop also moves the slack, so it is not used."""
    opt = ppoption(PF_TOL=1e-12, PF_MAX_IT=50, VERBOSE=0, OUT_ALL=0, ENFORCE_Q_LIMS=0)
    work = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in ppc.items()}
    fixed = {}
    for _ in range(len(work["gen"]) + 1):
        res, ok = runpf(work, opt)
        if not ok or not enforce_q:
            break
        bus, gen = res["bus"], res["gen"]
        row = {int(b): i for i, b in enumerate(bus[:, 0])}
        changed = False
        for bid in sorted(set(int(b) for b in gen[:, 0])):
            bi = row[bid]
            if work["bus"][bi, 1] != 2:
                continue
            units = [g for g in range(len(gen)) if int(gen[g, 0]) == bid and gen[g, 7] > 0]
            q = sum(gen[g, 2] for g in units)
            qmax = sum(gen[g, 3] for g in units)
            qmin = sum(gen[g, 4] for g in units)
            tol = 1e-6
            if q > qmax + tol or q < qmin - tol:
                lim = qmax if q > qmax else qmin
                fixed[bid] = lim
                work["bus"][bi, 1] = 1
                work["bus"][bi, 3] -= lim
                for g in units:
                    work["gen"][g, 7] = 0
                    work["bus"][bi, 2] -= work["gen"][g, 1]
                changed = True
        if not changed:
            break
        for i in range(len(work["bus"])):
            work["bus"][i, 7] = res["bus"][i, 7]
            work["bus"][i, 8] = res["bus"][i, 8]
    res["converted_to_pq"] = sorted(fixed)
    return res, bool(ok)


def reference(ppc, enforce_q):
    res, ok = solve(ppc, enforce_q)
    if not ok:
        raise SystemExit("reference solve failed")
    bus = res["bus"]
    return {
        "enforce_q_limits": enforce_q,
        "converted_to_pq": res["converted_to_pq"],
        "bus_ids": [int(b) for b in bus[:, 0]],
        "vm": [float(v) for v in bus[:, 7]],
        "va_rad": [float(v) * DEG for v in bus[:, 8]],
        "branch_p_from_mw": [float(v) for v in res["branch"][:, 13]],
        "branch_q_from_mvar": [float(v) for v in res["branch"][:, 14]],
    }


def freeze(path, ppc, both=True):
    refs = [reference(ppc, False)]
    if both:
        refs.append(reference(ppc, True))
    Path(path).write_text(json.dumps({"solutions": refs}, indent=1) + "\n")


def pad(rows, width):
    out = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def case5():
    # Stagg & El-Abiad 5-bus system.
    bus = [
        [1, 3, 0, 0, 0, 0, 1, 1.06, 0, 230, 1, 1.1, 0.9],
        [2, 2, 20, 10, 0, 0, 1, 1.0, 0, 230, 1, 1.1, 0.9],
        [3, 1, 45, 15, 0, 0, 1, 1.0, 0, 230, 1, 1.1, 0.9],
        [4, 1, 40, 5, 0, 0, 1, 1.0, 0, 230, 1, 1.1, 0.9],
        [5, 1, 60, 10, 0, 0, 1, 1.0, 0, 230, 1, 1.1, 0.9],
    ]
    gen = [
        [1, 0, 0, 300, -300, 1.06, 100, 1, 250, 0],
        [2, 40, 30, 300, -300, 1.0, 100, 1, 100, 0],
    ]
    z = [(1, 2, 0.02, 0.06, 0.06), (1, 3, 0.08, 0.24, 0.05), (2, 3, 0.06, 0.18, 0.04), (2, 4, 0.06, 0.18, 0.04),
         (2, 5, 0.04, 0.12, 0.03), (3, 4, 0.01, 0.03, 0.02), (4, 5, 0.08, 0.24, 0.05)]
    branch = [[f, t, r, x, b, 100, 100, 100, 0, 0, 1, -360, 360] for f, t, r, x, b in z]
    return {"version": "2", "baseMVA": 100.0, "bus": pad(bus, 13), "gen": pad(gen, 21), "branch": pad(branch, 13)}


def geographic(seed=20240611, n_bus=150, n_branch=195, n_county=100, load_scale=0.55):
    rng = np.random.default_rng(seed)
    lat0, lat1, lon0, lon1 = 26.0, 36.0, -106.0, -94.0

    # Buses cluster around a handful of load centres.
    centres = rng.uniform([lat0 + 1, lon0 + 1], [lat1 - 1, lon1 - 1], size=(8, 2))
    pts = []
    while len(pts) < n_bus:
        if rng.random() < 0.55:
            c = centres[rng.integers(len(centres))]
            p = c + rng.normal(0, [0.6, 0.7])
        else:
            p = rng.uniform([lat0, lon0], [lat1, lon1])
        if lat0 <= p[0] <= lat1 and lon0 <= p[1] <= lon1:
            pts.append(p)
    pts = np.array(pts)

    def km(i, j):
        a, b = pts[i] * DEG, pts[j] * DEG
        h = math.sin((b[0] - a[0]) / 2) ** 2 + math.cos(a[0]) * math.cos(b[0]) * math.sin((b[1] - a[1]) / 2) ** 2
        return 2 * 6371 * math.asin(min(1.0, math.sqrt(h)))

    g = nx.Graph()
    for i in range(n_bus):
        for j in range(i + 1, n_bus):
            g.add_edge(i, j, weight=km(i, j))
    tree = nx.minimum_spanning_tree(g)
    edges = set(tuple(sorted(e)) for e in tree.edges())
    degree = dict(tree.degree())
    # Leaves stay radial with some probability so islanding outages exist.
    radial = {v for v, d in degree.items() if d == 1 and rng.random() < 0.35}
    candidates = []
    for i in range(n_bus):
        if i in radial:
            continue
        near = sorted((km(i, j), j) for j in range(n_bus) if j != i and j not in radial)[:5]
        for d, j in near:
            e = tuple(sorted((i, j)))
            if e not in edges:
                candidates.append((d, e))
    candidates.sort()
    for _, e in candidates:
        if len(edges) >= n_branch:
            break
        edges.add(e)
    edges = sorted(edges)

    # Loads and generation.
    n_gen = 28
    order = rng.permutation(n_bus)
    gen_buses = sorted(int(b) for b in order[:n_gen])
    centre = pts.mean(axis=0)
    slack = min(gen_buses, key=lambda b: np.linalg.norm(pts[b] - centre))
    load_p = np.zeros(n_bus)
    load_q = np.zeros(n_bus)
    for b in range(n_bus):
        near_centre = min(np.linalg.norm(pts[b] - c) for c in centres)
        if b in gen_buses and rng.random() < 0.5:
            continue
        scale = load_scale * (70.0 if near_centre < 0.8 else 25.0)
        load_p[b] = round(float(rng.uniform(0.4, 1.6) * scale), 1)
        load_q[b] = round(load_p[b] * float(rng.uniform(0.2, 0.45)), 1)
    total_load = load_p.sum()

    pmax = {b: round(float(rng.uniform(150, 600)), 0) for b in gen_buses}
    pmax[slack] = 1500.0
    others = [b for b in gen_buses if b != slack]
    share = 0.85 * total_load / sum(pmax[b] for b in others)
    gen = []
    for b in gen_buses:
        vg = 1.04 if b == slack else round(float(rng.uniform(1.01, 1.045)), 3)
        pg = 0.0 if b == slack else round(min(0.95, share * float(rng.uniform(0.8, 1.2))) * pmax[b], 1)
        qmax = round(0.5 * pmax[b], 0)
        gen.append([b + 1, pg, 0, qmax, -0.5 * qmax, vg, 100, 1, pmax[b], 0])

    bus = []
    for b in range(n_bus):
        kind = 3 if b == slack else (2 if b in gen_buses else 1)
        bus.append([b + 1, kind, load_p[b], load_q[b], 0, 0, 1, 1.0, 0, 345, 1, 1.1, 0.9])

    # 345 kV overhead line constants per km, 100 MVA base, charging partly compensated.
    r_km, x_km, b_km = 0.000025, 0.00030, 0.0010
    branch = []
    for i, j in edges:
        d = max(km(i, j), 8.0)
        branch.append([i + 1, j + 1, round(r_km * d, 6), round(x_km * d, 6), round(b_km * d, 5), 1200, 1200, 1200, 0, 0, 1,
                       -360, 360])
    # A few transformer-like branches with off-nominal taps.
    for idx in rng.choice(len(branch), size=4, replace=False):
        branch[int(idx)][8] = float(rng.choice([0.975, 0.985, 1.015, 1.025]))

    ppc = {"version": "2", "baseMVA": 100.0, "bus": pad(bus, 13), "gen": pad(gen, 21), "branch": pad(branch, 13)}

    # Counties on a jittered 10 x 10 grid.
    counties = []
    side = int(round(math.sqrt(n_county)))
    cid = 1
    for r in range(side):
        for c in range(side):
            lat = lat0 + (r + 0.5) * (lat1 - lat0) / side + float(rng.uniform(-0.2, 0.2))
            lon = lon0 + (c + 0.5) * (lon1 - lon0) / side + float(rng.uniform(-0.2, 0.2))
            density = round(float(rng.lognormal(3.0, 1.2)), 2)
            counties.append((cid, f"County {cid:03d}", round(lat, 4), round(lon, 4), density))
            cid += 1
    geo = [(b + 1, round(float(pts[b][0]), 5), round(float(pts[b][1]), 5)) for b in range(n_bus)]
    return ppc, geo, counties


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
    out.mkdir(parents=True, exist_ok=True)

    c5 = case5()
    write_matpower(out / "case5.m", "case5", c5, "Stagg and El-Abiad 5-bus test system")
    freeze(out / "case5_ref.json", c5)

    c14 = case14()
    write_matpower(out / "case14.m", "case14", c14, "IEEE 14-bus test system")
    freeze(out / "case14_ref.json", c14)

    ppc, geo, counties = geographic()
    res, ok = solve(ppc, True)
    if not ok:
        raise SystemExit("geographic fixture base case does not converge")
    write_matpower(out / "texas150.m", "texas150", ppc, "Synthetic 150-bus geographic test system")
    (out / "texas150_geo.csv").write_text("bus_id,lat,lon\n" + "".join(f"{b},{la},{lo}\n" for b, la, lo in geo))
    (out / "texas150_counties.csv").write_text(
        "county_id,name,lat,lon,pop_density\n" + "".join(f'{c},"{n}",{la},{lo},{d}\n' for c, n, la, lo, d in counties))
    freeze(out / "texas150_ref.json", ppc)
    vm = res["bus"][:, 7]
    print(f"texas150: {len(ppc['bus'])} buses, {len(ppc['branch'])} branches, load {ppc['bus'][:, 2].sum():.0f} MW, "
          f"Vm [{vm.min():.3f}, {vm.max():.3f}], max angle {np.abs(res['bus'][:, 8]).max():.1f} deg")


if __name__ == "__main__":
    main()
