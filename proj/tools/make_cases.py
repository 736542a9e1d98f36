#!/usr/bin/env python3
"""Regenerates the bundled grid cases in data/.

Network data is the MATPOWER case9 / case39 branch list. Transformer taps and
phase shifts are neglected (only the series reactance and line charging enter
the susceptance matrix). Loads are reordered so that load buses come first,
followed by generator buses.

The operating points are stressed on purpose so that covert attacks can move
the instability index across the whole clip window:

* ieee9: nominal reactive demands and per-load attack caps were picked by a
  calibration search so that the game shows a no-attack region for cheap
  defense, a collapse region for cheap attacks, and a robust defense that is
  exact for most cost pairs. Compensation capacity is 2 pu per controlled bus.
* ieee39: MATPOWER reactive demands scaled by 2.4, 1.5 pu attack cap per
  load, 2 pu compensation per controlled bus.
"""
import json
import os

import numpy as np


def build_b(n_bus, branches):
    b = np.zeros((n_bus, n_bus))
    for f, t, r, x, charging in branches:
        f -= 1
        t -= 1
        y = 1.0 / complex(r, x)
        b[f, t] -= y.imag
        b[t, f] -= y.imag
        b[f, f] += y.imag + charging / 2
        b[t, t] += y.imag + charging / 2
    return b


def relabel(branches, order):
    pos = {bus: i + 1 for i, bus in enumerate(order)}
    return [(pos[f], pos[t], r, x, c) for f, t, r, x, c in branches]


CASE9 = [(1, 4, 0, 0.0576, 0), (4, 5, 0.017, 0.092, 0.158),
         (5, 6, 0.039, 0.17, 0.358), (3, 6, 0, 0.0586, 0),
         (6, 7, 0.0119, 0.1008, 0.209), (7, 8, 0.0085, 0.072, 0.149),
         (8, 2, 0, 0.0625, 0), (8, 9, 0.032, 0.161, 0.306),
         (9, 4, 0.01, 0.085, 0.176)]

CASE39 = [(1, 2, 0.0035, 0.0411, 0.6987), (1, 39, 0.001, 0.025, 0.75),
          (2, 3, 0.0013, 0.0151, 0.2572), (2, 25, 0.007, 0.0086, 0.146),
          (2, 30, 0, 0.0181, 0), (3, 4, 0.0013, 0.0213, 0.2214),
          (3, 18, 0.0011, 0.0133, 0.2138), (4, 5, 0.0008, 0.0128, 0.1342),
          (4, 14, 0.0008, 0.0129, 0.1382), (5, 6, 0.0002, 0.0026, 0.0434),
          (5, 8, 0.0008, 0.0112, 0.1476), (6, 7, 0.0006, 0.0092, 0.113),
          (6, 11, 0.0007, 0.0082, 0.1389), (6, 31, 0, 0.025, 0),
          (7, 8, 0.0004, 0.0046, 0.078), (8, 9, 0.0023, 0.0363, 0.3804),
          (9, 39, 0.001, 0.025, 1.2), (10, 11, 0.0004, 0.0043, 0.0729),
          (10, 13, 0.0004, 0.0043, 0.0729), (10, 32, 0, 0.02, 0),
          (12, 11, 0.0016, 0.0435, 0), (12, 13, 0.0016, 0.0435, 0),
          (13, 14, 0.0009, 0.0101, 0.1723), (14, 15, 0.0018, 0.0217, 0.366),
          (15, 16, 0.0009, 0.0094, 0.171), (16, 17, 0.0007, 0.0089, 0.1342),
          (16, 19, 0.0016, 0.0195, 0.304), (16, 21, 0.0008, 0.0135, 0.2548),
          (16, 24, 0.0003, 0.0059, 0.068), (17, 18, 0.0007, 0.0082, 0.1319),
          (17, 27, 0.0013, 0.0173, 0.3216), (19, 20, 0.0007, 0.0138, 0),
          (19, 33, 0.0007, 0.0142, 0), (20, 34, 0.0009, 0.018, 0),
          (21, 22, 0.0008, 0.014, 0.2565), (22, 23, 0.0006, 0.0096, 0.1846),
          (22, 35, 0, 0.0143, 0), (23, 24, 0.0022, 0.035, 0.361),
          (23, 36, 0.0005, 0.0272, 0), (25, 26, 0.0032, 0.0323, 0.531),
          (25, 37, 0.0006, 0.0232, 0), (26, 27, 0.0014, 0.0147, 0.2396),
          (26, 28, 0.0043, 0.0474, 0.7802), (26, 29, 0.0057, 0.0625, 1.029),
          (28, 29, 0.0014, 0.0151, 0.249), (29, 38, 0.0008, 0.0156, 0)]

CASE39_QD = {3: 2.4, 4: 184, 7: 84, 8: 176.6, 12: 88, 15: 153, 16: 32.3,
             18: 30, 20: 103, 21: 115, 23: 84.6, 24: -92.2, 25: 47.2, 26: 17,
             27: 75.5, 28: 27.6, 29: 26.9}


def case_json(name, provenance, n_bus, gens, loads, branches, v_g, q_nom,
              q_a_max, q_d_max, ctrl):
    order = loads + gens
    internal = relabel(branches, order)
    b = build_b(n_bus, internal)
    return {
        "name": name,
        "provenance": provenance,
        "base_MVA": 100.0,
        "n_loads": len(loads),
        "n_gens": len(gens),
        "load_bus_ids": loads,
        "gen_bus_ids": gens,
        "B": b.tolist(),
        "branches": [list(br) for br in internal],
        "V_G": v_g,
        "Q_L_nominal": q_nom,
        "q_a_max": q_a_max,
        "q_d_max": q_d_max,
        "ctrl_buses": ctrl,
    }


def main():
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
    loads9 = [4, 5, 6, 7, 8, 9]
    ctrl9 = [4, 5, 6, 8]
    case9 = case_json(
        "ieee9", "MATPOWER case9 network, Vg = 1.0 pu, stressed calibrated "
        "reactive loading (see tools/make_cases.py)", 9, [1, 2, 3], loads9,
        CASE9, [1.0, 1.0, 1.0], [1.551, 0.548, 1.658, 0.989, 1.242, 0.14],
        [0.5, 2.0, 1.0, 0.75, 0.25, 0.5],
        [2.0 if b in ctrl9 else 0.0 for b in loads9], ctrl9)

    loads39 = list(range(1, 30))
    gens39 = list(range(30, 40))
    ctrl39 = [5, 6, 7, 8, 10, 11, 13]
    case39 = case_json(
        "ieee39", "MATPOWER case39 network without transformer taps, "
        "generator setpoints from MATPOWER, reactive demand scaled by 2.4",
        39, gens39, loads39, CASE39,
        [1.0499, 0.982, 0.9841, 0.9972, 1.0123, 1.0494, 1.0636, 1.0275,
         1.0265, 1.03],
        [round(2.4 * CASE39_QD.get(b, 0.0) / 100.0, 6) for b in loads39],
        [1.5] * 29, [2.0 if b in ctrl39 else 0.0 for b in loads39], ctrl39)

    for case in (case9, case39):
        with open(os.path.join(out, case["name"] + ".json"), "w") as f:
            json.dump(case, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
