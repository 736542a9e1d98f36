#!/usr/bin/env python3
"""Writes the robust-defense reference sweep used by the tests.

Everything is recomputed here with dense numpy linear algebra straight from
the case file: the full payoff table by enumerating every success mask, then
backward induction with the same tie rules as the library (utilities within
1e-9 tie, lowest level sum wins, then lexicographic order).

Output: tests/golden/rd_ieee9_gest0.csv with one row per (gamma_a, gamma_d).
"""
import csv
import itertools
import json
import os

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LEVELS = 3
TIE = 1e-9
SLACK = 1e-9


def load(path):
    with open(path) as f:
        j = json.load(f)
    K, G = j["n_loads"], j["n_gens"]
    B = np.array(j["B"])
    v_star = -np.linalg.solve(B[:K, :K], B[:K, K:] @ np.array(j["V_G"]))
    q_crit = 0.25 * np.diag(v_star) @ B[:K, :K] @ np.diag(v_star)
    return j, K, q_crit


def lattice(K, support):
    rows = []
    for t in itertools.product(range(LEVELS), repeat=len(support)):
        x = np.zeros(K, dtype=int)
        x[list(support)] = t
        rows.append(x)
    return np.array(rows)


def payoff_table(j, K, q_crit):
    ql = np.array(j["Q_L_nominal"])
    qa = np.array(j["q_a_max"])
    qd = np.array(j["q_d_max"])
    dn = np.abs(np.linalg.solve(q_crit, ql)).max()
    A = lattice(K, range(K))
    D = lattice(K, [j["load_bus_ids"].index(b) for b in j["ctrl_buses"]])
    masks = np.array(list(itertools.product([0, 1], repeat=K)), dtype=float)
    loads = ql[None, None, :] + masks[:, None, :] * qa - (D / (LEVELS - 1) * qd)[None, :, :]
    x = np.linalg.solve(q_crit, loads.reshape(-1, K).T).T
    loss = np.clip(np.abs(x).max(axis=1).reshape(len(masks), len(D)), dn, 1.0)
    p = np.ones((len(A), len(masks)))
    frac = A / (LEVELS - 1)
    for k in range(K):
        p *= np.where(masks[None, :, k] == 1, frac[:, k : k + 1], 1 - frac[:, k : k + 1])
    return A, D, p @ loss


def affordable(levels, gamma):
    return gamma * levels.sum(axis=1) / (LEVELS - 1) <= 1 + SLACK


def responses(A, U, gamma):
    u = np.where(affordable(A, gamma)[:, None], U, -np.inf)
    tie = u >= u.max(axis=0)[None, :] - TIE
    cost = np.where(tie, A.sum(axis=1)[:, None], np.iinfo(np.int64).max)
    return np.argmin(cost, axis=0)


def solve(A, D, U, ga, gd, gest):
    planned = responses(A, U, gest)
    value = np.where(affordable(D, gd), -U[planned, np.arange(len(D))], -np.inf)
    cand = np.where(value >= value.max() - TIE)[0]
    d = cand[np.argmin(D[cand].sum(axis=1))]
    a = responses(A, U, ga)[d]
    return a, d, -U[a, d]


def main():
    j, K, q_crit = load(os.path.join(ROOT, "data", "ieee9.json"))
    A, D, U = payoff_table(j, K, q_crit)
    out = os.path.join(ROOT, "tests", "golden", "rd_ieee9_gest0.csv")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["gamma_a", "gamma_d", "u_defender_rd", "u_defender_cbse", "mu_rd",
                    "a_vector", "d_vector"])
        for gd in (0.45, 0.75, 1.5):
            for i in range(21):
                ga = round(0.075 * i, 4)
                a, d, u_rd = solve(A, D, U, ga, gd, 0.0)
                _, _, u_cbse = solve(A, D, U, ga, gd, ga)
                mu = abs((u_rd - u_cbse) / u_cbse) * 100
                w.writerow([repr(ga), repr(gd), repr(float(u_rd)), repr(float(u_cbse)), repr(float(mu)),
                            ";".join(map(str, A[a])), ";".join(map(str, D[d]))])
    print("wrote", out)


if __name__ == "__main__":
    main()
