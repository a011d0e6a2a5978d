"""Independent recomputation of curves.csv for the synthetic fixture.

Uses scipy's natural cubic spline and numpy statistics; shares no code with
the C++ library. Writes oracle_curves.csv next to this script.
"""
import csv
import json
import math
import pathlib
from collections import defaultdict

import numpy as np
from scipy.interpolate import CubicSpline

here = pathlib.Path(__file__).resolve().parent
src = here.parent / "data" / "synthetic_traces.jsonl"

chains = [json.loads(line) for line in src.read_text().splitlines() if line.strip()]


def trajectory(c):
    return [float(np.mean([t["entropy_nats"] for t in s["token_records"]]))
            for s in c["step_records"]]


def resample(y, T):
    K = len(y) - 1
    x = np.array([j * K / (T - 1) for j in range(T)])
    if len(y) == 1:
        return [y[0]] * T
    if len(y) < 4:
        return list(np.interp(x, np.arange(len(y)), y))
    return list(CubicSpline(np.arange(len(y)), y, bc_type="natural")(x))


steps = defaultdict(list)
for c in chains:
    steps[(c["domain"], c["source"])].append(len(c["step_records"]) - 1)
axis = {}
for key, ks in steps.items():
    # round half away from zero
    kbar = int(math.floor(sum(ks) / len(ks) + 0.5))
    axis[key] = (max(2, kbar), max(1, kbar))

label = {True: "true", False: "false", None: "unknown"}
groups = defaultdict(list)
for c in chains:
    T, _ = axis[(c["domain"], c["source"])]
    groups[(c["domain"], c["source"], label[c.get("correct")])].append(
        resample(trajectory(c), T))

with open(here / "oracle_curves.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["domain", "source", "correct", "step_index", "x", "mean", "std", "n"])
    for key in sorted(groups):
        T, ax = axis[key[:2]]
        m = np.array(groups[key])
        for j in range(T):
            w.writerow([*key, j, repr(j * ax / (T - 1)), repr(float(m[:, j].mean())),
                        repr(float(m[:, j].std(ddof=0))), len(m)])
