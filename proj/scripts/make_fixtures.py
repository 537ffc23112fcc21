#!/usr/bin/env python3
# Copyright 2026 The HMK Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Regenerates the vendored CSV fixtures under data/.

banana.csv: two interleaved crescents with Gaussian noise (1000 points, the
first 500 form the training subset). solar_irradiance.csv: a yearly series
with an eleven-year cycle whose amplitude drifts, including a long quiet
period, on top of a slow trend. solar_split.json lists the held-out year
intervals and the resulting counts.
"""

import csv
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data"


def banana(rng, n):
    rows = []
    for i in range(n):
        label = 1 if i % 2 == 0 else -1
        t = rng.uniform(0.0, math.pi)
        if label == 1:
            x1, x2 = math.cos(t), math.sin(t) - 0.25
        else:
            x1, x2 = 1.0 - math.cos(t), 0.25 - math.sin(t)
        x1 += rng.gauss(0.0, 0.25)
        x2 += rng.gauss(0.0, 0.25)
        rows.append((1.6 * x1 - 0.8, 1.6 * x2, label))
    rng.shuffle(rows)
    return rows


def solar(rng):
    rows = []
    phase = 0.0
    for year in range(1610, 2012):
        quiet = 1.0 - 0.85 * math.exp(-(((year - 1680.0) / 30.0) ** 2))
        amp = 0.55 * quiet * (1.0 + 0.25 * math.sin(2.0 * math.pi * (year - 1610) / 90.0))
        period = 11.0 + 0.8 * math.sin(2.0 * math.pi * (year - 1610) / 200.0)
        phase += 2.0 * math.pi / period
        trend = 1360.4 + 0.3 * (year - 1610) / 400.0 + 0.25 * quiet
        value = trend + amp * math.sin(phase) + rng.gauss(0.0, 0.06)
        rows.append((float(year), round(value, 5)))
    return rows


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20181204)

    with open(ROOT / "banana.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "label"])
        for x1, x2, label in banana(rng, 1000):
            w.writerow([f"{x1:.6f}", f"{x2:.6f}", label])

    rows = solar(rng)
    with open(ROOT / "solar_irradiance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "irradiance"])
        for year, value in rows:
            w.writerow([f"{year:.0f}", f"{value:.5f}"])

    intervals = [[1620, 1635], [1705, 1720], [1780, 1795], [1855, 1870], [1930, 1945]]
    test = sum(1 for year, _ in rows if any(lo <= year <= hi for lo, hi in intervals))
    split = {"test_intervals": intervals, "train_count": len(rows) - test, "test_count": test}
    with open(ROOT / "solar_split.json", "w") as fh:
        json.dump(split, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
