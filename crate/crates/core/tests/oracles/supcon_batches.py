"""Arbitrary-precision SupCon oracle. Writes tests/fixtures/supcon_batches.json.

Loss = sum over anchors i with positives P(i) of
  -1/|P(i)| * sum_{p in P(i)} log(exp(s_ip/t) / sum_{a != i} exp(s_ia/t)),
with s the cosine of the raw vectors.
"""
import json
import random
from pathlib import Path

import mpmath as mp

mp.mp.dps = 60
TAU = mp.mpf("0.07")


def loss(z, labels):
    zs = [[mp.mpf(x) for x in row] for row in z]
    norms = [mp.sqrt(mp.fsum(x * x for x in row)) for row in zs]
    unit = [[x / n for x in row] for row, n in zip(zs, norms)]
    n = len(unit)
    sim = [[mp.fsum(a * b for a, b in zip(unit[i], unit[j])) for j in range(n)] for i in range(n)]
    total = mp.mpf(0)
    for i in range(n):
        pos = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not pos:
            continue
        denom = mp.fsum(mp.exp(sim[i][a] / TAU) for a in range(n) if a != i)
        total += -mp.fsum(mp.log(mp.exp(sim[i][p] / TAU) / denom) for p in pos) / len(pos)
    return total


rng = random.Random(20240611)
batches = []
while len(batches) < 25:
    n = rng.randint(2, 8)
    dim = 100
    labels = [rng.randint(0, 2) for _ in range(n)]
    if all(labels.count(l) < 2 for l in labels):
        continue
    z = [[round(rng.gauss(0, 1), 6) for _ in range(dim)] for _ in range(n)]
    if len(batches) % 5 == 4:
        z[1] = [round(x * 3.0 + 0.01 * rng.gauss(0, 1), 6) for x in z[0]]
    batches.append({"labels": labels, "z": z, "loss": mp.nstr(loss(z, labels), 25)})

three = loss([[1, 0], [1, 0], [0, 1]], [0, 0, 1])
out = {"tau": 0.07, "three_vector_loss": mp.nstr(three, 25), "batches": batches}
Path(__file__).resolve().parent.parent.joinpath("fixtures", "supcon_batches.json").write_text(json.dumps(out))
print("three", mp.nstr(three, 25))
