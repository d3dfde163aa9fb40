"""High-precision Pearson r and two-sided p-value for random datasets.

    python3 tools/oracle/pearson_oracle.py fixtures/pearson_oracle.json

r is computed from the exact binary values at 60 significant digits; the
p-value is the regularized incomplete beta I_{1-r^2}((n-2)/2, 1/2).
"""
import json
import sys

import mpmath as mp
import numpy as np

mp.mp.dps = 60


def pearson(x, y):
    n = len(x)
    xs = [mp.mpf(v) for v in x]
    ys = [mp.mpf(v) for v in y]
    mx = mp.fsum(xs) / n
    my = mp.fsum(ys) / n
    sxy = mp.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = mp.fsum((a - mx) ** 2 for a in xs)
    syy = mp.fsum((b - my) ** 2 for b in ys)
    r = sxy / mp.sqrt(sxx * syy)
    nu = n - 2
    if nu == 0:
        p = mp.mpf(1)
    else:
        p = mp.betainc(mp.mpf(nu) / 2, mp.mpf(1) / 2, 0, 1 - r * r, regularized=True)
    return r, p


def main(path):
    rng = np.random.default_rng(20240917)
    cases = []
    for i in range(100):
        n = int(rng.integers(3, 51))
        x = rng.normal(0, 1, n)
        slope = float(rng.choice([0.0, 0.3, 1.0, 3.0, -2.0]))
        y = slope * x + rng.normal(0, 1, n)
        r, p = pearson(x.tolist(), y.tolist())
        cases.append({"x": [repr(float(v)) for v in x], "y": [repr(float(v)) for v in y],
                      "r": mp.nstr(r, 30), "p": mp.nstr(p, 30)})
    with open(path, "w") as f:
        json.dump({"cases": cases}, f, indent=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/pearson_oracle.json")
