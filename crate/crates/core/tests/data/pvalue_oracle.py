"""High-precision reference p-values for correlation coefficients.

The two-sided p-value of a coefficient r from n points is the Student-t tail
mass beyond t = r * sqrt((n - 2) / (1 - r^2)) with n - 2 degrees of freedom.
Here the tail is integrated numerically from the t density at 50 digits,
independent of any incomplete-beta identity.

    python3 pvalue_oracle.py > pvalues.json
"""

import json

import mpmath as mp

mp.mp.dps = 50

# exactly representable coefficients
COEFFICIENTS = ["-0.9375", "-0.75", "-0.5", "-0.125", "0", "0.0625", "0.25", "0.5", "0.875", "0.984375"]
SIZES = [3, 5, 10, 18, 54]


def t_density(x, nu):
    c = mp.gamma((nu + 1) / 2) / (mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2))
    return c * (1 + x * x / nu) ** (-(nu + 1) / 2)


def two_sided_p(r, n):
    nu = mp.mpf(n - 2)
    if r == 0:
        return mp.mpf(1)
    t = abs(r) * mp.sqrt(nu / (1 - r * r))
    return 2 * mp.quad(lambda x: t_density(x, nu), [t, t + 1, t + 10, mp.inf])


def pearson_r(x, y):
    x = [mp.mpf(v) for v in x]
    y = [mp.mpf(v) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / mp.sqrt(sxx * syy)


def main():
    grid = []
    for r in COEFFICIENTS:
        for n in SIZES:
            grid.append({"r": float(r), "n": n, "p": mp.nstr(two_sided_p(mp.mpf(r), n), 30)})
    x, y = [1, 2, 3, 4, 5], [2, 1, 4, 3, 6]
    r = pearson_r(x, y)
    example = {
        "x": x,
        "y": y,
        "r": mp.nstr(r, 30),
        "p": mp.nstr(two_sided_p(r, len(x)), 30),
    }
    print(json.dumps({"grid": grid, "pearson_example": example}, indent=1))


if __name__ == "__main__":
    main()
