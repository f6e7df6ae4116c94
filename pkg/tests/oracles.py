"""Independent brute-force oracles for the alignment metrics.

Written with plain loops and math.log2 on purpose: these must stay
separate from the library implementations they check, so a shared bug
cannot hide. Used to compute and freeze expected values.
"""

from __future__ import annotations

import math


def oracle_chi_square(observed: dict[str, float], expected: dict[str, float]) -> float:
    total_o = sum(observed.values())
    total_e = sum(expected.values())
    value = 0.0
    for category in observed:
        e = expected[category] / total_e * total_o
        o = observed[category]
        if e == 0:
            if o == 0:
                continue
            raise ZeroDivisionError(f"expected mass 0 with observed {o}")
        value += (o - e) ** 2 / e
    return value


def oracle_entropy(mass: dict[str, float]) -> float:
    total = 0.0
    for p in mass.values():
        if p > 0:
            total -= p * math.log2(p)
    return total


def oracle_mutual_information(matrix: list[list[float]]) -> float:
    rows = len(matrix)
    cols = len(matrix[0])
    px = [sum(matrix[i][j] for j in range(cols)) for i in range(rows)]
    py = [sum(matrix[i][j] for i in range(rows)) for j in range(cols)]
    total = 0.0
    for i in range(rows):
        for j in range(cols):
            p = matrix[i][j]
            if p > 0:
                total += p * math.log2(p / (px[i] * py[j]))
    return total


def oracle_nmi(matrix: list[list[float]]) -> float:
    rows = len(matrix)
    cols = len(matrix[0])
    px = [sum(matrix[i][j] for j in range(cols)) for i in range(rows)]
    py = [sum(matrix[i][j] for i in range(rows)) for j in range(cols)]
    hx = -sum(p * math.log2(p) for p in px if p > 0)
    hy = -sum(p * math.log2(p) for p in py if p > 0)
    return 2.0 * oracle_mutual_information(matrix) / (hx + hy)


def oracle_jaccard_weighted(
    observed: dict[str, float], expected: dict[str, float]
) -> float:
    total_o = sum(observed.values())
    total_e = sum(expected.values())
    numerator = 0.0
    denominator = 0.0
    for category in observed:
        o = observed[category] / total_o
        e = expected[category] / total_e
        numerator += min(o, e)
        denominator += max(o, e)
    return numerator / denominator


def oracle_l1(mass_a: dict[str, float], mass_b: dict[str, float]) -> float:
    categories = set(mass_a) | set(mass_b)
    return sum(abs(mass_a.get(c, 0.0) - mass_b.get(c, 0.0)) for c in categories)
