import numpy as np


def local_minima(y):
    """Interior indices i with y[i-1] > y[i] <= y[i+1]."""
    y = np.asarray(y)
    if y.size < 3:
        return np.array([], dtype=int)
    mid = y[1:-1]
    return np.nonzero((mid < y[:-2]) & (mid <= y[2:]))[0] + 1


def local_maxima(y):
    """Interior indices i with y[i-1] < y[i] >= y[i+1]."""
    return local_minima(-np.asarray(y))


def parabolic_vertex(y, i):
    """Sub-sample offset and value of the parabola through y[i-1], y[i], y[i+1]."""
    a, b, c = y[i - 1], y[i], y[i + 1]
    denom = a - 2 * b + c
    if denom == 0:
        return 0.0, b
    p = 0.5 * (a - c) / denom
    p = min(max(p, -0.5), 0.5)
    return p, b - 0.25 * (a - c) * p


def quadratic_at(y, i, p):
    """Value at fractional offset p from sample i using samples i-1..i+1."""
    a, b, c = y[i - 1], y[i], y[i + 1]
    return b + 0.5 * p * (c - a) + 0.5 * p * p * (a - 2 * b + c)
