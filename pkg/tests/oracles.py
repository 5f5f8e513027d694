"""Slow, independent reference implementations used to check the metrics module."""

import math
from fractions import Fraction

import numpy as np


def confusion_brute(y_true, y_pred, pos):
    tp = fp = tn = fn = 0
    for t, p in zip(y_true, y_pred):
        if t == pos and p == pos:
            tp += 1
        elif t != pos and p == pos:
            fp += 1
        elif t != pos and p != pos:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def classification_brute(y_true, y_pred, pos):
    tp, fp, _, fn = confusion_brute(y_true, y_pred, pos)
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return recall, precision, f1


def _dist(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def dcr_brute(synth, real):
    return np.array([min(_dist(s, r) for r in real) for s in synth])


def nndr_brute(synth, real):
    out = []
    for s in synth:
        d = sorted(_dist(s, r) for r in real)
        out.append(1.0 if d[1] == 0 else min(d[0] / d[1], 1.0))
    return np.array(out)


def w1_quantile(a, b):
    """1-D W1 as the integral of |F^-1(u) - G^-1(u)| over exact breakpoints."""
    a, b = sorted(a), sorted(b)
    n, m = len(a), len(b)
    cuts = sorted({Fraction(i, n) for i in range(n + 1)} | {Fraction(j, m) for j in range(m + 1)})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = (lo + hi) / 2
        qa = a[math.floor(mid * n)]
        qb = b[math.floor(mid * m)]
        total += float(hi - lo) * abs(qa - qb)
    return total


def wd_brute(real, synth):
    real, synth = np.atleast_2d(real), np.atleast_2d(synth)
    return float(np.mean([w1_quantile(real[:, j].tolist(), synth[:, j].tolist())
                          for j in range(real.shape[1])]))
