"""Straight-line reimplementation of the band-widen-and-rank selection.

Kept deliberately independent of flowsentry.drift: its own quantile, its own
KDE evaluation, plain-Python ranking. Used to cross-check the selector.
"""

import math


def oracle_quantile(values, q):
    s = sorted(values)
    pos = (len(s) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    frac = pos - lo
    return s[lo] + frac * (s[hi] - s[lo])


def oracle_silverman(values):
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / n)
    if n > 1:
        iqr = oracle_quantile(values, 0.75) - oracle_quantile(values, 0.25)
        spread = min(std, iqr / 1.34) if iqr > 0 else std
    else:
        spread = std
    h = 0.9 * spread * n ** (-0.2)
    return h if h > 0 else 1e-9


def oracle_kde_at(points, h, x):
    norm = 1.0 / math.sqrt(2.0 * math.pi)
    total = sum(norm * math.exp(-0.5 * ((x - p) / h) ** 2) for p in points)
    return total / (len(points) * h)


def oracle_select(train_losses, test_losses, n_critical,
                  q_high=0.80, width=0.1, max_trials=3, bandwidth=None):
    """Returns (selected_indices, flagged_indices, thresholds) or None if empty."""
    train_losses = list(map(float, train_losses))
    test_losses = list(map(float, test_losses))
    flagged = []
    thr_low = thr_high = 0.0
    for _ in range(max_trials):
        q_low = 1.0 - q_high
        thr_high = oracle_quantile(train_losses, q_high)
        thr_low = oracle_quantile(train_losses, q_low)
        flagged = [i for i, v in enumerate(test_losses)
                   if v > thr_high or v < thr_low]
        if len(flagged) >= n_critical:
            break
        q_high = q_high - width
    if not flagged:
        return None
    losses = [test_losses[i] for i in flagged]
    h = bandwidth if bandwidth is not None else oracle_silverman(losses)
    scores = [oracle_kde_at(losses, h, v) for v in losses]
    ranked = sorted(range(len(flagged)),
                    key=lambda k: (-scores[k], -losses[k], flagged[k]))
    selected = [flagged[k] for k in ranked[:n_critical]]
    return selected, flagged, (thr_low, thr_high)
