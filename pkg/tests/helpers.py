"""Shared test utilities."""

import numpy as np

from sigspec.sigsim import SIGNAL_LENGTH, SignalClass, SimParams


def make_params(signal_class=SignalClass.narrowband, **over):
    """Hand-built SimParams with benign defaults, overridable per test."""
    base = dict(
        signal_class=signal_class, a0=13.0 * 0.4, omega0=-0.3, omega1=0.0,
        omega1dot=0.0, b=0.0, t=float(SIGNAL_LENGTH), d=1.0, phi_w=0.0,
        phi=1.0, seed=7, sigma=13.0,
    )
    base.update(over)
    return SimParams(**base)


def rank_auc(signal_scores, noise_scores) -> float:
    """ROC AUC via the rank-sum statistic (independent of any library)."""
    signal_scores = np.asarray(signal_scores, dtype=np.float64)
    noise_scores = np.asarray(noise_scores, dtype=np.float64)
    both = np.concatenate([signal_scores, noise_scores])
    order = both.argsort(kind="mergesort")
    ranks = np.empty(len(both))
    ranks[order] = np.arange(1, len(both) + 1)
    # midranks for ties
    sorted_vals = both[order]
    i = 0
    while i < len(both):
        j = i
        while j + 1 < len(both) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    n_s, n_n = len(signal_scores), len(noise_scores)
    u = ranks[:n_s].sum() - n_s * (n_s + 1) / 2
    return float(u / (n_s * n_n))


def spearman(x, y) -> float:
    """Spearman rank correlation (plain ranks, mergesort for stability)."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = v.argsort(kind="mergesort")
        r = np.empty(len(v))
        r[order] = np.arange(len(v), dtype=np.float64)
        # midranks for ties
        sv = v[order]
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and sv[j + 1] == sv[i]:
                j += 1
            if j > i:
                r[order[i:j + 1]] = (i + j) / 2
            i = j + 1
        return r

    rx, ry = ranks(x), ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])
