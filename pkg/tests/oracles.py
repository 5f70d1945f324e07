"""Brute-force reference computations used as test oracles.

None of these call into the code paths they check; they work on plain
tuples, lists and numpy arrays.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def nearest_spot_occupancy(det_centers, spot_centers, inside, delta):
    """Occupancy by exhaustive distance matrix.

    ``det_centers``/``spot_centers`` are ``(n, 2)`` arrays, ``inside`` a
    boolean raster ``(rows, cols)``.
    """
    n_spots = len(spot_centers)
    occ = np.zeros(n_spots, dtype=bool)
    if len(det_centers) == 0:
        return occ
    d = np.asarray(det_centers, dtype=float)
    s = np.asarray(spot_centers, dtype=float)
    dx = d[:, None, 0] - s[None, :, 0]
    dy = d[:, None, 1] - s[None, :, 1]
    dist = np.sqrt(dx * dx + dy * dy)
    rows, cols = inside.shape
    for i in range(len(d)):
        j = int(np.argmin(dist[i]))  # first minimum = lowest spot id
        if dist[i, j] >= delta:
            continue
        px = min(int(d[i, 0] * cols), cols - 1)
        py = min(int(d[i, 1] * rows), rows - 1)
        if inside[py, px]:
            occ[j] = True
    return occ


def box_iou(a, b):
    """IoU of ``(x_c, y_c, w, h)`` tuples via corner arithmetic."""
    ax1, ax2 = a[0] - a[2] / 2, a[0] + a[2] / 2
    ay1, ay2 = a[1] - a[3] / 2, a[1] + a[3] / 2
    bx1, bx2 = b[0] - b[2] / 2, b[0] + b[2] / 2
    by1, by2 = b[1] - b[3] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return 0.0 if union <= 0 else inter / union


def nms_survivors(boxes, confs, threshold):
    """Survivor indices of greedy NMS, from its fixed-point definition.

    A box survives iff no higher-ranked survivor overlaps it by more than the
    threshold. The O(n^2) pairwise IoU matrix is built up front.
    """
    n = len(boxes)
    rank = sorted(range(n), key=lambda i: (-confs[i], i))
    overlap = [[box_iou(boxes[i], boxes[j]) > threshold for j in range(n)] for i in range(n)]
    survivors = []
    for pos, i in enumerate(rank):
        if not any(overlap[i][j] for j in survivors):
            survivors.append(i)
    return set(survivors)


def confusion_counts(pred, truth):
    tp = tn = fp = fn = 0
    for prow, trow in zip(pred, truth):
        for p, t in zip(prow, trow):
            if p and t:
                tp += 1
            elif not p and not t:
                tn += 1
            elif p:
                fp += 1
            else:
                fn += 1
    return tp, tn, fp, fn


def balanced_accuracy_and_mae(pred, truth):
    tp, tn, fp, fn = confusion_counts(pred, truth)
    rates = []
    if tp + fn:
        rates.append(tp / (tp + fn))
    if tn + fp:
        rates.append(tn / (tn + fp))
    bacc = sum(rates) / len(rates)
    errs = [abs(sum(map(bool, p)) - sum(map(bool, t))) for p, t in zip(pred, truth)]
    return bacc, sum(errs) / len(errs)


def mean_std_bounds(samples):
    n = len(samples)
    mu = math.fsum(samples) / n
    var = math.fsum((x - mu) ** 2 for x in samples) / n
    sigma = math.sqrt(var)
    lower = max(0.0, mu - 3 * sigma)
    upper = mu + 3 * sigma
    outliers = sum(1 for x in samples if x < lower or x > upper)
    return mu, sigma, lower, upper, outliers


def bits_from_int(value, n):
    return [c == "1" for c in format(value, f"0{n}b")]


def group_popcounts(value, n, groups):
    bits = bits_from_int(value, n)
    return {g: sum(bits[s - 1] for s in members) for g, members in groups.items()}


def all_subsets(n):
    return itertools.product((False, True), repeat=n)


def expected_totem_off(ticks, n_spots, outages, totem_outages, value_faults, tolerance, max_age):
    """Ticks at which the totem must be dark, from the display rules alone.

    With an unbounded queue the newest persisted measurement at tick ``t`` is
    the last tick at which the edge link was up. The server answers only when
    that is within ``tolerance``; the totem keeps its last good answer for
    ``max_age`` ticks and rejects values outside ``0..n_spots``.
    """
    def inside(t, windows):
        return any(a <= t < b for a, b in windows)

    last_up = None
    last_ok_tick = None
    last_ok_value = None
    off = []
    for t in range(ticks):
        if not inside(t, outages):
            last_up = t
        served = last_up is not None and t - last_up <= tolerance and not inside(t, totem_outages)
        if served:
            value = 0  # any in-range count; only faults can push it out of range
            for a, b, v in value_faults:
                if a <= t < b:
                    value = v
            last_ok_tick, last_ok_value = t, value
        dark = (
            last_ok_tick is None
            or t - last_ok_tick > max_age
            or last_ok_value < 0
            or last_ok_value > n_spots
        )
        if dark:
            off.append(t)
    return off


def stale_episodes(ticks, outages, tolerance):
    """Outage windows long enough for the data to go stale."""
    return sum(1 for a, b in outages if b - a > tolerance and a < ticks)
