"""Independent reference computations shared by unit and acceptance tests.

None of these import the code under test beyond plain data containers, so a
bug in the package cannot make its own oracle agree with it.
"""

from itertools import product

import numpy as np
import shapely

from reefscale.split import SampleLabels

YEARS = ("2019", "2020", "2021")


def brute_force_auc(labels, scores):
    """Fraction of (positive, negative) pairs ranked correctly, ties worth 1/2."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    pos = scores[labels][:, None]
    neg = scores[~labels][None, :]
    return float(((pos > neg) + 0.5 * (pos == neg)).mean())


def label_deviation(first, samples, ratio):
    """Largest |count in first - ratio * total| over labels."""
    totals, got = {}, {}
    for s in samples:
        for lab in s.label_set:
            totals[lab] = totals.get(lab, 0) + 1
    for s in first:
        for lab in s.label_set:
            got[lab] = got.get(lab, 0) + 1
    return max((abs(got.get(lab, 0) - ratio * n) for lab, n in totals.items()), default=0.0)


def optimal_label_deviation(samples, ratio):
    """Minimum over all 2**n two-way splits of :func:`label_deviation`."""
    best = np.inf
    for mask in product((0, 1), repeat=len(samples)):
        first = [s for s, m in zip(samples, mask) if m]
        best = min(best, label_deviation(first, samples, ratio))
    return best


def random_small_samples(rng, n, n_labels=4):
    return [
        SampleLabels(f"s{i}", "g", frozenset(f"L{k}" for k in range(n_labels) if rng.random() < 0.4))
        for i in range(n)
    ]


def multilabel_dataset(seed=0, n=2000, n_classes=12, groups=YEARS):
    """Correlated multilabel samples spread over temporal groups.

    Class prevalence ranges from about 5% to 60%, and a shared latent
    habitat variable makes co-occurrence realistic rather than independent.
    """
    rng = np.random.default_rng(seed)
    prevalence = np.linspace(0.05, 0.6, n_classes)
    habitat = rng.integers(0, 3, n)
    boost = rng.uniform(0.5, 1.5, (3, n_classes))
    probs = np.clip(prevalence[None, :] * boost[habitat], 0.0, 0.95)
    present = rng.random((n, n_classes)) < probs
    names = [f"class_{k:02d}" for k in range(n_classes)]
    return [
        SampleLabels(f"tile{i:05d}", groups[i % len(groups)], frozenset(np.asarray(names)[present[i]]))
        for i in range(n)
    ]


def random_convex_quad(rng, center_spread=1.0, size=(0.3, 1.5)):
    """Four points on a jittered ellipse, so always convex and counter-clockwise."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, 4))
    while np.max(np.diff(np.r_[angles, angles[0] + 2 * np.pi])) > np.pi * 0.95:
        angles = np.sort(rng.uniform(0, 2 * np.pi, 4))
    a, b = rng.uniform(*size, 2)
    rot = rng.uniform(0, np.pi)
    pts = np.c_[a * np.cos(angles), b * np.sin(angles)]
    c, s = np.cos(rot), np.sin(rot)
    pts = pts @ np.array([[c, s], [-s, c]])
    return pts + rng.uniform(-center_spread, center_spread, 2)


def mc_intersection_area(quad, bounds, n_points, rng):
    """Stratified Monte-Carlo area of quad ∩ rectangle.

    One uniform point per cell of a sqrt(n) x sqrt(n) lattice spanning the
    common bounding box, classified with shapely's point-in-polygon test.
    """
    min_e, min_n, max_e, max_n = bounds
    qmin, qmax = quad.min(axis=0), quad.max(axis=0)
    x0, y0 = max(min_e, qmin[0]), max(min_n, qmin[1])
    x1, y1 = min(max_e, qmax[0]), min(max_n, qmax[1])
    if x1 <= x0 or y1 <= y0:
        return 0.0
    k = int(np.sqrt(n_points))
    gx, gy = np.meshgrid(np.arange(k), np.arange(k))
    u = (gx.ravel() + rng.random(k * k)) / k
    v = (gy.ravel() + rng.random(k * k)) / k
    x = x0 + u * (x1 - x0)
    y = y0 + v * (y1 - y0)
    inside = shapely.contains_xy(shapely.Polygon(quad), x, y)
    inside &= (x >= min_e) & (x <= max_e) & (y >= min_n) & (y <= max_n)
    return float(inside.mean() * (x1 - x0) * (y1 - y0))
