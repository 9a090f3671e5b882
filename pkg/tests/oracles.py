"""Independent reference implementations used as test oracles.

Everything here is deliberately written in plain Python (or delegated to a
third-party library), independent of the package's own code paths.
"""
from __future__ import annotations

import math


def merge_oracle(detections, alpha, box_scores, classes, beta=0.0):
    """Straight transcription of the confidence-weighted merge rule.

    detections: list of (category, confidence) in image order.
    box_scores: one score list per high-confidence animal box, same order.
    Returns (label, merged_scores, counts, confidence, abstained).
    """
    high = [c for (cat, c) in detections if cat == "animal" and c >= alpha]
    assert len(high) == len(box_scores)
    g = len(classes)
    empty_i = classes.index("empty")
    non_empty = [c for c in classes if c != "empty"]
    if not high:
        scores = [0.0] * g
        scores[empty_i] = 1.0
        return ("empty", scores, {c: 0 for c in non_empty}, 1.0, False)
    total = sum(high)
    weights = list(high) if total > 0 else [1.0] * len(high)
    total = sum(weights)
    merged = [
        sum(w * s[k] for w, s in zip(weights, box_scores)) / total for k in range(g)
    ]
    best = 0
    for k in range(1, g):
        if merged[k] > merged[best]:
            best = k
    counts = {c: 0 for c in non_empty}
    for s in box_scores:
        arg = 0
        for k in range(1, g):
            if s[k] > s[arg]:
                arg = k
        if classes[arg] != "empty":
            counts[classes[arg]] += 1
    confidence = merged[best]
    return (classes[best], merged, counts, confidence, confidence <= beta)


def entropy_oracle(scores):
    return -sum(p * math.log(p) for p in scores if p > 0)


def finite_difference_gradients(loss_fn, arrays, step=1e-4):
    """Central finite differences of ``loss_fn()`` w.r.t. each array in
    ``arrays`` (perturbed in place)."""
    grads = []
    for arr in arrays:
        grad = arr * 0.0
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(grad)
    return grads


class NearestCentroid:
    """Minimal nearest-centroid classifier (fit on vectors, predict names)."""

    def fit(self, X, labels):
        import numpy as np

        self.classes = sorted(set(labels))
        self.centroids = {
            c: np.mean([x for x, l in zip(X, labels) if l == c], axis=0)
            for c in self.classes
        }
        return self

    def predict(self, X):
        import numpy as np

        out = []
        for x in X:
            best, best_d = None, None
            for c in self.classes:
                d = float(np.sum((x - self.centroids[c]) ** 2))
                if best_d is None or d < best_d:
                    best, best_d = c, d
            out.append(best)
        return out
