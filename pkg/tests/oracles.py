"""Independent reference implementations used only by tests.

These recompute expected values through a different code path than the
package, so agreement is meaningful: the brute-force matcher filters and
sorts explicit candidate lists, the deviation oracle uses compensated
two-pass summation, and the keep-count oracle works in pure rational
arithmetic.
"""

from __future__ import annotations

import math
from fractions import Fraction


def overlap_fraction(a, b) -> float:
    """IoU by the clamp formula, no early returns."""
    iw = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    ih = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = iw * ih
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def brute_force_match(objects, predictions) -> list[tuple[int, int | None]]:
    """(object_id, winning prediction index or None) per object.

    Literal reading of the rule: keep strictly-overlapping candidates,
    restrict to same-category ones when any exist, take the best IoU, break
    ties with the lowest index.
    """
    results = []
    for obj in objects:
        candidates = [
            (idx, overlap_fraction(obj.bbox, p.bbox), p)
            for idx, p in enumerate(predictions)
        ]
        candidates = [c for c in candidates if c[1] > 0.0]
        same = [c for c in candidates if c[2].category == obj.category]
        pool = same if same else candidates
        if not pool:
            results.append((obj.object_id, None))
            continue
        best_value = max(c[1] for c in pool)
        winner = min(idx for idx, value, _ in pool if value == best_value)
        results.append((obj.object_id, winner))
    return results


def two_pass_std(values) -> float:
    """Population standard deviation via compensated two-pass summation."""
    n = len(values)
    mean = math.fsum(values) / n
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)


def rational_keep_count(total: int, ratio_numerator: int, ratio_denominator: int) -> int:
    """ceil((1 - p) * total) with p given exactly as a fraction."""
    p = Fraction(ratio_numerator, ratio_denominator)
    return math.ceil((1 - p) * total)
