"""Straight-line reference implementations used to cross-check the package.

Everything here is deliberately scalar and loop-based: plain math on floats,
no numpy broadcasting, no shared helpers from the package under test beyond
dataclass containers.  Slow and obvious on purpose.
"""

import math


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def softmax_list(xs):
    m = max(xs)
    es = [math.exp(x - m) for x in xs]
    s = sum(es)
    return [e / s for e in es]


def coverage_oracle(compat, rho, eps=1e-8) -> float:
    """Reliability-weighted geometric mean of sigmoid(compat)."""
    num = 0.0
    den = eps
    for m, r in zip(compat, rho):
        num += r * math.log(sigmoid(m) + eps)
        den += r
    return math.exp(num / den)


def conflict_oracle(compat, rho, w, b) -> float:
    acc = b
    for m, r, wk in zip(compat, rho, w):
        acc += wk * r * (1.0 - sigmoid(m))
    return sigmoid(acc)


def calibrate_oracle(s, gamma, delta, lambda_gamma, lambda_delta, eps) -> float:
    return s + lambda_gamma * math.log(gamma + eps) - lambda_delta * delta


def interval_oracle(gamma, delta, alpha_lower, alpha_upper):
    g = min(max(gamma, 0.0), 1.0)
    lower = alpha_lower * g * (1.0 - delta)
    upper = 1.0 - alpha_upper * delta * (1.0 - g)
    return lower, upper


def hoi_loss_oracle(s_hat_positives) -> float:
    """Mean -log sigmoid over the positives."""
    if not s_hat_positives:
        return 0.0
    total = 0.0
    for s in s_hat_positives:
        total += -math.log(sigmoid(s))
    return total / len(s_hat_positives)


def bce_negative_oracle(s_hat_negatives) -> float:
    if not s_hat_negatives:
        return 0.0
    total = 0.0
    for s in s_hat_negatives:
        total += -math.log(1.0 - sigmoid(s))
    return total / len(s_hat_negatives)


def ipl_loss_oracle(rows, alpha_lower, alpha_upper) -> float:
    """rows: (s_hat, gamma, delta) triples for unannotated candidates."""
    if not rows:
        return 0.0
    total = 0.0
    for s_hat, gamma, delta in rows:
        lower, upper = interval_oracle(gamma, delta, alpha_lower, alpha_upper)
        p = sigmoid(s_hat)
        total += max(0.0, lower - p) ** 2 + max(0.0, p - upper) ** 2
    return total / len(rows)


def csc_loss_oracle(sets, tau) -> float:
    """sets: list of (anchor s_hat, [contrast s_hat...]); empty contrast
    lists contribute zero but still divide."""
    if not sets:
        return 0.0
    total = 0.0
    for anchor, others in sets:
        if not others:
            continue
        zs = [anchor / tau] + [o / tau for o in others]
        m = max(zs)
        lse = m + math.log(sum(math.exp(z - m) for z in zs))
        total += lse - zs[0]
    return total / len(sets)


def align_loss_oracle(rows, eps) -> float:
    """rows: (gamma, delta) for annotated positives."""
    if not rows:
        return 0.0
    total = 0.0
    for gamma, delta in rows:
        total += -math.log(gamma + eps) - math.log(1.0 - delta + eps)
    return total / len(rows)


def ap_oracle(flags, n_gt: int) -> float:
    """All-point interpolated AP, computed the long way: for every achieved
    recall increment, the best precision at that recall or beyond."""
    n = len(flags)
    cum_tp = 0
    points = []  # (recall, precision) after each prediction
    for i, f in enumerate(flags):
        cum_tp += 1 if f else 0
        points.append((cum_tp / n_gt, cum_tp / (i + 1)))
    ap = 0.0
    prev_recall = 0.0
    for i, f in enumerate(flags):
        if not f:
            continue
        r = points[i][0]
        best = max(p for (rr, p) in points if rr >= r)
        ap += (r - prev_recall) * best
        prev_recall = r
    return ap


def iou_oracle(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    ar_a = (a[2] - a[0]) * (a[3] - a[1])
    ar_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (ar_a + ar_b - inter)
