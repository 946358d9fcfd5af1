"""Built-in self tests behind the check command.

Each check returns a small dict; run_all aggregates them into a report.  The
suite is intentionally sensitive to sign and formula mutations: the forward
scoring path is exercised both through finite differences (which would
disagree with the hand-written backward pass) and through ordering properties
of the calibration itself.
"""

from __future__ import annotations

import numpy as np

from . import matcher
from .bank import ScriptBank
from .domain import Hyper, ModelDims, ModelParams, Phrase
from .evaluate import (RankedPrediction, SuppressionThresholds, average_precision,
                       harmonic_mean, match_predictions, mean_script_js,
                       rank_and_suppress)
from .domain import MatchResult
from .losses import Batch, ContrastSet, check_gradients, interval_bounds


def _tiny_fixture(seed: int):
    rng = np.random.default_rng(seed)
    dims = ModelDims(d_t=5, d_f=3, d_p=2, d_g=7, d_r=3, d_c=2, d_s=4, d_m=3,
                     slot_sizes=(3, 2, 4, 2, 3, 2), categories=("cup", "hat"))
    params = ModelParams.zeros(dims, Hyper()).unflatten(
        rng.normal(scale=0.5, size=ModelParams.zeros(dims, Hyper()).n_params()))

    def unit(v):
        return v / np.linalg.norm(v)

    phrases = [Phrase(i, f"v{i}", "cup" if i % 2 else "hat",
                      unit(rng.normal(size=dims.d_t))) for i in range(4)]
    bank = ScriptBank(phrases)
    bank.refresh(params)
    return rng, dims, params, phrases, bank


def _gradient_batches(rng, dims, phrases, bank):
    N = 6
    X = rng.normal(size=(N, dims.d_x))
    pids = rng.integers(0, 4, size=N)
    T = np.stack([phrases[i].embedding for i in pids])
    cfs = bank.counterfactuals(int(pids[0]), n=3, rng=np.random.default_rng(3))
    embs = [s.embedding if s.virtual else phrases[s.phrase_id].embedding
            for s in cfs]
    mk = lambda y, contrasts: Batch(X=X, T=T, y=np.asarray(y, dtype=np.int8),
                                    phrase_ids=pids, contrasts=contrasts)
    return {
        "positives_only": mk([1] * N, [ContrastSet(0, cfs, embs)]),
        "unannotated_only": mk([0] * N, []),
        "mixed_counterfactual": mk([1, 1, 0, 0, 0, 1],
                                   [ContrastSet(0, cfs, embs),
                                    ContrastSet(2, [bank.script(1)],
                                                [phrases[1].embedding])]),
    }


def check_gradient_suite(tol: float = 1e-4, seed: int = 0):
    rng, dims, params, phrases, bank = _tiny_fixture(seed)
    out = []
    for name, batch in _gradient_batches(rng, dims, phrases, bank).items():
        rep = check_gradients(params, batch, tol=tol)
        out.append({
            "name": f"gradient_{name}",
            "passed": rep["passed"],
            "detail": f"max rel err {rep['max_rel_err']:.3e} at {rep['worst_field']}",
        })
    return out


def check_calibration_ordering(n_draws: int = 4000, seed: int = 1):
    rng = np.random.default_rng(seed)
    hyper = Hyper()
    s = rng.normal(size=n_draws)
    gamma = rng.uniform(0.0, 1.0, size=(n_draws, 2))
    gamma.sort(axis=1)
    delta = rng.uniform(0.0, 1.0, size=(n_draws, 2))
    delta.sort(axis=1)
    d0 = rng.uniform(0.0, 1.0, size=n_draws)
    g0 = rng.uniform(0.0, 1.0, size=n_draws)
    up_g = matcher.calibrate_array(s, gamma[:, 1], d0, hyper)
    dn_g = matcher.calibrate_array(s, gamma[:, 0], d0, hyper)
    up_d = matcher.calibrate_array(s, g0, delta[:, 1], hyper)
    dn_d = matcher.calibrate_array(s, g0, delta[:, 0], hyper)
    strict = (gamma[:, 1] > gamma[:, 0])
    bad = int(np.sum((up_g < dn_g) | (strict & (up_g <= dn_g))))
    strict_d = (delta[:, 1] > delta[:, 0])
    bad += int(np.sum((up_d > dn_d) | (strict_d & (up_d >= dn_d))))
    return {"name": "calibration_ordering", "passed": bad == 0,
            "detail": f"{bad} ordering violations in {2 * n_draws} comparisons"}


def check_coverage_monotone(n_draws: int = 4000, seed: int = 2):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_draws):
        m = rng.normal(scale=2.0, size=6)
        rho = rng.uniform(0.05, 1.0, size=6)
        k = rng.integers(0, 6)
        m2 = m.copy()
        m2[k] += rng.uniform(0.1, 2.0)
        if matcher.coverage(m2, rho) <= matcher.coverage(m, rho):
            bad += 1
    return {"name": "coverage_monotone", "passed": bad == 0,
            "detail": f"{bad} violations in {n_draws} draws"}


def check_conflict_antimonotone(n_draws: int = 4000, seed: int = 3):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_draws):
        m = rng.normal(scale=2.0, size=6)
        rho = rng.uniform(0.05, 1.0, size=6)
        w = rng.uniform(0.0, 2.0, size=6)
        b = rng.normal()
        k = rng.integers(0, 6)
        m2 = m.copy()
        m2[k] += rng.uniform(0.1, 2.0)
        if matcher.conflict(m2, rho, w, b) > matcher.conflict(m, rho, w, b):
            bad += 1
    return {"name": "conflict_antimonotone", "passed": bad == 0,
            "detail": f"{bad} violations in {n_draws} draws"}


def check_interval_sanity(seed: int = 4):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, 101)
    bad_order = 0
    for _ in range(100):
        hyper = Hyper(alpha_lower=rng.uniform(0.0, 1.0),
                      alpha_upper=rng.uniform(0.0, 1.0))
        for g in grid:
            for d in grid:
                iv = interval_bounds(g, d, hyper)
                if iv.lower > iv.upper:
                    bad_order += 1
    # the penalty must vanish exactly inside the interval and only there
    bad_zero = 0
    hyper = Hyper()
    for _ in range(2000):
        iv = interval_bounds(rng.uniform(0, 1), rng.uniform(0, 1), hyper)
        p = rng.uniform(0, 1)
        pen = max(0.0, iv.lower - p) ** 2 + max(0.0, p - iv.upper) ** 2
        inside = iv.lower <= p <= iv.upper
        if inside != (pen == 0.0):
            bad_zero += 1
    ok = bad_order == 0 and bad_zero == 0
    return {"name": "interval_sanity", "passed": ok,
            "detail": f"{bad_order} order violations, {bad_zero} penalty mismatches"}


def _brute_force_ap(scores, tp_flags, n_gt):
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    pr = []
    tp = fp = 0
    for i in order:
        tp += tp_flags[i]
        fp += 1 - tp_flags[i]
        pr.append((tp / n_gt, tp / (tp + fp)))
    ap = 0.0
    prev_r = 0.0
    for j, (r, _) in enumerate(pr):
        if j and r == pr[j - 1][0]:
            continue
        best = max(p for rr, p in pr if rr >= r)
        ap += (r - prev_r) * best
        prev_r = r
    return ap


def check_ap_oracle(seed: int = 5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 30))
        n_gt = int(rng.integers(1, 10))
        scores = rng.normal(size=n)
        # ranked order then flags, never more tps than ground truths
        flags = np.zeros(n)
        hits = rng.permutation(n)[:min(n_gt, n)]
        flags[hits[:int(rng.integers(0, len(hits) + 1))]] = 1.0
        order = np.argsort(-scores)
        got = average_precision(flags[order], n_gt)
        want = _brute_force_ap(list(scores), list(flags.astype(int)), n_gt)
        worst = max(worst, abs(got - want))
    return {"name": "ap_oracle", "passed": worst < 1e-12,
            "detail": f"max |ap - brute force| = {worst:.2e}"}


def _random_predictions(rng, bank, n):
    preds = []
    for i in range(n):
        pid = int(rng.integers(0, len(bank)))
        preds.append(RankedPrediction(
            scene_id=int(rng.integers(0, 3)), human_idx=int(rng.integers(0, 2)),
            object_idx=int(rng.integers(0, 2)),
            human_box=(0.0, 0.0, 10.0, 10.0), object_box=(5.0, 5.0, 15.0, 15.0),
            phrase_id=pid, score=float(rng.normal()),
            match=MatchResult(compat=rng.normal(size=6), gamma=0.5, delta=0.5,
                              s_base=0.0, s_hat=0.0),
        ))
    return preds


def check_suppression_oracle(seed: int = 6):
    rng, dims, params, phrases, bank = _tiny_fixture(seed)
    th = SuppressionThresholds(embedding=0.0, script_js=0.6, alignment=-0.5)
    preds = _random_predictions(rng, bank, 30)
    ranked = rank_and_suppress([RankedPrediction(**{**p.__dict__}) for p in preds], bank, th)

    # quadratic reference over the sorted order
    ref = sorted(preds, key=lambda p: (-p.score, p.phrase_id, p.scene_id,
                                       p.human_idx, p.object_idx))
    kept = []
    flags = []
    for p in ref:
        suppressor = None
        for j in kept:
            q = ref[j]
            if q.pair_key != p.pair_key:
                continue
            ca = float(bank.phrases[q.phrase_id].embedding
                       @ bank.phrases[p.phrase_id].embedding)
            js = mean_script_js(bank.script(q.phrase_id), bank.script(p.phrase_id))
            u, v = q.match.compat, p.match.compat
            cc = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
            if ca > th.embedding and js < th.script_js and cc > th.alignment:
                suppressor = j
                break
        if suppressor is None:
            kept.append(len(flags))
        flags.append(suppressor)

    agree = all(
        got.suppressed == (want is not None) and (got.suppressor == want)
        for got, want in zip(ranked, flags)
    )
    n_sup = sum(p.suppressed for p in ranked)
    invariant = all(
        (not p.suppressed) or
        (ranked[p.suppressor].score > p.score
         or (ranked[p.suppressor].score == p.score
             and ranked[p.suppressor].phrase_id < p.phrase_id))
        for p in ranked
    )
    return {"name": "suppression_oracle", "passed": agree and invariant and n_sup > 0,
            "detail": f"{n_sup} suppressed of {len(ranked)}, reference agreement {agree}"}


def check_harmonic_identities():
    checks = [
        abs(harmonic_mean(32.6, 22.5) - 26.6) < 0.05,
        abs(harmonic_mean(30.7, 19.8) - 24.1) < 0.05,
        harmonic_mean(0.0, 0.0) == 0.0,
        abs(harmonic_mean(0.4, 0.4) - 0.4) < 1e-12,
        harmonic_mean(0.2, 0.6) <= 0.4 + 1e-12,
    ]
    return {"name": "harmonic_identities", "passed": all(checks),
            "detail": f"{sum(checks)}/{len(checks)} identities hold"}


def run_all(tol: float = 1e-4, seed: int = 0) -> dict:
    checks = []
    checks.extend(check_gradient_suite(tol=tol, seed=seed))
    checks.append(check_calibration_ordering())
    checks.append(check_coverage_monotone())
    checks.append(check_conflict_antimonotone())
    checks.append(check_interval_sanity())
    checks.append(check_ap_oracle())
    checks.append(check_suppression_oracle())
    checks.append(check_harmonic_identities())
    return {"ok": all(c["passed"] for c in checks), "tol": tol, "checks": checks}
