"""Ranking, script-aware suppression, detection metrics, and probe FPR.

Predictions are ranked by calibrated score with deterministic tie-breaking,
near-duplicate paraphrases on the same pair are suppressed when embedding,
script, and slot-alignment similarity all agree, and average precision runs
the standard greedy box-matching protocol against latent truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .bank import ScriptBank
from .domain import MatchResult, ModelParams, Phrase, Script, read_jsonl, write_jsonl
from .matcher import forward_batch
from .trainer import build_candidates


@dataclass(frozen=True)
class SuppressionThresholds:
    embedding: float = 0.95      # cosine between phrase embeddings
    script_js: float = 0.05      # mean per-slot Jensen-Shannon divergence
    alignment: float = 0.90      # cosine between slot compatibility vectors


@dataclass(eq=False)
class RankedPrediction:
    scene_id: int
    human_idx: int
    object_idx: int
    human_box: tuple
    object_box: tuple
    phrase_id: int
    score: float
    match: MatchResult
    suppressed: bool = False
    suppressor: int | None = None   # rank of the keeper that removed this

    @property
    def pair_key(self):
        return (self.scene_id, self.human_idx, self.object_idx)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "human_idx": self.human_idx,
            "object_idx": self.object_idx,
            "human_box": [float(v) for v in self.human_box],
            "object_box": [float(v) for v in self.object_box],
            "phrase_id": self.phrase_id,
            "score": float(self.score),
            "gamma": float(self.match.gamma),
            "delta": float(self.match.delta),
            "s_base": float(self.match.s_base),
            "compat": [float(v) for v in self.match.compat],
            "suppressed": self.suppressed,
            "suppressor": self.suppressor,
        }


def prediction_from_dict(d: dict) -> RankedPrediction:
    match = MatchResult(
        compat=np.asarray(d["compat"], dtype=np.float64),
        gamma=float(d["gamma"]),
        delta=float(d["delta"]),
        s_base=float(d["s_base"]),
        s_hat=float(d["score"]),
    )
    return RankedPrediction(
        scene_id=int(d["scene_id"]),
        human_idx=int(d["human_idx"]),
        object_idx=int(d["object_idx"]),
        human_box=tuple(float(v) for v in d["human_box"]),
        object_box=tuple(float(v) for v in d["object_box"]),
        phrase_id=int(d["phrase_id"]),
        score=float(d["score"]),
        match=match,
        suppressed=bool(d["suppressed"]),
        suppressor=None if d["suppressor"] is None else int(d["suppressor"]),
    )


PREDICTIONS_SCHEMA = "hoiscript/predictions"


def write_predictions(path, preds, meta=None):
    write_jsonl(path, PREDICTIONS_SCHEMA, (p.to_dict() for p in preds), meta)


def read_predictions(path):
    header, rows = read_jsonl(path, expect_schema=PREDICTIONS_SCHEMA)
    return header, [prediction_from_dict(r) for r in rows]


def _rank_key(pred: RankedPrediction):
    # spec'd order is (-score, phrase id); the trailing pair identity makes
    # the ranking a total order so outputs never depend on input order
    return (-pred.score, pred.phrase_id, pred.scene_id, pred.human_idx,
            pred.object_idx)


def score_scenes(scenes, bank: ScriptBank, params: ModelParams,
                 slot_mask=None) -> list[RankedPrediction]:
    """One prediction per (pair, phrase) candidate, in ranked order."""
    bank.refresh(params)
    table = build_candidates(scenes, params.dims, len(bank))
    if table.n_candidates == 0:
        return []
    X = table.X[table.cand_pair]
    T = bank.embedding_matrix[table.cand_phrase]
    state = forward_batch(X, T, params, slot_mask=slot_mask)

    by_id = {s.scene_id: s for s in scenes}
    preds = []
    for i in range(table.n_candidates):
        row = int(table.cand_pair[i])
        sid = int(table.pair_scene[row])
        h = int(table.pair_human[row])
        o = int(table.pair_object[row])
        scene = by_id[sid]
        match = MatchResult(
            compat=state.m[i].copy(),
            gamma=float(state.gamma[i]),
            delta=float(state.delta[i]),
            s_base=float(state.s[i]),
            s_hat=float(state.s_hat[i]),
        )
        preds.append(RankedPrediction(
            scene_id=sid, human_idx=h, object_idx=o,
            human_box=tuple(scene.human_boxes[h]),
            object_box=tuple(scene.object_boxes[o]),
            phrase_id=int(table.cand_phrase[i]),
            score=float(state.s_hat[i]),
            match=match,
        ))
    preds.sort(key=_rank_key)
    return preds


# ---------------------------------------------------------------------------
# suppression

def mean_script_js(a: Script, b: Script) -> float:
    """Mean per-slot Jensen-Shannon divergence (natural log, so <= ln 2)."""
    acc = 0.0
    for pa, pb in zip(a.distributions, b.distributions):
        m = 0.5 * (pa + pb)
        kl_a = float(np.sum(pa * (np.log(pa + 1e-300) - np.log(m + 1e-300))))
        kl_b = float(np.sum(pb * (np.log(pb + 1e-300) - np.log(m + 1e-300))))
        acc += 0.5 * kl_a + 0.5 * kl_b
    return acc / len(a.distributions)


def _cos(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu < 1e-12 or nv < 1e-12:
        return 0.0
    return float(u @ v) / (nu * nv)


def rank_and_suppress(preds, bank: ScriptBank,
                      thresholds: SuppressionThresholds | None = None):
    """Greedy descending pass; each candidate is removed by the first kept
    prediction on the same pair that matches it in embedding, script, and
    slot alignment simultaneously.  Returns a new ranked list."""
    th = thresholds or SuppressionThresholds()
    ranked = sorted(preds, key=_rank_key)

    emb = bank.embedding_matrix
    emb_cos = emb @ emb.T        # phrase embeddings are unit-norm
    n = len(bank)
    js = np.full((n, n), np.inf)
    for a in range(n):
        js[a, a] = 0.0
        for b in range(a + 1, n):
            if emb_cos[a, b] > th.embedding:
                # js only ever gates pairs that pass the embedding test
                js[a, b] = js[b, a] = mean_script_js(bank.script(a), bank.script(b))

    kept_by_pair: dict = {}
    for rank, pred in enumerate(ranked):
        pred.suppressed = False
        pred.suppressor = None
        for j in kept_by_pair.get(pred.pair_key, ()):
            keeper = ranked[j]
            a, b = keeper.phrase_id, pred.phrase_id
            if (emb_cos[a, b] > th.embedding
                    and js[a, b] < th.script_js
                    and _cos(keeper.match.compat, pred.match.compat) > th.alignment):
                pred.suppressed = True
                pred.suppressor = j
                break
        if not pred.suppressed:
            kept_by_pair.setdefault(pred.pair_key, []).append(rank)
    return ranked


# ---------------------------------------------------------------------------
# detection metrics

def box_iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter <= 0:
        return 0.0
    area = ((a[2] - a[0]) * (a[3] - a[1])
            + (b[2] - b[0]) * (b[3] - b[1]) - inter)
    return inter / area


def average_precision(tp_flags, n_gt: int) -> float:
    """All-point interpolated AP for a ranked true/false sequence."""
    if n_gt == 0:
        raise ValueError("AP undefined without ground truth")
    tp = np.asarray(tp_flags, dtype=np.float64)
    if tp.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # precision envelope from the right, then sum increments of recall
    env = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p, flag in zip(recall, env, tp):
        if flag:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def latent_ground_truth(scenes, phrase_id: int):
    """(scene id, human box, object box) for every latent positive."""
    out = []
    for scene in scenes:
        for pair in scene.pairs:
            if pair.latent[phrase_id]:
                out.append((scene.scene_id,
                            tuple(scene.human_boxes[pair.human_idx]),
                            tuple(scene.object_boxes[pair.object_idx])))
    return out


def match_predictions(ranked_preds, gt, iou_thresh: float = 0.5):
    """Greedy matching of one phrase's ranked predictions against its ground
    truth; each truth is consumed at most once."""
    consumed = [False] * len(gt)
    flags = []
    for pred in ranked_preds:
        hit = -1
        for j, (sid, hbox, obox) in enumerate(gt):
            if consumed[j] or sid != pred.scene_id:
                continue
            if (box_iou(pred.human_box, hbox) >= iou_thresh
                    and box_iou(pred.object_box, obox) >= iou_thresh):
                hit = j
                break
        if hit >= 0:
            consumed[hit] = True
            flags.append(1.0)
        else:
            flags.append(0.0)
    return flags


def harmonic_mean(a: float, b: float) -> float:
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def train_positive_counts(train_scenes, n_phrases: int) -> np.ndarray:
    counts = np.zeros(n_phrases, dtype=np.int64)
    for scene in train_scenes:
        for pair in scene.pairs:
            counts += pair.labels.astype(np.int64)
    return counts


def _mean(values) -> float | None:
    values = list(values)
    return float(np.mean(values)) if values else None


def evaluate_detections(preds, scenes, phrases: list[Phrase],
                        train_counts, unseen_ids, iou_thresh: float = 0.5,
                        rare_cutoff: int = 10) -> dict:
    """Per-phrase AP plus the Full/Rare/Non-Rare/Seen/Unseen/HM splits and
    the Known-Object variant.  Phrases without ground truth are excluded."""
    kept = [p for p in preds if not p.suppressed]
    unseen = set(int(u) for u in unseen_ids)
    scene_cats = {s.scene_id: set(s.object_categories) for s in scenes}

    ap = {}
    ap_ko = {}
    n_gt = {}
    for phrase in phrases:
        pid = phrase.phrase_id
        gt = latent_ground_truth(scenes, pid)
        if not gt:
            continue
        n_gt[pid] = len(gt)
        mine = [p for p in kept if p.phrase_id == pid]
        ap[pid] = average_precision(match_predictions(mine, gt, iou_thresh), len(gt))
        ko = [p for p in mine
              if phrase.object_category in scene_cats[p.scene_id]]
        ap_ko[pid] = average_precision(match_predictions(ko, gt, iou_thresh), len(gt))

    def split(table):
        seen_v = _mean(v for pid, v in table.items() if pid not in unseen)
        unseen_v = _mean(v for pid, v in table.items() if pid in unseen)
        return {
            "full": _mean(table.values()),
            "rare": _mean(v for pid, v in table.items()
                          if train_counts[pid] < rare_cutoff),
            "non_rare": _mean(v for pid, v in table.items()
                              if train_counts[pid] >= rare_cutoff),
            "seen": seen_v,
            "unseen": unseen_v,
            "hm": (harmonic_mean(seen_v, unseen_v)
                   if seen_v is not None and unseen_v is not None else None),
        }

    report = split(ap)
    report["known_object"] = split(ap_ko)
    report["per_phrase"] = {int(k): float(v) for k, v in sorted(ap.items())}
    report["n_ground_truth"] = {int(k): int(v) for k, v in sorted(n_gt.items())}
    return report


# ---------------------------------------------------------------------------
# probe FPR and annotation-miss recovery

def top_k_kept(preds, k: int):
    """Per-scene top-k unsuppressed predictions, by ranked order."""
    out = []
    taken: dict = {}
    for pred in preds:          # already ranked
        if pred.suppressed:
            continue
        got = taken.get(pred.scene_id, 0)
        if got < k:
            taken[pred.scene_id] = got + 1
            out.append(pred)
    return out


def affordance_conflict_fpr(preds, probes, top_k: int = 5) -> float | None:
    """Fraction of probes that appear among the kept per-scene top-k.

    probes are (scene_id, human_idx, object_idx, phrase_id) tuples; an empty
    probe set has no defined rate, reported as None.
    """
    if not probes:
        return None
    probe_set = set(probes)
    hits = set()
    for pred in top_k_kept(preds, top_k):
        key = (pred.scene_id, pred.human_idx, pred.object_idx, pred.phrase_id)
        if key in probe_set:
            hits.add(key)
    return len(hits) / len(probe_set)


def dropped_positive_probability(scenes, bank: ScriptBank, params: ModelParams,
                                 unseen_ids, slot_mask=None) -> float | None:
    """Mean predicted probability on latent positives whose annotation was
    dropped by the miss process (unseen-phrase drops excluded)."""
    bank.refresh(params)
    table = build_candidates(scenes, params.dims, len(bank))
    if table.n_candidates == 0:
        return None
    unseen = np.zeros(len(bank), dtype=bool)
    for u in unseen_ids:
        unseen[int(u)] = True
    sel = (table.z == 1) & (table.y == 0) & ~unseen[table.cand_phrase]
    if not np.any(sel):
        return None
    X = table.X[table.cand_pair[sel]]
    T = bank.embedding_matrix[table.cand_phrase[sel]]
    state = forward_batch(X, T, params, slot_mask=slot_mask)
    return float(np.mean(expit(state.s_hat)))
