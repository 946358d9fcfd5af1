"""Score-path decomposition: which part of the calibrated logit carries the
unseen-phrase ranking, and what sinks probes."""
import sys

import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.matcher import forward_batch
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.trainer import TrainConfig, build_candidates, resolve_mode, train


def rescore(preds_template, scores):
    out = []
    for p, sc in zip(preds_template, scores):
        q = ev.RankedPrediction(
            scene_id=p.scene_id, human_idx=p.human_idx, object_idx=p.object_idx,
            human_box=p.human_box, object_box=p.object_box,
            phrase_id=p.phrase_id, score=float(sc), match=p.match,
            suppressed=False, suppressor=None)
        out.append(q)
    return out


def main(n_train, gate):
    seed = 0
    rb = default_rulebook()
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, _, _ = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, n_train, seed=seed,
                            drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, 48, seed=seed, start_id=2_000_000)
    counts = ev.train_positive_counts(train_scenes, len(phrases))
    probes = probe_set(test_scenes, rb)

    for mode, thr in (("full", gate), ("closed_world", 0.5)):
        cfg = TrainConfig(epochs=30, mode=mode, anchor_threshold=thr)
        state = train(phrases, train_scenes, dims, hyper, cfg, seed=seed)
        _, _, slot_mask = resolve_mode(mode, hyper)
        bank = ScriptBank(phrases)
        preds = ev.score_scenes(test_scenes, bank, state.params,
                                slot_mask=slot_mask)
        # match already stores the forward parts, in prediction order
        h = state.params.hyper
        gamma = np.array([p.match.gamma for p in preds])
        delta = np.array([p.match.delta for p in preds])
        s_base = np.array([p.match.s_base for p in preds])
        calib = (h.lambda_gamma * np.log(gamma + h.eps)
                 - h.lambda_delta * delta)
        variants = {"s_hat": np.array([p.score for p in preds]),
                    "s_only": s_base, "calib_only": calib}
        for name, scores in variants.items():
            ps = rescore(preds, scores)
            ps = ev.rank_and_suppress(ps, bank)
            rep = ev.evaluate_detections(ps, test_scenes, phrases, counts,
                                         unseen_ids)
            fpr = ev.affordance_conflict_fpr(ps, probes)
            print(f"{mode:13s} {name:10s} unseen={rep['unseen']:.4f} "
                  f"seen={rep['seen']:.4f} fpr={fpr:.4f}")


if __name__ == "__main__":
    n_train = int(sys.argv[1]) if len(sys.argv) > 1 else 160
    gate = float(sys.argv[2]) if len(sys.argv) > 2 else 2.0
    main(n_train, gate)
