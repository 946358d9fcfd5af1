"""Anchor-gate sensitivity: is csc-on-junk-anchors the whole failure?

Runs full mode with different anchor_threshold values on the default world,
printing collapse indicators plus the directional metrics against the
closed_world / no_calibration runs trained at the shipped defaults.
"""
import sys
import time

import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.matcher import forward_batch
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.trainer import (TrainConfig, build_candidates, resolve_mode,
                               train)


def main(gates, seed=0, epochs=30, n_train=160, n_test=48):
    rb = default_rulebook()
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, _, _ = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, n_train, seed=seed,
                            drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, n_test, seed=seed, start_id=2_000_000)
    counts = ev.train_positive_counts(train_scenes, len(phrases))
    probes = probe_set(test_scenes, rb)
    table = build_candidates(train_scenes, dims, len(phrases))
    z = table.z.astype(bool)

    results = {}
    for label, mode, gate in [("cw", "closed_world", 0.5),
                              ("nocal", "no_calibration", 0.5)] + [
                              (f"full@{g}", "full", g) for g in gates]:
        t0 = time.time()
        cfg = TrainConfig(epochs=epochs, mode=mode, anchor_threshold=gate)
        state = train(phrases, train_scenes, dims, hyper, cfg, seed=seed)
        _, _, slot_mask = resolve_mode(mode, hyper)
        bank = ScriptBank(phrases)
        preds = ev.score_scenes(test_scenes, bank, state.params,
                                slot_mask=slot_mask)
        preds = ev.rank_and_suppress(preds, bank)
        rep = ev.evaluate_detections(preds, test_scenes, phrases, counts,
                                     unseen_ids)
        fpr = ev.affordance_conflict_fpr(preds, probes)
        dpp = ev.dropped_positive_probability(train_scenes, bank, state.params,
                                              unseen_ids, slot_mask=slot_mask)
        Xc = table.X[table.cand_pair]
        Tc = bank.embedding_matrix[table.cand_phrase]
        fs = forward_batch(Xc, Tc, state.params, slot_mask=slot_mask)
        results[label] = dict(dpp=dpp, unseen=rep["unseen"], seen=rep["seen"],
                              fpr=fpr)
        print(f"{label:10s} dpp={dpp:.4f} unseen={rep['unseen']:.4f} "
              f"seen={rep['seen']:.4f} full={rep['full']:.4f} fpr={fpr:.4f} | "
              f"rho={fs.rho.mean():.3f} gz1={fs.gamma[z].mean():.2f} "
              f"gz0={fs.gamma[~z].mean():.2f} dz1={fs.delta[z].mean():.2f} "
              f"dz0={fs.delta[~z].mean():.2f} "
              f"anchors={state.history[-1]['anchors']} ({time.time()-t0:.0f}s)")

    cw, nc = results["cw"], results["nocal"]
    for label, r in results.items():
        if not label.startswith("full"):
            continue
        print(f"{label}: 6a {'PASS' if r['dpp'] > cw['dpp'] else 'FAIL'} "
              f"6b {'PASS' if r['unseen'] > cw['unseen'] else 'FAIL'} "
              f"({r['unseen']:.3f} vs {cw['unseen']:.3f}) "
              f"7a {'PASS' if r['fpr'] < nc['fpr'] else 'FAIL'} "
              f"({r['fpr']:.3f} vs {nc['fpr']:.3f})")


if __name__ == "__main__":
    gates = [float(g) for g in sys.argv[1:]] or [2.0, 0.9]
    main(gates)
