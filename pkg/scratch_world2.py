"""World-noise sweep: does a cleaner world keep reliabilities alive in full mode?"""
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


def run_variant(tag, sigma, cg, sg, seed=0, epochs=30, n_train=160, n_test=48,
                modes=("full", "closed_world", "no_calibration")):
    rb = default_rulebook()
    rb.noise_sigma = sigma
    rb.contact_gain = cg
    rb.state_gain = sg
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, unseen_verbs, _ = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, n_train, seed=seed,
                            drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, n_test, seed=seed, start_id=2_000_000)
    counts = ev.train_positive_counts(train_scenes, len(phrases))
    probes = probe_set(test_scenes, rb)
    table = build_candidates(train_scenes, dims, len(phrases))
    z = table.z.astype(bool)

    print(f"[{tag}] sigma={sigma} cg={cg} sg={sg} seed={seed}")
    out = {}
    for mode in modes:
        t0 = time.time()
        cfg = TrainConfig(epochs=epochs, mode=mode)
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
        # collapse indicators on the train candidate table
        Xc = table.X[table.cand_pair]
        Tc = bank.embedding_matrix[table.cand_phrase]
        fs = forward_batch(Xc, Tc, state.params, slot_mask=slot_mask)
        anchors_last = state.history[-1]["anchors"] if state.history else 0
        out[mode] = dict(dpp=dpp, unseen=rep["unseen"], seen=rep["seen"],
                         full=rep["full"], hm=rep["hm"], fpr=fpr)
        print(f"  {mode:16s} dpp={dpp:.4f} unseen={rep['unseen']:.4f} "
              f"seen={rep['seen']:.4f} full={rep['full']:.4f} fpr={fpr:.4f} | "
              f"rho={fs.rho.mean():.3f} dz1={fs.delta[z].mean():.2f} "
              f"dz0={fs.delta[~z].mean():.2f} gz1={fs.gamma[z].mean():.2f} "
              f"gz0={fs.gamma[~z].mean():.2f} anchors={anchors_last} "
              f"({time.time()-t0:.0f}s)")
    f, c, n = out.get("full"), out.get("closed_world"), out.get("no_calibration")
    if f and c:
        print(f"  6a dpp   full {f['dpp']:.3f} > cw {c['dpp']:.3f}: "
              f"{'PASS' if f['dpp'] > c['dpp'] else 'FAIL'}")
        print(f"  6b unseen full {f['unseen']:.3f} > cw {c['unseen']:.3f}: "
              f"{'PASS' if f['unseen'] > c['unseen'] else 'FAIL'}")
    if f and n:
        print(f"  7a fpr   full {f['fpr']:.3f} < nocal {n['fpr']:.3f}: "
              f"{'PASS' if f['fpr'] < n['fpr'] else 'FAIL'}")
    return out


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "ABC"
    if "A" in which:
        run_variant("A base", 0.05, 0.35, 0.45)
    if "B" in which:
        run_variant("B mid", 0.02, 0.70, 0.80)
    if "C" in which:
        run_variant("C clean", 0.01, 1.00, 1.00)
