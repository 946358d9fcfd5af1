"""Dry run of the directional claims at full scale across seeds."""
import sys
import time

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.trainer import TrainConfig, resolve_mode, train


def run(seed, modes, epochs=30, n_train=160, n_test=48):
    rb = default_rulebook()
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, unseen_verbs, _ = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, n_train, seed=seed,
                            drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, n_test, seed=seed, start_id=2_000_000)
    counts = ev.train_positive_counts(train_scenes, len(phrases))
    probes = probe_set(test_scenes, rb)
    tz = sum(int(p.latent.sum()) for s in train_scenes for p in s.pairs)
    ty = sum(int(p.labels.sum()) for s in train_scenes for p in s.pairs)
    print(f"seed {seed}: unseen_verbs={unseen_verbs} n_unseen={len(unseen_ids)} "
          f"train z={tz} y={ty} probes={len(probes)}")
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
        out[mode] = dict(dpp=dpp, unseen=rep["unseen"], seen=rep["seen"],
                         full=rep["full"], hm=rep["hm"], fpr=fpr)
        print(f"seed {seed} {mode:18s} dpp={dpp:.4f} unseen={rep['unseen']:.4f} "
              f"seen={rep['seen']:.4f} full={rep['full']:.4f} hm={rep['hm']:.4f} "
              f"fpr={fpr:.4f}  ({time.time() - t0:.0f}s)")
    return out


if __name__ == "__main__":
    seeds = [int(a) for a in sys.argv[1:] if not a.startswith("m:")] or [0]
    marg = [a[2:] for a in sys.argv[1:] if a.startswith("m:")]
    modes = marg[0].split(",") if marg else ["full", "closed_world", "no_calibration"]
    for seed in seeds:
        run(seed, modes)
