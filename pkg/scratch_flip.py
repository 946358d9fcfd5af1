"""6b levers: full-vs-closed_world unseen mAP under world variations, seed 0,
anchor gate 1.0. Prints per-unseen-phrase APs split held-verb vs new-combo."""
import dataclasses
import sys
import time

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.trainer import TrainConfig, resolve_mode, train


def run_variant(tag, seed=0, n_train=160, embed_noise=None, sigma=None,
                modes=("full", "closed_world")):
    rb = default_rulebook()
    if embed_noise is not None:
        rb = dataclasses.replace(rb, embed_noise=embed_noise)
    if sigma is not None:
        rb = dataclasses.replace(rb, noise_sigma=sigma)
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, unseen_verbs, extra = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, n_train, seed=seed,
                            drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, 48, seed=seed, start_id=2_000_000)
    counts = ev.train_positive_counts(train_scenes, len(phrases))
    probes = probe_set(test_scenes, rb)
    by_pid = {p.phrase_id: p for p in phrases}

    res = {}
    for mode in modes:
        t0 = time.time()
        cfg = TrainConfig(epochs=30, mode=mode, anchor_threshold=1.0)
        state = train(phrases, train_scenes, dims, hyper, cfg, seed=seed)
        _, _, slot_mask = resolve_mode(mode, hyper)
        bank = ScriptBank(phrases)
        preds = ev.score_scenes(test_scenes, bank, state.params,
                                slot_mask=slot_mask)
        preds = ev.rank_and_suppress(preds, bank)
        rep = ev.evaluate_detections(preds, test_scenes, phrases, counts,
                                     unseen_ids)
        fpr = ev.affordance_conflict_fpr(preds, probes)
        dpp = ev.dropped_positive_probability(test_scenes, bank, state.params,
                                              unseen_ids, slot_mask=slot_mask)
        res[mode] = (rep, fpr, dpp)
        print(f"{tag:14s} {mode:13s} dpp={dpp:.4f} unseen={rep['unseen']:.4f} "
              f"seen={rep['seen']:.4f} fpr={fpr:.4f} [{time.time()-t0:.0f}s]",
              flush=True)

    if "full" in res and "closed_world" in res:
        fu, cw = res["full"][0], res["closed_world"][0]
        print(f"{tag:14s} unseen phrase APs (full vs cw):")
        for pid in sorted(unseen_ids):
            ph = by_pid[pid]
            kind = "verb-held" if ph.verb in unseen_verbs else "new-combo"
            a = fu["per_phrase"].get(pid)
            b = cw["per_phrase"].get(pid)
            fa = "--" if a is None else f"{a:.3f}"
            fb = "--" if b is None else f"{b:.3f}"
            print(f"   {pid:3d} {ph.verb:10s} {ph.object_category:11s} "
                  f"{kind:9s} {fa} vs {fb}")
        d6a = res['full'][2] > res['closed_world'][2]
        d6b = fu['unseen'] > cw['unseen']
        print(f"{tag:14s} 6a {'PASS' if d6a else 'FAIL'}  "
              f"6b {'PASS' if d6b else 'FAIL'}", flush=True)
    return res


def main():
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    grid = {
        "base": dict(),
        "en=0.10": dict(embed_noise=0.10),
        "en=0.05": dict(embed_noise=0.05),
        "en=0.45": dict(embed_noise=0.45),
        "n=240": dict(n_train=240),
        "sig=0.10": dict(sigma=0.10),
    }
    if which != "all":
        grid = {k: v for k, v in grid.items() if k in which.split(",")}
    for tag, kw in grid.items():
        run_variant(tag, **kw)
        print()


if __name__ == "__main__":
    main()
