"""Within-phrase ranking anatomy: who outranks the true positives of one
phrase, and which slot should have vetoed them."""
import sys

import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims, SLOT_NAMES
from hoiscript import evaluate as ev
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             split_unseen, satisfies)
from hoiscript.trainer import TrainConfig, resolve_mode, train

PID = int(sys.argv[1]) if len(sys.argv) > 1 else 27


def main():
    seed = 0
    rb = default_rulebook()
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, unseen_verbs, _ = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, 160, seed=seed,
                            drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, 48, seed=seed, start_id=2_000_000)
    ph = phrases[PID]
    req = rb.required_indices(ph.verb)
    print(f"phrase {PID}: {ph.text}; unseen={PID in unseen_ids}")
    print("required:", {SLOT_NAMES[k]: rb.vocab.values[k][vi]
                        for k, vi in req.items()})

    pair_state = {}          # (scene, h, o) -> true slot values
    for s in test_scenes:
        for p in s.pairs:
            pair_state[(s.scene_id, p.human_idx, p.object_idx)] = p.true_slots

    for mode in ("full", "closed_world"):
        cfg = TrainConfig(epochs=30, mode=mode, anchor_threshold=1.0)
        state = train(phrases, train_scenes, dims, hyper, cfg, seed=seed)
        _, _, slot_mask = resolve_mode(mode, hyper)
        bank = ScriptBank(phrases)
        preds = ev.score_scenes(test_scenes, bank, state.params,
                                slot_mask=slot_mask)
        kept = ev.rank_and_suppress(preds, bank)
        mine = sorted((p for p in kept if p.phrase_id == PID),
                      key=lambda p: -p.score)
        gt = ev.latent_ground_truth(test_scenes, [PID])
        report = ev.evaluate_detections(kept, test_scenes, phrases,
                                        {pid: 20 for pid in
                                         range(len(phrases))}, unseen_ids)
        print(f"\n{mode}: phrase AP={report['per_phrase'].get(PID, 0.0):.3f} "
              f"n_gt={len(gt)} n_pred={len(mine)}")
        for rank, p in enumerate(mine[:12], 1):
            key = (p.scene_id, p.human_idx, p.object_idx)
            ts = pair_state.get(key)
            truth = pair_state[key]
            is_pos = satisfies(rb, ph.verb, truth)
            marks = []
            for k, vi in req.items():
                got = truth[k]
                want = rb.vocab.values[k][vi]
                if got != want:
                    marks.append(f"{SLOT_NAMES[k]}={got}")
            m = p.match
            print(f"  #{rank:2d} y={int(is_pos)} scn={p.scene_id%100:3d} "
                  f"s={m.s_base:+5.2f} G={m.gamma:.3f} D={m.delta:.3f} "
                  f"shat={p.score:+5.2f} wrong[{', '.join(marks) or '-'}]")


main()
