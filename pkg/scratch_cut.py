"""Why does full mode sink one new-combo phrase that closed_world nails?
Per-candidate anatomy on its latent test positives, plus script argmaxes."""
import sys

import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims, SLOT_NAMES
from hoiscript import evaluate as ev
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             split_unseen)
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
    print(f"phrase {PID}: {ph.text}; held verbs {unseen_verbs}; "
          f"unseen={PID in unseen_ids}")
    req = rb.required_indices(ph.verb)
    print("required:", {SLOT_NAMES[k]: rb.vocab.values[k][vi]
                        for k, vi in req.items()})

    # the same verb's seen phrases, for script comparison
    same_verb = [p.phrase_id for p in phrases
                 if p.verb == ph.verb and p.phrase_id != PID]

    for mode in ("full", "closed_world"):
        cfg = TrainConfig(epochs=30, mode=mode, anchor_threshold=1.0)
        state = train(phrases, train_scenes, dims, hyper, cfg, seed=seed)
        _, _, slot_mask = resolve_mode(mode, hyper)
        bank = ScriptBank(phrases)
        preds = ev.score_scenes(test_scenes, bank, state.params,
                                slot_mask=slot_mask)

        for pid in [PID] + same_verb:
            sc = bank.script(pid)
            amax = [rb.vocab.values[k][a] for k, a in enumerate(sc.argmaxes())]
            rho = np.round(sc.reliabilities, 2)
            print(f"{mode:13s} script {phrases[pid].text:16s} "
                  f"argmax={amax} rho={rho.tolist()}")

        # rank of each latent positive among its scene's predictions
        gt_pairs = {(s.scene_id, p.human_idx, p.object_idx)
                    for s in test_scenes for p in s.pairs if p.latent[PID]}
        by_scene = {}
        for p in preds:
            by_scene.setdefault(p.scene_id, []).append(p)
        print(f"{mode:13s} latent positives: {len(gt_pairs)}")
        for key in sorted(gt_pairs):
            sid = key[0]
            scene_preds = by_scene[sid]
            mine = next(p for p in scene_preds
                        if p.pair_key == key and p.phrase_id == PID)
            rank = scene_preds.index(mine)
            above = scene_preds[:rank][-3:]
            m = mine.match
            print(f"  scene {sid} rank {rank:3d} s={m.s_base:+.2f} "
                  f"G={m.gamma:.3f} D={m.delta:.3f} shat={m.s_hat:+.2f} "
                  f"compat={np.round(m.compat, 1).tolist()}")
            for a in above:
                am = a.match
                print(f"      above: {phrases[a.phrase_id].text:16s} "
                      f"s={am.s_base:+.2f} G={am.gamma:.3f} D={am.delta:.3f} "
                      f"shat={am.s_hat:+.2f}")
        print()


if __name__ == "__main__":
    main()
