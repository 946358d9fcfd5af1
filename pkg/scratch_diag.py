"""Diagnose full-mode underperformance: loss parts, gamma/delta separation."""
import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.matcher import forward_batch
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.trainer import TrainConfig, build_candidates, resolve_mode, train

seed = 0
mode = "full"
epochs = 100

rb = default_rulebook()
dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
hyper = Hyper()
phrases = build_phrases(rb, dims, seed=seed)
unseen_ids, unseen_verbs, _ = split_unseen(rb, seed=seed)
train_scenes = generate(rb, dims, 160, seed=seed, drop_phrase_ids=unseen_ids)
test_scenes = generate(rb, dims, 48, seed=seed, start_id=2_000_000)

cfg = TrainConfig(epochs=epochs, mode=mode)
state = train(phrases, train_scenes, dims, hyper, cfg, seed=seed)

print(f"== {mode} loss parts ==")
for e in (0, 4, 9, 19, epochs - 1):
    h = state.history[e]
    parts = {k: round(v, 4) for k, v in h.items()
             if k not in ("epoch", "steps", "anchors")}
    print(f"  epoch {e+1:3d} anchors={h['anchors']}", parts)

_, _, slot_mask = resolve_mode(mode, hyper)
bank = ScriptBank(phrases)
bank.refresh(state.params)
table = build_candidates(test_scenes, dims, len(phrases))
X = table.X[table.cand_pair]
T = bank.embedding_matrix[table.cand_phrase]
fs = forward_batch(X, T, state.params, slot_mask=slot_mask)

z = table.z.astype(bool)
print(f"\n== test separation ({mode}) ==")
for name, arr in (("gamma", fs.gamma), ("delta", fs.delta),
                  ("gamma*(1-delta)", fs.gamma * (1 - fs.delta)),
                  ("s_base", fs.s), ("s_hat", fs.s_hat)):
    print(f"  {name:16s} z=1: {arr[z].mean():8.4f} +- {arr[z].std():6.4f}   "
          f"z=0: {arr[~z].mean():8.4f} +- {arr[~z].std():6.4f}")

def auc(pos, neg):
    # probability a random positive outranks a random negative
    allv = np.concatenate([pos, neg])
    order = np.argsort(np.argsort(allv))  # ranks
    r_pos = order[:len(pos)].sum() + len(pos)
    return (r_pos - len(pos) * (len(pos) + 1) / 2) / (len(pos) * len(neg))

print(f"\n  AUC s_base {auc(fs.s[z], fs.s[~z]):.4f}   "
      f"AUC s_hat {auc(fs.s_hat[z], fs.s_hat[~z]):.4f}   "
      f"AUC gamma(1-delta) {auc((fs.gamma*(1-fs.delta))[z], (fs.gamma*(1-fs.delta))[~z]):.4f}")

# probe-specific: gamma/delta on affordance-compatible contradicted rows
probes = set(probe_set(test_scenes, rb))
pk = [(int(table.pair_scene[table.cand_pair[i]]),
       int(table.pair_human[table.cand_pair[i]]),
       int(table.pair_object[table.cand_pair[i]]),
       int(table.cand_phrase[i])) for i in range(table.n_candidates)]
is_probe = np.array([k in probes for k in pk])
print(f"\n  probes: gamma {fs.gamma[is_probe].mean():.4f} delta {fs.delta[is_probe].mean():.4f} "
      f"s_hat {fs.s_hat[is_probe].mean():.4f}")
print(f"  true:   gamma {fs.gamma[z].mean():.4f} delta {fs.delta[z].mean():.4f} "
      f"s_hat {fs.s_hat[z].mean():.4f}")

# reliabilities and script sharpness of a few phrases
print("\n== scripts ==")
for pid in (0, 4, 16):
    sc = bank.script(pid)
    sharp = [float(d.max()) for d in sc.distributions]
    print(f"  {phrases[pid].verb}-{phrases[pid].object_category}: "
          f"rho={np.round(sc.reliabilities, 2)} peak={np.round(sharp, 2)} "
          f"argmax={[rb.vocab.values[k][int(np.argmax(d))] for k, d in enumerate(sc.distributions)]}")
