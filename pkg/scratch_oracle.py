"""Oracle-init experiment: hand-build the intended script solution, measure its
loss against the collapsed optimum, and test whether 30 epochs of training from
that point stays non-collapsed (basin stability)."""
import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims, N_SLOTS, extended_vector
from hoiscript import evaluate as ev
from hoiscript.matcher import forward_batch
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.tokenizer import input_mask
from hoiscript.trainer import (TrainConfig, TrainState, build_candidates,
                               init_params, resolve_mode, train)

seed = 0
epochs = 30

rb = default_rulebook()
dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
hyper = Hyper()
phrases = build_phrases(rb, dims, seed=seed)
unseen_ids, unseen_verbs, _ = split_unseen(rb, seed=seed)
train_scenes = generate(rb, dims, 160, seed=seed, drop_phrase_ids=unseen_ids)
test_scenes = generate(rb, dims, 48, seed=seed, start_id=2_000_000)

# ---------------------------------------------------------------------------
# hand-built solution

params = init_params(dims, hyper, seed)  # start from pinned init, overwrite pieces
masks = input_mask(dims)

# token maps: ridge from masked descriptor to one-hot(true value) in the
# leading V_k coordinates of the token space
table = build_candidates(train_scenes, dims, len(phrases))
X_pairs = table.X  # (P, d_x)
true_vals = []
for scene in train_scenes:
    for pair in scene.pairs:
        true_vals.append(pair.true_slots)
true_vals = np.asarray(true_vals)  # (P, 6)

for k in range(N_SLOTS):
    V = dims.slot_sizes[k]
    A = X_pairs * masks[k]
    A1 = np.concatenate([A, np.ones((A.shape[0], 1))], axis=1)
    Y = np.zeros((A.shape[0], dims.d_s))
    Y[np.arange(A.shape[0]), true_vals[:, k]] = 1.0
    lam = 1e-3
    G = A1.T @ A1 + lam * np.eye(A1.shape[1])
    W = np.linalg.solve(G, A1.T @ Y)
    params.token_weights[k] = W[:-1]
    params.token_bias[k] = W[-1]
    # check decode accuracy
    pred = A1 @ W
    acc = (pred[:, :V].argmax(1) == true_vals[:, k]).mean()
    print(f"slot {k} token decode acc {acc:.4f}")

# projections: token space already holds the value one-hot in its head
for k in range(N_SLOTS):
    V = dims.slot_sizes[k]
    params.state_proj[k] = np.eye(dims.d_s, dims.d_m)
    params.script_proj[k] = np.eye(V, dims.d_m)

# script heads: required slot -> logits 8*onehot(required value); forbidden
# slot -> uniform over allowed values; else zeros (uniform)
T = np.stack([p.embedding for p in phrases])  # (n, d_t)
for k in range(N_SLOTS):
    V = dims.slot_sizes[k]
    L = np.zeros((len(phrases), V))
    for i, p in enumerate(phrases):
        req = rb.required_indices(p.verb)
        forb = rb.forbidden_indices(p.verb)
        if k in req:
            L[i, req[k]] = 8.0
        elif k in forb:
            L[i, :] = 2.0
            for b in forb[k]:
                L[i, b] = -4.0
    W, *_ = np.linalg.lstsq(T, L, rcond=None)
    params.script_heads[k] = W
    fit = np.abs(T @ W - L).max()
    print(f"slot {k} script head fit resid {fit:.2e}")

# reliabilities: high on required/forbidden slots of the verb, low elsewhere
for k in range(N_SLOTS):
    tgt = np.full(len(phrases), -1.4)
    for i, p in enumerate(phrases):
        if k in rb.required_indices(p.verb):
            tgt[i] = 2.2
        elif k in rb.forbidden_indices(p.verb):
            tgt[i] = 0.5
    w, *_ = np.linalg.lstsq(T, tgt, rcond=None)
    params.reliability_weights[k] = w

params.conflict_weights = np.full(N_SLOTS, 5.0)
params.conflict_bias = np.zeros(())
params.conflict_bias[...] = -2.0
# base_bilinear left at pinned random init; hoi learns it

# ---------------------------------------------------------------------------
# loss landscape at the oracle point vs the collapsed end state

bank = ScriptBank(phrases)
bank.refresh(params)
_, _, slot_mask = resolve_mode("full", hyper)

Xc = table.X[table.cand_pair]
Tc = bank.embedding_matrix[table.cand_phrase]
fs = forward_batch(Xc, Tc, params, slot_mask=slot_mask)
z = table.z.astype(bool)
y = table.y.astype(bool)
print("\n== oracle point, train set ==")
print(f"  gamma  z=1 {fs.gamma[z].mean():.4f}  z=0 {fs.gamma[~z].mean():.4f}")
print(f"  delta  z=1 {fs.delta[z].mean():.4f}  z=0 {fs.delta[~z].mean():.4f}")
print(f"  rho mean {fs.rho.mean(0).round(3)}")

state = train(phrases, train_scenes, dims, hyper,
              TrainConfig(epochs=epochs, mode="full"), seed=seed,
              resume=TrainState(params=params,
                                adam_m=np.zeros_like(params.flatten()),
                                adam_v=np.zeros_like(params.flatten()),
                                adam_t=0, epoch=0))

print("\n== loss trajectory from oracle init ==")
for e in range(0, epochs, 5):
    h = state.history[e]
    parts = {k: round(v, 4) for k, v in h.items()
             if k not in ("epoch", "steps", "anchors")}
    print(f"  epoch {e+1:3d} anchors={h['anchors']}", parts)
h = state.history[-1]
print(f"  epoch {epochs:3d} anchors={h['anchors']}",
      {k: round(v, 4) for k, v in h.items() if k not in ("epoch", "steps", "anchors")})

# post-training diagnostics
bank.refresh(state.params)
fs2 = forward_batch(Xc, Tc, state.params, slot_mask=slot_mask)
print("\n== after 30 epochs from oracle ==")
print(f"  gamma  z=1 {fs2.gamma[z].mean():.4f}  z=0 {fs2.gamma[~z].mean():.4f}")
print(f"  delta  z=1 {fs2.delta[z].mean():.4f}  z=0 {fs2.delta[~z].mean():.4f}")
print(f"  rho mean {fs2.rho.mean(0).round(3)}")

# test-set metrics, full mode
preds = ev.score_scenes(test_scenes, bank, state.params, slot_mask=slot_mask)
preds = ev.rank_and_suppress(preds, bank)
counts = ev.train_positive_counts(train_scenes, len(phrases))
rep = ev.evaluate_detections(preds, test_scenes, phrases, counts, set(unseen_ids))
probes = probe_set(test_scenes, rb)
fpr = ev.affordance_conflict_fpr(preds, probes)
dpp = ev.dropped_positive_probability(train_scenes, bank, state.params,
                                      set(unseen_ids), slot_mask=slot_mask)
print(f"\n  test mAP full {rep['full']:.4f} seen {rep['seen']:.4f} "
      f"unseen {rep['unseen']:.4f} hm {rep['hm']:.4f} fpr {fpr:.4f} dpp {dpp:.4f}")
