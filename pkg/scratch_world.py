"""Scratch: empirical checks of the synthetic world (delete before finish)."""
import numpy as np
from collections import Counter

from hoiscript.domain import ModelDims, SLOT_NAMES, validate
from hoiscript import synth
from hoiscript.tokenizer import input_mask
from hoiscript.domain import extended_vector

rb = synth.default_rulebook()
dims = ModelDims(categories=rb.categories)
pp = rb.phrase_pairs()
print("n_phrases", len(pp))
assert len(pp) == 26

phrases = synth.build_phrases(rb, dims, 7)
for ph in phrases:
    assert not validate(ph), validate(ph)
# verb halves shared exactly
hv = dims.d_t // 2
by_verb = {}
for ph in phrases:
    v = ph.embedding[:hv] / np.linalg.norm(ph.embedding[:hv])
    by_verb.setdefault(ph.verb, []).append(v)
for v, subs in by_verb.items():
    for s in subs[1:]:
        assert np.allclose(s, subs[0]), v
print("verb halves shared OK")

unseen_ids, unseen_verbs, _extra = synth.split_unseen(rb, 7)
print("unseen verbs", unseen_verbs, "unseen ids", unseen_ids, "n_unseen", len(unseen_ids))

scenes = synth.generate(rb, dims, 64, seed=7, rho_miss=0.3, drop_phrase_ids=unseen_ids)
n_pairs = sum(len(s.pairs) for s in scenes)
z_pos = sum(int(p.latent.sum()) for s in scenes for p in s.pairs)
y_pos = sum(int(p.labels.sum()) for s in scenes for p in s.pairs)
dropped = sum(int(((p.latent == 1) & (p.labels == 0)).sum()) for s in scenes for p in s.pairs)
print(f"pairs={n_pairs} z_pos={z_pos} y_pos={y_pos} dropped={dropped}")

# validate every scene
bad = [validate(s) for s in scenes]
bad = [b for b in bad if b]
print("scene violations:", bad[:3], "count", len(bad))

# y <= z always
for s in scenes:
    for p in s.pairs:
        assert np.all(p.labels <= p.latent)
print("y<=z OK")

# geometry truth matches boxes for every pair
for s in scenes:
    diag = float(np.hypot(s.width, s.height))
    for p in s.pairs:
        g = synth.classify_geometry(s.human_boxes[p.human_idx], s.object_boxes[p.object_idx], diag)
        k = SLOT_NAMES.index("geometry")
        assert rb.vocab.values[k][p.true_slots[k]] == g
print("geometry truth consistent OK")

# contact => overlapping/adjacent
kc, kg = SLOT_NAMES.index("contact"), SLOT_NAMES.index("geometry")
for s in scenes:
    for p in s.pairs:
        c = rb.vocab.values[kc][p.true_slots[kc]]
        g = rb.vocab.values[kg][p.true_slots[kg]]
        if c != "none":
            assert g in ("overlapping", "adjacent"), (c, g)
print("contact-proximity rule OK")

# per-slot counts
for k, name in enumerate(SLOT_NAMES):
    cnt = Counter(rb.vocab.values[k][p.true_slots[k]] for s in scenes for p in s.pairs)
    print(name, dict(cnt))

# per-phrase z counts (train)
zc = np.zeros(len(pp), int)
for s in scenes:
    for p in s.pairs:
        zc += p.latent
print("z per phrase:", {f"{v}-{c}": int(n) for (v, c), n in zip(pp, zc)})

# linear separability per slot on noise-free descriptors, masked fields only
rb0 = synth.default_rulebook()
rb0.noise_sigma = 0.0
scenes0 = synth.generate(rb0, dims, 120, seed=7, rho_miss=0.0)
masks = input_mask(dims)
X = np.stack([extended_vector(p.descriptor, dims) for s in scenes0 for p in s.pairs])
Y = np.stack([p.true_slots for s in scenes0 for p in s.pairs])
from sklearn.linear_model import LogisticRegression
for k, name in enumerate(SLOT_NAMES):
    cols = masks[k].astype(bool)
    Xk = X[:, cols]
    yk = Y[:, k]
    if len(set(yk.tolist())) == 1:
        print(name, "single class", set(yk.tolist()))
        continue
    clf = LogisticRegression(max_iter=5000, C=1e4).fit(Xk, yk)
    acc = clf.score(Xk, yk)
    print(f"{name}: acc={acc:.4f} n_classes={len(set(yk.tolist()))}")

# probes
probes = synth.probe_set(scenes, rb)
print("n_probes(train)", len(probes))
# contradiction profile: which slots contradicted
prof = Counter()
for sid, hi, oi, pid in probes:
    s = scenes[sid]
    pair = next(p for p in s.pairs if p.human_idx == hi and p.object_idx == oi)
    for k in synth.required_contradictions(rb, pp[pid][0], pair.true_slots):
        prof[SLOT_NAMES[k]] += 1
print("probe contradicted slots:", dict(prof))

# determinism incl threads
s1 = synth.generate(rb, dims, 12, seed=9, rho_miss=0.3)
s2 = synth.generate(rb, dims, 12, seed=9, rho_miss=0.3, threads=4)
for a, b in zip(s1, s2):
    assert a.scene_id == b.scene_id
    assert np.allclose(a.human_boxes, b.human_boxes)
    for pa, pb in zip(a.pairs, b.pairs):
        assert np.array_equal(pa.true_slots, pb.true_slots)
        assert np.allclose(extended_vector(pa.descriptor, dims), extended_vector(pb.descriptor, dims))
        assert np.array_equal(pa.labels, pb.labels)
print("thread determinism OK")

# rho_miss=0, no drops -> y == z
s3 = synth.generate(rb, dims, 12, seed=9, rho_miss=0.0)
for s in s3:
    for p in s.pairs:
        assert np.array_equal(p.labels, p.latent)
print("rho_miss=0 gives y==z OK")
