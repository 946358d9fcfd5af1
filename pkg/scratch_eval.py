import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.synth import build_phrases, default_rulebook, generate, probe_set, split_unseen
from hoiscript.trainer import TrainConfig, init_params, train

rb = default_rulebook()
dims = ModelDims(categories=rb.categories)
hyper = Hyper()

phrases = build_phrases(rb, dims, seed=0)
unseen_ids, unseen_verbs, _extra = split_unseen(rb, seed=0)
unseen_ids = list(unseen_ids)
print("unseen phrase ids:", unseen_ids)

train_scenes = generate(rb, dims, n_scenes=48, seed=0, drop_phrase_ids=unseen_ids)
test_scenes = generate(rb, dims, n_scenes=24, seed=0 + 10_000, start_id=48_000)

cfg = TrainConfig(epochs=12)
state = train(phrases, train_scenes, dims, hyper, cfg, seed=0)
params = state.params

bank = ScriptBank(phrases)
preds = ev.score_scenes(test_scenes, bank, params)
print("n preds:", len(preds))
assert all(preds[i].score >= preds[i + 1].score for i in range(len(preds) - 1))

ranked = ev.rank_and_suppress(preds, bank)
n_sup = sum(p.suppressed for p in ranked)
print("suppressed:", n_sup, "/", len(ranked))
# invariant: suppressor strictly earlier in rank and strictly greater or tied
# with lower phrase id
for i, p in enumerate(ranked):
    if p.suppressed:
        k = ranked[p.suppressor]
        assert p.suppressor < i
        assert not k.suppressed
        assert (k.score > p.score) or (k.score == p.score and k.phrase_id < p.phrase_id)
        assert k.pair_key == p.pair_key

counts = ev.train_positive_counts(train_scenes, len(phrases))
print("train positives per phrase:", counts.tolist())
report = ev.evaluate_detections(ranked, test_scenes, phrases, counts, unseen_ids)
for k in ("full", "rare", "non_rare", "seen", "unseen", "hm"):
    print(f"  {k:10s}", None if report[k] is None else round(report[k], 4))
print("  known-object full", round(report["known_object"]["full"], 4))

probes = probe_set(test_scenes, rb)
print("probes:", len(probes))
fpr = ev.affordance_conflict_fpr(ranked, probes)
print("fpr:", fpr)

dpp = ev.dropped_positive_probability(train_scenes, bank, params, unseen_ids)
print("dropped-positive mean prob (train):", dpp)

# JSONL round trip
ev.write_predictions("/tmp/preds.jsonl", ranked, meta={"seed": 0})
header, back = ev.read_predictions("/tmp/preds.jsonl")
assert header["seed"] == 0
assert len(back) == len(ranked)
for a, b in zip(ranked, back):
    assert a.to_dict() == b.to_dict()
print("jsonl round trip ok")

# AP sanity: perfect ranking gives AP 1
flags = [1.0, 1.0, 0.0]
assert ev.average_precision(flags, 2) == 1.0
assert ev.average_precision([0.0, 1.0], 1) == 0.5
assert ev.harmonic_mean(32.6, 22.5) - 26.6 < 0.05
assert abs(ev.harmonic_mean(30.7, 19.8) - 24.1) < 0.05
assert ev.harmonic_mean(0.0, 0.0) == 0.0
print("metric oracles ok")
