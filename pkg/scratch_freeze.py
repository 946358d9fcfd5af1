"""Masked-gradient probe: which parameter group's updates cause the collapse?

Re-runs the full-mode loop with selected flat-vector slices zeroed in the
gradient, on the clean world, then prints the usual collapse indicators.
"""
import sys

import numpy as np

from hoiscript.bank import ScriptBank
from hoiscript.domain import Hyper, ModelDims
from hoiscript import evaluate as ev
from hoiscript.domain import param_layout
from hoiscript.losses import grad_total
from hoiscript.matcher import forward_batch
from hoiscript.seeding import child_rng
from hoiscript.synth import (build_phrases, default_rulebook, generate,
                             probe_set, split_unseen)
from hoiscript.trainer import (TrainConfig, build_candidates, init_params,
                               resolve_mode, _build_batch)


def train_masked(phrases, scenes, dims, hyper, cfg, seed, frozen=()):
    run_hyper, bce, slot_mask = resolve_mode(cfg.mode, hyper)
    table = build_candidates(scenes, dims, len(phrases))
    bank = ScriptBank(phrases)
    params = init_params(dims, run_hyper, seed)
    theta = params.flatten()
    mask = np.ones_like(theta)
    for f in param_layout(dims):
        if any(f.name.startswith(p) for p in frozen):
            mask[f.offset:f.offset + f.size] = 0.0
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    t = 0
    n = table.n_candidates
    hist = []
    for epoch in range(cfg.epochs):
        order = child_rng(seed, "shuffle", epoch).permutation(n)
        n_anchors = 0
        for step in range(0, n, cfg.batch_size):
            rows = order[step:step + cfg.batch_size]
            params = params.unflatten(theta)
            bank.refresh(params)
            rng = child_rng(seed, "contrast", epoch, step)
            batch = _build_batch(table, rows, bank, params, cfg, slot_mask, rng)
            total, parts, grad = grad_total(params, batch, slot_mask=slot_mask,
                                            bce_negatives=bce)
            grad = grad * mask
            t += 1
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
            theta = theta - cfg.lr * (m / (1 - cfg.beta1 ** t)) / (
                np.sqrt(v / (1 - cfg.beta2 ** t)) + cfg.adam_eps)
            n_anchors += len(batch.contrasts)
        hist.append(n_anchors)
    return params.unflatten(theta), hist, table, bank, slot_mask


def main(frozen_groups):
    seed = 0
    rb = default_rulebook()
    rb.noise_sigma = 0.01
    rb.contact_gain = 1.0
    rb.state_gain = 1.0
    dims = ModelDims(slot_sizes=rb.vocab.sizes, categories=rb.categories)
    hyper = Hyper()
    phrases = build_phrases(rb, dims, seed=seed)
    unseen_ids, _, _ = split_unseen(rb, seed=seed)
    train_scenes = generate(rb, dims, 160, seed=seed, drop_phrase_ids=unseen_ids)
    test_scenes = generate(rb, dims, 48, seed=seed, start_id=2_000_000)
    counts = ev.train_positive_counts(train_scenes, len(phrases))
    probes = probe_set(test_scenes, rb)

    cfg = TrainConfig(epochs=30, mode="full")
    params, hist, table, bank, slot_mask = train_masked(
        phrases, train_scenes, dims, hyper, cfg, seed, frozen=frozen_groups)

    bank.refresh(params)
    Xc = table.X[table.cand_pair]
    Tc = bank.embedding_matrix[table.cand_phrase]
    fs = forward_batch(Xc, Tc, params, slot_mask=slot_mask)
    z = table.z.astype(bool)
    preds = ev.score_scenes(test_scenes, bank, params, slot_mask=slot_mask)
    preds = ev.rank_and_suppress(preds, bank)
    rep = ev.evaluate_detections(preds, test_scenes, phrases, counts, unseen_ids)
    fpr = ev.affordance_conflict_fpr(preds, probes)
    print(f"frozen={frozen_groups or 'none'}: rho={fs.rho.mean():.3f} "
          f"gz1={fs.gamma[z].mean():.2f} gz0={fs.gamma[~z].mean():.2f} "
          f"dz1={fs.delta[z].mean():.2f} dz0={fs.delta[~z].mean():.2f} "
          f"anchors_last={hist[-1]} unseen={rep['unseen']:.3f} "
          f"seen={rep['seen']:.3f} fpr={fpr:.3f}")


if __name__ == "__main__":
    groups = sys.argv[1].split(",") if len(sys.argv) > 1 and sys.argv[1] != "none" else ()
    main(tuple(groups))
