"""Adam training over the flat parameter vector.

Scripts are re-derived from the live parameters before every step, anchors
for the contrast loss are picked per batch (annotated positives plus
candidates the current model considers well covered), and every random
choice is keyed by (seed, epoch, step), so interrupting and resuming from a
checkpoint replays the exact same update sequence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .bank import ScriptBank
from .domain import (
    N_SLOTS,
    SLOT_NAMES,
    Hyper,
    ModelDims,
    ModelParams,
    extended_vector,
    param_layout,
)
from .losses import Batch, ContrastSet, grad_total
from .matcher import forward_batch
from .seeding import child_rng

MODES = ("full", "closed_world", "no_ipl", "no_csc", "no_align", "no_calibration")
CHECKPOINT_MAGIC = b"HSCK"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Loss went non-finite or blew past the divergence limit."""


def resolve_mode(mode: str, hyper: Hyper):
    """Translate a mode name into (hyper, bce_negatives, slot_mask).

    closed_world scores annotated negatives with a hard BCE push-down and
    disables the interval loss; drop_slot:<name> zeroes one slot's
    reliability everywhere, training and scoring alike.
    """
    slot_mask = np.ones(N_SLOTS)
    bce = False
    if mode == "full":
        pass
    elif mode == "closed_world":
        bce = True
        hyper = replace(hyper, lambda_ipl=0.0)
    elif mode == "no_ipl":
        hyper = replace(hyper, lambda_ipl=0.0)
    elif mode == "no_csc":
        hyper = replace(hyper, lambda_csc=0.0)
    elif mode == "no_align":
        hyper = replace(hyper, lambda_align=0.0)
    elif mode == "no_calibration":
        hyper = replace(hyper, lambda_gamma=0.0, lambda_delta=0.0)
    elif mode.startswith("drop_slot:"):
        name = mode.split(":", 1)[1]
        if name not in SLOT_NAMES:
            raise ValueError(f"unknown slot {name!r} in mode {mode!r}")
        slot_mask[SLOT_NAMES.index(name)] = 0.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return hyper, bce, slot_mask


def init_params(dims: ModelDims, hyper: Hyper, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases, and a
    conflict bias of -2 so conflict starts low until evidence accumulates."""
    rng = child_rng(seed, "init")
    params = ModelParams.zeros(dims, hyper)
    fan_in = {
        "token_weights": lambda k: dims.d_x,
        "script_heads": lambda k: dims.d_t,
        "reliability_weights": lambda k: dims.d_t,
        "state_proj": lambda k: dims.d_s,
        "script_proj": lambda k: dims.slot_sizes[k],
        "conflict_weights": lambda k: N_SLOTS,
        "base_bilinear": lambda k: dims.d_pair,
    }
    for f in param_layout(dims):
        if f.name not in fan_in:
            continue
        bound = 1.0 / np.sqrt(fan_in[f.name](f.slot))
        draw = rng.uniform(-bound, bound, size=f.shape)
        if f.slot is not None:
            getattr(params, f.name)[f.slot][...] = draw
        else:
            getattr(params, f.name)[...] = draw
    params.conflict_bias[...] = -2.0
    return params


# ---------------------------------------------------------------------------
# candidate universe

@dataclass(eq=False)
class CandidateTable:
    """Every (pair, phrase) combination across a scene list, flattened.

    X holds one extended descriptor per pair; candidates index into it so the
    table stays small even with a large phrase bank.
    """

    X: np.ndarray            # (P, d_x)
    pair_scene: np.ndarray   # (P,)
    pair_human: np.ndarray   # (P,)
    pair_object: np.ndarray  # (P,)
    cand_pair: np.ndarray    # (N,) row into X
    cand_phrase: np.ndarray  # (N,)
    y: np.ndarray            # (N,) int8
    z: np.ndarray            # (N,) int8
    affordance_ok: np.ndarray  # (N,) int8

    @property
    def n_candidates(self) -> int:
        return int(self.cand_pair.shape[0])


def build_candidates(scenes, dims: ModelDims, n_phrases: int) -> CandidateTable:
    xs, ps, ph, po = [], [], [], []
    cp, cf, ys, zs, ok = [], [], [], [], []
    for scene in scenes:
        for pair in scene.pairs:
            row = len(xs)
            xs.append(extended_vector(pair.descriptor, dims))
            ps.append(scene.scene_id)
            ph.append(pair.human_idx)
            po.append(pair.object_idx)
            for pid in range(n_phrases):
                cp.append(row)
                cf.append(pid)
                ys.append(int(pair.labels[pid]))
                zs.append(int(pair.latent[pid]))
                ok.append(int(pair.affordance_ok[pid]))
    return CandidateTable(
        X=np.asarray(xs, dtype=np.float64),
        pair_scene=np.asarray(ps, dtype=np.int64),
        pair_human=np.asarray(ph, dtype=np.int64),
        pair_object=np.asarray(po, dtype=np.int64),
        cand_pair=np.asarray(cp, dtype=np.int64),
        cand_phrase=np.asarray(cf, dtype=np.int64),
        y=np.asarray(ys, dtype=np.int8),
        z=np.asarray(zs, dtype=np.int8),
        affordance_ok=np.asarray(ok, dtype=np.int8),
    )


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    n_counterfactuals: int = 4
    # above the attainable range of gamma*(1-delta): contrast anchors are the
    # labeled positives only.  Mined anchors let early-training junk into the
    # contrast sets, whose anchor-side gradient then inflates coverage on
    # mismatched pairs until the slot geometry collapses; a gate the model
    # cannot reach keeps the anchor set clean.  Lower it to re-enable mining.
    anchor_threshold: float = 1.0
    divergence_limit: float = 1e7
    mode: str = "full"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps",
            "n_counterfactuals", "anchor_threshold", "divergence_limit", "mode")}


@dataclass(eq=False)
class TrainState:
    params: ModelParams
    adam_m: np.ndarray
    adam_v: np.ndarray
    adam_t: int
    epoch: int                  # epochs completed so far
    history: list = field(default_factory=list)


def _build_batch(table: CandidateTable, rows: np.ndarray, bank: ScriptBank,
                 params: ModelParams, cfg: TrainConfig, slot_mask,
                 rng: np.random.Generator) -> Batch:
    X = table.X[table.cand_pair[rows]]
    pids = table.cand_phrase[rows]
    T = bank.embedding_matrix[pids]
    y = table.y[rows].astype(np.int8)

    # anchors: annotated positives plus rows the current model covers well
    state = forward_batch(X, T, params, slot_mask=slot_mask)
    covered = state.gamma * (1.0 - state.delta) > cfg.anchor_threshold
    anchor_rows = np.nonzero((y == 1) | covered)[0]

    contrasts = []
    for row in anchor_rows:
        scripts = bank.counterfactuals(int(pids[row]), n=cfg.n_counterfactuals, rng=rng)
        if not scripts:
            continue
        embeddings = [
            s.embedding if s.embedding is not None else bank.phrases[s.phrase_id].embedding
            for s in scripts
        ]
        contrasts.append(ContrastSet(anchor=int(row), scripts=scripts,
                                     embeddings=embeddings))
    return Batch(X=X, T=T, y=y, phrase_ids=pids, contrasts=contrasts)


def train(phrases, scenes, dims: ModelDims, hyper: Hyper, cfg: TrainConfig,
          seed: int, resume: TrainState | None = None, log_fn=None) -> TrainState:
    """Run (or continue) training; returns the final state.

    Resuming from a checkpoint after k epochs produces bit-identical
    parameters to an uninterrupted run because every stochastic choice is
    keyed by (seed, epoch, step) and the Adam moments travel with the
    checkpoint.
    """
    run_hyper, bce, slot_mask = resolve_mode(cfg.mode, hyper)
    table = build_candidates(scenes, dims, len(phrases))
    bank = ScriptBank(phrases)

    if resume is not None:
        params = resume.params
        theta = params.flatten()
        m, v, t = resume.adam_m.copy(), resume.adam_v.copy(), resume.adam_t
        start_epoch = resume.epoch
        history = list(resume.history)
    else:
        params = init_params(dims, run_hyper, seed)
        theta = params.flatten()
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        t = 0
        start_epoch = 0
        history = []

    n = table.n_candidates
    for epoch in range(start_epoch, cfg.epochs):
        order = child_rng(seed, "shuffle", epoch).permutation(n)
        sums = {}
        n_steps = 0
        n_anchors = 0
        for step in range(0, n, cfg.batch_size):
            rows = order[step:step + cfg.batch_size]
            params = params.unflatten(theta)
            bank.refresh(params)
            rng = child_rng(seed, "contrast", epoch, step)
            batch = _build_batch(table, rows, bank, params, cfg, slot_mask, rng)

            total, parts, grad = grad_total(params, batch, slot_mask=slot_mask,
                                            bce_negatives=bce)
            if not np.isfinite(total) or abs(total) > cfg.divergence_limit:
                raise DivergenceError(
                    f"loss {total!r} at epoch {epoch} step {step // cfg.batch_size}")

            t += 1
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
            m_hat = m / (1.0 - cfg.beta1 ** t)
            v_hat = v / (1.0 - cfg.beta2 ** t)
            theta = theta - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)

            for key, val in parts.items():
                sums[key] = sums.get(key, 0.0) + float(val)
            n_anchors += len(batch.contrasts)
            n_steps += 1

        entry = {"epoch": epoch, "steps": n_steps,
                 "anchors": n_anchors,
                 **{k: s / max(n_steps, 1) for k, s in sums.items()}}
        history.append(entry)
        if log_fn is not None:
            log_fn(entry)

    params = params.unflatten(theta)
    return TrainState(params=params, adam_m=m, adam_v=v, adam_t=t,
                      epoch=cfg.epochs, history=history)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, state: TrainState, seed: int, mode: str,
                    config_hash: bytes) -> None:
    """Binary checkpoint carrying parameters plus Adam moments, so a resumed
    run continues the optimizer trajectory exactly."""
    if len(config_hash) != 32:
        raise ValueError("config_hash must be 32 bytes")
    theta = state.params.flatten()
    mode_b = mode.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", seed))
        fh.write(struct.pack("<I", state.epoch))
        fh.write(struct.pack("<Q", state.adam_t))
        fh.write(config_hash)
        fh.write(struct.pack("<H", len(mode_b)))
        fh.write(mode_b)
        fh.write(struct.pack("<Q", theta.shape[0]))
        fh.write(theta.astype("<f8").tobytes())
        fh.write(state.adam_m.astype("<f8").tobytes())
        fh.write(state.adam_v.astype("<f8").tobytes())


def load_checkpoint(path, dims: ModelDims, hyper: Hyper):
    """Returns (TrainState, meta) where meta has seed, mode, config_hash."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError("not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (seed,) = struct.unpack("<Q", fh.read(8))
        (epoch,) = struct.unpack("<I", fh.read(4))
        (adam_t,) = struct.unpack("<Q", fh.read(8))
        config_hash = fh.read(32)
        (mode_len,) = struct.unpack("<H", fh.read(2))
        mode = fh.read(mode_len).decode("utf-8")
        (n,) = struct.unpack("<Q", fh.read(8))
        theta = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        m = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        v = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()

    run_hyper, _, _ = resolve_mode(mode, hyper)
    base = ModelParams.zeros(dims, run_hyper)
    if theta.shape[0] != base.n_params():
        raise ValueError(f"checkpoint has {theta.shape[0]} params, "
                         f"model needs {base.n_params()}")
    state = TrainState(params=base.unflatten(theta), adam_m=m, adam_v=v,
                       adam_t=adam_t, epoch=epoch)
    meta = {"seed": seed, "mode": mode, "config_hash": config_hash}
    return state, meta
