"""Slot-wise script matching and calibrated scoring.

Per slot, the state token and the script distribution are projected into a
shared match space and compared by scaled cosine.  Coverage aggregates the
per-slot evidence as a reliability-weighted geometric mean of sigmoids;
conflict is a learned squash of reliability-weighted incompatibility.  The
final logit is the base score plus lambda_gamma * log(coverage + eps) minus
lambda_delta * conflict.

forward_batch is the single vectorized implementation the trainer, the
evaluator, and the gradient code all share; the scalar functions are the
readable reference surface and are tested against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from .domain import (Hyper, MatchResult, ModelParams, N_SLOTS, PairDescriptor,
                     Script, extended_vector)
from .tokenizer import input_mask

KAPPA_DEFAULT = 4.0


def slot_compat(token: np.ndarray, dist: np.ndarray, params: ModelParams, k: int) -> float:
    """Scaled cosine between projected token and projected distribution.

    Returns 0 when either projection has zero norm, so an all-zero model is
    neutral rather than undefined.
    """
    a = token @ params.state_proj[k]
    c = dist @ params.script_proj[k]
    na, nc = np.linalg.norm(a), np.linalg.norm(c)
    if na == 0.0 or nc == 0.0:
        return 0.0
    return float(params.hyper.kappa * (a @ c) / (na * nc))


def coverage(compat: np.ndarray, rho: np.ndarray, eps: float = 1e-8) -> float:
    """Reliability-weighted geometric mean of sigmoid(compat), in (0, 1 + eps]."""
    q = expit(np.asarray(compat, dtype=np.float64))
    num = float(np.sum(rho * np.log(q + eps)))
    den = float(np.sum(rho)) + eps
    return float(np.exp(num / den))


def conflict(compat: np.ndarray, rho: np.ndarray, w: np.ndarray, b: float) -> float:
    """Sigmoid of weighted per-slot incompatibility rho * (1 - sigmoid(compat))."""
    q = expit(np.asarray(compat, dtype=np.float64))
    return float(expit(float(np.dot(w, rho * (1.0 - q))) + b))


def base_logit(pair: np.ndarray, embedding: np.ndarray, bilinear: np.ndarray) -> float:
    """Bilinear appearance score pair^T B t."""
    return float(pair @ bilinear @ embedding)


def calibrate_array(s, gamma, delta, hyper: Hyper):
    """Vector form of the calibrated logit; the one place the formula lives."""
    return s + hyper.lambda_gamma * np.log(gamma + hyper.eps) - hyper.lambda_delta * delta


def calibrate(s: float, gamma: float, delta: float, hyper: Hyper) -> float:
    return float(calibrate_array(np.float64(s), np.float64(gamma), np.float64(delta), hyper))


@dataclass(eq=False)
class ForwardState:
    """Everything forward_batch computed, kept for the backward pass."""

    X: np.ndarray            # (M, d_x) extended descriptors
    T: np.ndarray            # (M, d_t) embeddings used for scripts and base score
    token_masks: np.ndarray  # (6, d_x)
    slot_mask: np.ndarray    # (6,) 1.0 for active slots, 0.0 for dropped
    const_mask: np.ndarray   # (M,) True where the script is a constant (virtual)
    tokens: list[np.ndarray]     # per slot (M, d_s)
    dists: list[np.ndarray]      # per slot (M, V_k)
    rho_raw: np.ndarray          # (M, 6) before slot_mask, constants substituted
    rho: np.ndarray              # (M, 6) after slot_mask
    a: list[np.ndarray]          # per slot (M, d_m) projected tokens
    c: list[np.ndarray]          # per slot (M, d_m) projected distributions
    na: np.ndarray               # (M, 6)
    nc: np.ndarray               # (M, 6)
    dot: np.ndarray              # (M, 6)
    safe: np.ndarray             # (M, 6) denom > 0
    m: np.ndarray                # (M, 6) compat
    q: np.ndarray                # (M, 6) sigmoid(m)
    num: np.ndarray              # (M,)
    den: np.ndarray              # (M,)
    gamma: np.ndarray            # (M,)
    delta: np.ndarray            # (M,)
    pair: np.ndarray             # (M, d_pair)
    s: np.ndarray                # (M,)
    s_hat: np.ndarray            # (M,)


def forward_batch(X: np.ndarray, T: np.ndarray, params: ModelParams,
                  const_mask: np.ndarray | None = None,
                  const_dists: list[np.ndarray] | None = None,
                  const_rho: np.ndarray | None = None,
                  slot_mask: np.ndarray | None = None,
                  token_masks: np.ndarray | None = None) -> ForwardState:
    """Score M candidates at once.

    Rows flagged in const_mask take their slot distributions and reliabilities
    from const_dists / const_rho instead of the script heads; those rows send
    no gradient into script heads or reliability weights.
    """
    dims, hyper = params.dims, params.hyper
    M = X.shape[0]
    if token_masks is None:
        token_masks = input_mask(dims)
    if slot_mask is None:
        slot_mask = np.ones(N_SLOTS)
    if const_mask is None:
        const_mask = np.zeros(M, dtype=bool)

    tokens, dists, a, c = [], [], [], []
    rho_raw = np.empty((M, N_SLOTS))
    na = np.empty((M, N_SLOTS))
    nc = np.empty((M, N_SLOTS))
    dot = np.empty((M, N_SLOTS))
    safe = np.empty((M, N_SLOTS), dtype=bool)
    m = np.empty((M, N_SLOTS))

    for k in range(N_SLOTS):
        S_k = (X * token_masks[k]) @ params.token_weights[k] + params.token_bias[k]
        P_k = softmax(T @ params.script_heads[k], axis=1)
        r_k = expit(T @ params.reliability_weights[k])
        if const_mask.any():
            P_k = np.where(const_mask[:, None], const_dists[k], P_k)
            r_k = np.where(const_mask, const_rho[:, k], r_k)
        a_k = S_k @ params.state_proj[k]
        c_k = P_k @ params.script_proj[k]
        na[:, k] = np.linalg.norm(a_k, axis=1)
        nc[:, k] = np.linalg.norm(c_k, axis=1)
        dot[:, k] = np.sum(a_k * c_k, axis=1)
        safe[:, k] = (na[:, k] > 0.0) & (nc[:, k] > 0.0)
        denom = np.where(safe[:, k], na[:, k] * nc[:, k], 1.0)
        m[:, k] = hyper.kappa * np.where(safe[:, k], dot[:, k] / denom, 0.0)
        tokens.append(S_k)
        dists.append(P_k)
        rho_raw[:, k] = r_k
        a.append(a_k)
        c.append(c_k)

    rho = rho_raw * slot_mask
    q = expit(m)
    num = np.sum(rho * np.log(q + hyper.eps), axis=1)
    den = np.sum(rho, axis=1) + hyper.eps
    gamma = np.exp(num / den)
    delta = expit((rho * (1.0 - q)) @ params.conflict_weights + float(params.conflict_bias))
    pair = X[:, dims.pair_index()]
    s = np.sum((pair @ params.base_bilinear) * T, axis=1)
    s_hat = calibrate_array(s, gamma, delta, hyper)

    return ForwardState(X=X, T=T, token_masks=token_masks, slot_mask=slot_mask,
                        const_mask=const_mask, tokens=tokens, dists=dists,
                        rho_raw=rho_raw, rho=rho, a=a, c=c, na=na, nc=nc, dot=dot,
                        safe=safe, m=m, q=q, num=num, den=den, gamma=gamma,
                        delta=delta, pair=pair, s=s, s_hat=s_hat)


def score_candidate(desc: PairDescriptor, script: Script, embedding: np.ndarray,
                    params: ModelParams,
                    slot_mask: np.ndarray | None = None) -> MatchResult:
    """Full scoring pipeline for one candidate.

    The script is taken as given (cached, virtual, or a hand-authored
    override), so its distributions are fed through the constant path.
    Virtual scripts may carry their own donor embedding for the base score.
    """
    X = extended_vector(desc, params.dims)[None, :]
    emb = embedding
    if script.virtual and script.embedding is not None:
        emb = script.embedding
    st = forward_batch(
        X, emb[None, :], params,
        const_mask=np.ones(1, dtype=bool),
        const_dists=[p[None, :] for p in script.distributions],
        const_rho=script.reliabilities[None, :],
        slot_mask=slot_mask)
    return MatchResult(compat=st.m[0].copy(), gamma=float(st.gamma[0]),
                       delta=float(st.delta[0]), s_base=float(st.s[0]),
                       s_hat=float(st.s_hat[0]))
