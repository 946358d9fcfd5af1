"""Loss terms over scored batches and exact reverse-mode gradients.

The forward graph is matcher.forward_batch (tokenize, script heads, slot
compatibility, coverage, conflict, calibrated logit).  backward_batch
hand-accumulates vector-Jacobian products through that graph into per-field
gradients, and check_gradients verifies the whole thing coordinate by
coordinate against central finite differences.

Gradient conventions worth stating once:
  * the interval bounds are functions of coverage and conflict, and the
    gradient flows through them (the checker compares against the loss as
    actually computed, so there is no stop-gradient anywhere);
  * virtual contrast scripts are constants: their rows send gradient into
    the tokenizer and both projections, but not into script heads or
    reliability weights;
  * contrast sets are attached to the batch before differentiation, so the
    anchor selection rule never creates a discontinuity under perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from . import matcher
from .domain import Hyper, IntervalLabel, ModelParams, N_SLOTS, Script


def interval_bounds(gamma: float, delta: float, hyper: Hyper) -> IntervalLabel:
    """Pseudo-label interval for an unannotated candidate.

    gamma is clamped into [0, 1] (coverage can exceed 1 by at most eps).
    Bounds satisfy 0 <= lower <= upper <= 1 for any inputs in [0, 1].
    """
    g = min(max(gamma, 0.0), 1.0)
    lower = hyper.alpha_lower * g * (1.0 - delta)
    upper = 1.0 - hyper.alpha_upper * delta * (1.0 - g)
    return IntervalLabel(lower=lower, upper=upper)


@dataclass(eq=False)
class ContrastSet:
    """Counterfactual contrast attached to one anchor candidate.

    scripts may be real bank scripts or virtual perturbations; embeddings are
    resolved by the batch builder so the loss code never touches the bank.
    """

    anchor: int
    scripts: list[Script]
    embeddings: list[np.ndarray]


@dataclass(eq=False)
class Batch:
    """Candidates plus attached contrast sets, ready for scoring.

    X holds extended descriptors, T the phrase embeddings, y the annotation
    bits.  Candidates must be unique (one row per scene, pair, phrase).
    """

    X: np.ndarray  # (N, d_x)
    T: np.ndarray  # (N, d_t)
    y: np.ndarray  # (N,) int8
    phrase_ids: np.ndarray  # (N,)
    contrasts: list[ContrastSet] = field(default_factory=list)

    @property
    def n_candidates(self) -> int:
        return int(self.X.shape[0])


def _assemble(params: ModelParams, batch: Batch,
              slot_mask: np.ndarray | None):
    """Stack candidates and contrast items into one forward_batch call.

    Returns the forward state plus, per contrast set, the absolute row
    indices of its items.
    """
    dims = params.dims
    N = batch.n_candidates
    n_extra = sum(len(cs.scripts) for cs in batch.contrasts)
    M = N + n_extra

    X = np.empty((M, dims.d_x))
    T = np.empty((M, dims.d_t))
    X[:N] = batch.X
    T[:N] = batch.T
    const_mask = np.zeros(M, dtype=bool)
    const_dists = [np.zeros((M, v)) for v in dims.slot_sizes]
    const_rho = np.zeros((M, N_SLOTS))

    cf_rows: list[list[int]] = []
    row = N
    for cs in batch.contrasts:
        rows = []
        for script, emb in zip(cs.scripts, cs.embeddings):
            X[row] = X[cs.anchor]
            T[row] = emb
            if script.virtual:
                const_mask[row] = True
                for k in range(N_SLOTS):
                    const_dists[k][row] = script.distributions[k]
                const_rho[row] = script.reliabilities
            rows.append(row)
            row += 1
        cf_rows.append(rows)

    state = matcher.forward_batch(
        X, T, params,
        const_mask=const_mask,
        const_dists=const_dists if const_mask.any() else None,
        const_rho=const_rho if const_mask.any() else None,
        slot_mask=slot_mask)
    return state, cf_rows


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _contrast_index(batch: Batch, cf_rows):
    """Padded (set, item) index matrix over non-empty contrast sets.

    Column 0 is the anchor row; mask marks valid entries.  Returns
    (None, None) when no set has any contrast item.
    """
    filled = [(cs.anchor, rows) for cs, rows in zip(batch.contrasts, cf_rows) if rows]
    if not filled:
        return None, None
    width = 1 + max(len(rows) for _, rows in filled)
    idx = np.zeros((len(filled), width), dtype=np.int64)
    mask = np.zeros((len(filled), width), dtype=bool)
    for i, (anchor, rows) in enumerate(filled):
        idx[i, 0] = anchor
        idx[i, 1:1 + len(rows)] = rows
        mask[i, :1 + len(rows)] = True
    return idx, mask


def loss_terms(params: ModelParams, batch: Batch,
               slot_mask: np.ndarray | None = None,
               bce_negatives: bool = False):
    """All loss terms and the assembled forward state.

    Returns (parts, state, cf_rows).  parts holds unweighted term values plus
    the hyper-weighted total; empty index sets contribute exactly 0.
    """
    h = params.hyper
    state, cf_rows = _assemble(params, batch, slot_mask)
    N = batch.n_candidates
    pos = np.flatnonzero(batch.y == 1)
    unl = np.flatnonzero(batch.y == 0)
    s_hat = state.s_hat

    l_hoi = float(np.mean(_softplus(-s_hat[pos]))) if pos.size else 0.0
    l_neg = 0.0
    if bce_negatives and unl.size:
        l_neg = float(np.mean(_softplus(s_hat[unl])))

    l_ipl = 0.0
    if unl.size:
        p = expit(s_hat[unl])
        g_c = np.minimum(state.gamma[unl], 1.0)
        d = state.delta[unl]
        lower = h.alpha_lower * g_c * (1.0 - d)
        upper = 1.0 - h.alpha_upper * d * (1.0 - g_c)
        l_ipl = float(np.mean(np.maximum(0.0, lower - p) ** 2
                              + np.maximum(0.0, p - upper) ** 2))

    l_csc = 0.0
    if batch.contrasts:
        idx, mask = _contrast_index(batch, cf_rows)
        if idx is not None:
            z = np.where(mask, s_hat[idx] / h.tau, -np.inf)
            zmax = z.max(axis=1)
            lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
            l_csc = float((lse - z[:, 0]).sum()) / len(batch.contrasts)

    l_align = 0.0
    if pos.size:
        l_align = float(np.mean(-np.log(state.gamma[pos] + h.eps)
                                - np.log(1.0 - state.delta[pos] + h.eps)))

    total = (l_hoi + l_neg + h.lambda_ipl * l_ipl
             + h.lambda_csc * l_csc + h.lambda_align * l_align)
    parts = {"hoi": l_hoi, "hoi_neg": l_neg, "ipl": l_ipl, "csc": l_csc,
             "align": l_align, "total": total}
    return parts, state, cf_rows


def loss_total(params: ModelParams, batch: Batch,
               slot_mask: np.ndarray | None = None,
               bce_negatives: bool = False) -> tuple[float, dict]:
    parts, _, _ = loss_terms(params, batch, slot_mask, bce_negatives)
    return parts["total"], parts


def _loss_adjoints(params: ModelParams, batch: Batch, state, cf_rows,
                   bce_negatives: bool):
    """d total / d (s_hat, gamma, delta) per assembled row.

    gamma and delta receive only the direct paths here; the indirect path
    through s_hat is handled inside backward_batch.
    """
    h = params.hyper
    M = state.s_hat.shape[0]
    g_hat = np.zeros(M)
    g_gam = np.zeros(M)
    g_del = np.zeros(M)
    pos = np.flatnonzero(batch.y == 1)
    unl = np.flatnonzero(batch.y == 0)

    if pos.size:
        g_hat[pos] += (expit(state.s_hat[pos]) - 1.0) / pos.size
    if bce_negatives and unl.size:
        g_hat[unl] += expit(state.s_hat[unl]) / unl.size

    if unl.size and h.lambda_ipl != 0.0:
        p = expit(state.s_hat[unl])
        g_c = np.minimum(state.gamma[unl], 1.0)
        d = state.delta[unl]
        lower = h.alpha_lower * g_c * (1.0 - d)
        upper = 1.0 - h.alpha_upper * d * (1.0 - g_c)
        a = np.maximum(0.0, lower - p)
        b = np.maximum(0.0, p - upper)
        w = h.lambda_ipl / unl.size
        g_hat[unl] += w * (2.0 * b - 2.0 * a) * p * (1.0 - p)
        g_lower = 2.0 * a * w
        g_upper = -2.0 * b * w
        g_gc = g_lower * h.alpha_lower * (1.0 - d) + g_upper * h.alpha_upper * d
        g_gam[unl] += g_gc * (state.gamma[unl] < 1.0)
        g_del[unl] += (g_lower * (-h.alpha_lower * g_c)
                       + g_upper * (-h.alpha_upper * (1.0 - g_c)))

    if batch.contrasts and h.lambda_csc != 0.0:
        w = h.lambda_csc / len(batch.contrasts)
        idx, mask = _contrast_index(batch, cf_rows)
        if idx is not None:
            z = np.where(mask, state.s_hat[idx] / h.tau, -np.inf)
            zmax = z.max(axis=1)
            lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
            grad = np.where(mask, np.exp(z - lse[:, None]), 0.0) / h.tau
            grad[:, 0] -= 1.0 / h.tau
            np.add.at(g_hat, idx[mask], w * grad[mask])

    if pos.size and h.lambda_align != 0.0:
        w = h.lambda_align / pos.size
        g_gam[pos] += w * (-1.0 / (state.gamma[pos] + h.eps))
        g_del[pos] += w * (1.0 / (1.0 - state.delta[pos] + h.eps))

    return g_hat, g_gam, g_del


def backward_batch(params: ModelParams, state, g_hat: np.ndarray,
                   g_gam_direct: np.ndarray, g_del_direct: np.ndarray) -> ModelParams:
    """Reverse-mode accumulation through the scoring graph.

    Takes adjoints at (s_hat, gamma, delta) and returns gradients shaped like
    the parameters (hyper fields are untouched metadata).
    """
    h = params.hyper
    grads = ModelParams.zeros(params.dims, h)

    g_gam = g_gam_direct + g_hat * h.lambda_gamma / (state.gamma + h.eps)
    g_del = g_del_direct - g_hat * h.lambda_delta

    # base logit s = sum((pair @ B) * T)
    grads.base_bilinear = state.pair.T @ (state.T * g_hat[:, None])

    # conflict delta = sigmoid(r @ w + b), r = rho * (1 - q)
    g_z = g_del * state.delta * (1.0 - state.delta)
    r = state.rho * (1.0 - state.q)
    grads.conflict_weights = r.T @ g_z
    grads.conflict_bias = np.asarray(g_z.sum())
    g_r = g_z[:, None] * params.conflict_weights[None, :]

    # coverage gamma = exp(num / den)
    g_e = g_gam * state.gamma
    g_num = g_e / state.den
    g_den = -g_e * state.num / state.den ** 2
    logq = np.log(state.q + h.eps)
    g_rho = g_num[:, None] * logq + g_den[:, None]
    g_q = g_num[:, None] * state.rho / (state.q + h.eps)

    g_rho += g_r * (1.0 - state.q)
    g_q -= g_r * state.rho
    g_m = g_q * state.q * (1.0 - state.q)

    real = ~state.const_mask
    for k in range(N_SLOTS):
        a, c = state.a[k], state.c[k]
        na, nc = state.na[:, k], state.nc[:, k]
        dot, safe = state.dot[:, k], state.safe[:, k]
        coef = g_m[:, k] * h.kappa * np.where(safe, 1.0, 0.0) \
            / np.where(safe, na * nc, 1.0)
        ratio_a = np.divide(dot, na * na, out=np.zeros_like(dot), where=safe)
        ratio_c = np.divide(dot, nc * nc, out=np.zeros_like(dot), where=safe)
        g_a = coef[:, None] * c - (coef * ratio_a)[:, None] * a
        g_c = coef[:, None] * a - (coef * ratio_c)[:, None] * c

        grads.state_proj[k] = state.tokens[k].T @ g_a
        g_token = g_a @ params.state_proj[k].T
        grads.script_proj[k] = state.dists[k].T @ g_c
        g_dist = g_c @ params.script_proj[k].T

        xm = state.X * state.token_masks[k]
        grads.token_weights[k] = xm.T @ g_token
        grads.token_bias[k] = g_token.sum(axis=0)

        # softmax head and reliability head: real scripts only
        g_dist_real = np.where(real[:, None], g_dist, 0.0)
        p_k = state.dists[k]
        g_logits = p_k * (g_dist_real - np.sum(g_dist_real * p_k, axis=1, keepdims=True))
        grads.script_heads[k] = state.T.T @ g_logits

        rho_raw = state.rho_raw[:, k]
        g_rho_raw = np.where(real, g_rho[:, k] * state.slot_mask[k], 0.0)
        g_u = g_rho_raw * rho_raw * (1.0 - rho_raw)
        grads.reliability_weights[k] = state.T.T @ g_u

    return grads


def grad_total(params: ModelParams, batch: Batch,
               slot_mask: np.ndarray | None = None,
               bce_negatives: bool = False):
    """Total loss, its parts, and the exact flat gradient."""
    parts, state, cf_rows = loss_terms(params, batch, slot_mask, bce_negatives)
    g_hat, g_gam, g_del = _loss_adjoints(params, batch, state, cf_rows, bce_negatives)
    grads = backward_batch(params, state, g_hat, g_gam, g_del)
    return parts["total"], parts, grads.flatten()


def check_gradients(params: ModelParams, batch: Batch,
                    step: float = 1e-5, tol: float = 1e-4,
                    slot_mask: np.ndarray | None = None,
                    bce_negatives: bool = False) -> dict:
    """Central-difference verification of grad_total, every coordinate.

    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator so
    coordinates with no influence compare cleanly.
    """
    total, _, grad = grad_total(params, batch, slot_mask, bce_negatives)
    theta = params.flatten()
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = step
        up, _ = loss_total(params.unflatten(theta + bump), batch, slot_mask, bce_negatives)
        dn, _ = loss_total(params.unflatten(theta - bump), batch, slot_mask, bce_negatives)
        fd[i] = (up - dn) / (2.0 * step)
    rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
    worst = int(np.argmax(rel))
    field_name, slot = params.owner_of(worst)
    return {
        "loss": float(total),
        "n_params": int(theta.size),
        "step": step,
        "tol": tol,
        "max_rel_err": float(rel[worst]),
        "worst_field": field_name if slot is None else f"{field_name}[{slot}]",
        "worst_index": worst,
        "passed": bool(rel[worst] < tol),
    }
