"""Per-slot visual state tokens.

Each slot reads a declared subset of the descriptor through a fixed 0/1 mask
and applies its own affine map.  Masking happens on the extended descriptor
vector, so the affine weights over masked-out entries are inert by
construction.  r_ctx is visible to no slot; it feeds the base scorer only.
"""

from __future__ import annotations

import numpy as np

from .domain import (G_HAND_DIST, G_HEAD_DIST, N_SLOTS, SLOT_NAMES, ModelDims,
                     ModelParams, PairDescriptor, StateTokens, extended_vector)

# Field subsets each slot token may read.  "g:distances" means only the two
# normalized distance components of g, not the box-derived entries.
SLOT_INPUT_FIELDS: dict[str, tuple[str, ...]] = {
    "body_role": ("p", "r_part"),
    "contact": ("g:distances", "r_part", "f_u"),
    "geometry": ("g",),
    "affordance": ("f_o", "category"),
    "motion": ("p", "r_part"),
    "object_state": ("f_o", "f_u"),
}


def input_mask(dims: ModelDims) -> np.ndarray:
    """(6, d_x) 0/1 matrix; row k masks the extended descriptor for slot k."""
    slices = dims.field_slices()
    masks = np.zeros((N_SLOTS, dims.d_x))
    for k, slot in enumerate(SLOT_NAMES):
        for spec in SLOT_INPUT_FIELDS[slot]:
            if spec == "g:distances":
                g = slices["g"]
                masks[k, g.start + G_HAND_DIST] = 1.0
                masks[k, g.start + G_HEAD_DIST] = 1.0
            else:
                masks[k, slices[spec]] = 1.0
    return masks


def slot_fields(slot: str) -> tuple[str, ...]:
    """Declared descriptor fields for one slot, by name."""
    return SLOT_INPUT_FIELDS[slot]


def tokenize_extended(x: np.ndarray, params: ModelParams,
                      masks: np.ndarray | None = None) -> StateTokens:
    """Tokens from an already-extended descriptor vector."""
    if masks is None:
        masks = input_mask(params.dims)
    tokens = []
    for k in range(N_SLOTS):
        xm = x * masks[k]
        tokens.append(xm @ params.token_weights[k] + params.token_bias[k])
    return StateTokens(tuple(tokens))


def tokenize(desc: PairDescriptor, params: ModelParams) -> StateTokens:
    """Per-slot state tokens S^k for one descriptor."""
    return tokenize_extended(extended_vector(desc, params.dims), params)
