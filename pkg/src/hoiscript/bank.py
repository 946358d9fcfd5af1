"""Phrase bank: derived soft scripts, cached, plus counterfactual mining.

Scripts are derived from phrase embeddings through the per-slot script heads
and reliability weights; the cache must be refreshed whenever those change.
Hand-authored override scripts take precedence over derivation, which lets
tests pin exact slot distributions for fixture phrases.

Embeddings arrive with the phrase table (the synthetic world builds them);
the bank never invents its own.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, softmax

from .domain import N_SLOTS, ModelParams, Phrase, Script


def derive_script(params: ModelParams, phrase: Phrase) -> Script:
    """Soft slot distributions and reliabilities for one phrase."""
    t = phrase.embedding
    dists = tuple(softmax(t @ params.script_heads[k]) for k in range(N_SLOTS))
    rho = expit(np.array([t @ params.reliability_weights[k] for k in range(N_SLOTS)]))
    return Script(phrase_id=phrase.phrase_id, distributions=dists, reliabilities=rho)


def _runner_up(p: np.ndarray) -> int:
    # second-largest mass; ties resolved by lower index via stable argsort
    order = np.argsort(-p, kind="stable")
    return int(order[1])


def _differs_only_in(args_a: tuple[int, ...], args_b: tuple[int, ...], k: int) -> bool:
    if args_a[k] == args_b[k]:
        return False
    return all(args_a[j] == args_b[j] for j in range(len(args_a)) if j != k)


class ScriptBank:
    """Phrase table with a script cache keyed by position == phrase_id."""

    def __init__(self, phrases: list[Phrase], overrides: dict[int, Script] | None = None):
        for i, ph in enumerate(phrases):
            if ph.phrase_id != i:
                raise ValueError(f"phrase at position {i} has id {ph.phrase_id}; "
                                 "ids must be contiguous positions")
        self.phrases = list(phrases)
        self.overrides = dict(overrides or {})
        self._cache: list[Script] | None = None
        self._embedding_matrix: np.ndarray | None = None
        self._argmaxes: list[tuple] | None = None
        self._pools: dict | None = None

    def __len__(self) -> int:
        return len(self.phrases)

    @property
    def embedding_matrix(self) -> np.ndarray:
        if self._embedding_matrix is None:
            self._embedding_matrix = np.stack([p.embedding for p in self.phrases])
        return self._embedding_matrix

    def refresh(self, params: ModelParams) -> None:
        """Recompute every cached script under the current parameters."""
        self._cache = [self.overrides.get(ph.phrase_id) or derive_script(params, ph)
                       for ph in self.phrases]
        self._argmaxes = [sc.argmaxes() for sc in self._cache]
        self._pools = {}

    def _pool(self, phrase_id: int, k: int):
        """Real phrases whose script argmaxes differ from the anchor's only
        at slot k, split into (same object category, any category)."""
        key = (phrase_id, k)
        cached = self._pools.get(key)
        if cached is not None:
            return cached
        anchor_args = self._argmaxes[phrase_id]
        cat = self.phrases[phrase_id].object_category
        candidates = [pid for pid, args in enumerate(self._argmaxes)
                      if pid != phrase_id and _differs_only_in(args, anchor_args, k)]
        same_object = [pid for pid in candidates
                       if self.phrases[pid].object_category == cat]
        out = (same_object, candidates)
        self._pools[key] = out
        return out

    @property
    def scripts(self) -> list[Script]:
        if self._cache is None:
            raise RuntimeError("script cache is empty; call refresh(params) first")
        return self._cache

    def script(self, phrase_id: int) -> Script:
        return self.scripts[phrase_id]

    def counterfactuals(self, phrase_id: int, n: int = 4,
                        rng: np.random.Generator | None = None) -> list[Script]:
        """Contrast scripts differing from the anchor in exactly one slot argmax.

        Slots are drawn without replacement with probability proportional to
        the anchor's reliabilities.  For each drawn slot, a real bank phrase
        whose script differs from the anchor's only there is preferred (same
        object category first); otherwise a virtual one-hot perturbation of
        the anchor is synthesized.  May return fewer than n items when fewer
        than n slots can move.
        """
        if rng is None:
            rng = np.random.default_rng(0)
        anchor = self.script(phrase_id)

        weights = anchor.reliabilities.astype(np.float64).copy()
        for k in range(N_SLOTS):
            if anchor.distributions[k].shape[0] < 2:
                weights[k] = 0.0  # nowhere to move the mass

        out: list[Script] = []
        for _ in range(min(n, N_SLOTS)):
            total = float(weights.sum())
            if total <= 0.0:
                break
            k = int(rng.choice(N_SLOTS, p=weights / total))
            weights[k] = 0.0

            same_object, candidates = self._pool(phrase_id, k)
            pool = same_object if same_object else candidates
            if pool:
                pid = int(rng.choice(pool))
                sc = self.script(pid)
                if pid in self.overrides:
                    # hand-authored scripts are constants; flag them so the
                    # gradient treats the whole script as a fixed target
                    sc = Script(phrase_id=pid,
                                distributions=tuple(p.copy() for p in sc.distributions),
                                reliabilities=sc.reliabilities.copy(),
                                virtual=True, embedding=self.phrases[pid].embedding)
                out.append(sc)
            else:
                dists = [p.copy() for p in anchor.distributions]
                onehot = np.zeros_like(dists[k])
                onehot[_runner_up(anchor.distributions[k])] = 1.0
                dists[k] = onehot
                out.append(Script(phrase_id=phrase_id, distributions=tuple(dists),
                                  reliabilities=anchor.reliabilities.copy(),
                                  virtual=True,
                                  embedding=self.phrases[phrase_id].embedding))
        return out
