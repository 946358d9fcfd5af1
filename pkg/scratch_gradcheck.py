"""Scratch: early smoke test of the gradient machinery at tiny dims."""
import numpy as np

from hoiscript.domain import Hyper, ModelDims, ModelParams, Phrase, N_SLOTS
from hoiscript.bank import ScriptBank
from hoiscript.losses import Batch, ContrastSet, check_gradients

rng = np.random.default_rng(7)
dims = ModelDims(d_t=5, d_f=3, d_p=2, d_g=7, d_r=3, d_c=2, d_s=4, d_m=3,
                 slot_sizes=(3, 2, 4, 2, 3, 2), categories=("cup", "hat"))

params = ModelParams.zeros(dims, Hyper())
vec = rng.normal(scale=0.5, size=params.n_params())
params = params.unflatten(vec)

def unit(v):
    return v / np.linalg.norm(v)

phrases = [Phrase(i, f"v{i}", "cup" if i % 2 else "hat", unit(rng.normal(size=dims.d_t)))
           for i in range(4)]
bank = ScriptBank(phrases)
bank.refresh(params)

N = 6
X = rng.normal(size=(N, dims.d_x))
pids = rng.integers(0, 4, size=N)
T = np.stack([phrases[i].embedding for i in pids])
y = np.array([1, 1, 0, 0, 0, 1], dtype=np.int8)

# contrast sets: one anchor with mined counterfactuals (mix of real/virtual)
cfs = bank.counterfactuals(int(pids[0]), n=4, rng=np.random.default_rng(3))
print("counterfactuals:", [(s.phrase_id, s.virtual) for s in cfs])
embs = [s.embedding if s.virtual else phrases[s.phrase_id].embedding for s in cfs]
batch = Batch(X=X, T=T, y=y, phrase_ids=pids,
              contrasts=[ContrastSet(anchor=0, scripts=cfs, embeddings=embs)])

for bce in (False, True):
    rep = check_gradients(params, batch, bce_negatives=bce)
    print(f"bce={bce}:", {k: rep[k] for k in ("loss", "max_rel_err", "worst_field", "passed", "n_params")})

# drop-slot path
rep = check_gradients(params, batch, slot_mask=np.array([1, 0, 1, 1, 1, 1.0]))
print("drop contact:", rep["max_rel_err"], rep["passed"])

# real derived counterfactual: gradient must flow into script heads
batch2 = Batch(X=X, T=T, y=y, phrase_ids=pids,
               contrasts=[ContrastSet(anchor=2, scripts=[bank.script(1), bank.script(3)],
                                      embeddings=[phrases[1].embedding, phrases[3].embedding])])
rep = check_gradients(params, batch2)
print("real cf:", rep["max_rel_err"], rep["passed"])

# mixed composition: several anchors, empty set included
batch3 = Batch(X=X, T=T, y=y, phrase_ids=pids,
               contrasts=[ContrastSet(anchor=0, scripts=cfs, embeddings=embs),
                          ContrastSet(anchor=3, scripts=[bank.script(2)],
                                      embeddings=[phrases[2].embedding]),
                          ContrastSet(anchor=5, scripts=[], embeddings=[])])
rep = check_gradients(params, batch3, bce_negatives=False)
print("mixed:", rep["max_rel_err"], rep["passed"])
