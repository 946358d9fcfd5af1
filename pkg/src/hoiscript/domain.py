"""Core domain types for script-based interaction detection.

Slot order is fixed everywhere: body_role, contact, geometry, affordance,
motion, object_state.  All numeric payloads are float64 numpy arrays.  The
flat parameter layout is documented on ModelParams and is the contract the
gradient checker and the checkpoint format both rely on.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

SLOT_NAMES = ("body_role", "contact", "geometry", "affordance", "motion", "object_state")
N_SLOTS = len(SLOT_NAMES)

# Named components of the geometry feature vector g.  d_g is pinned to this
# layout because the contact token mask picks out the two distance entries.
G_COMPONENTS = ("dx", "dy", "log_scale", "iou", "containment", "hand_dist", "head_dist")
G_IOU = 3
G_HAND_DIST = 5
G_HEAD_DIST = 6

SCENE_SCHEMA = "hoiscript.scenes"
PHRASE_SCHEMA = "hoiscript.phrases"
SCRIPT_SCHEMA = "hoiscript.scripts"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


@dataclass(frozen=True)
class SlotVocabulary:
    """Value names per slot, in slot order."""

    values: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.values) != N_SLOTS:
            raise ValueError(f"expected {N_SLOTS} slots, got {len(self.values)}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.values)

    def index(self, slot: int, value: str) -> int:
        return self.values[slot].index(value)

    @classmethod
    def default(cls) -> "SlotVocabulary":
        return cls((
            ("hand", "foot", "head", "mouth", "torso", "none"),
            ("none", "touch", "grasp", "mouth-contact", "tool-mediated"),
            ("overlapping", "adjacent", "near", "far"),
            ("graspable", "rideable", "wearable", "consumable", "operable", "inert"),
            ("static", "extend", "swing", "carry-like"),
            ("neutral", "held", "worn", "open", "cut", "filled"),
        ))

    def to_dict(self) -> dict:
        return {name: list(vals) for name, vals in zip(SLOT_NAMES, self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "SlotVocabulary":
        return cls(tuple(tuple(d[name]) for name in SLOT_NAMES))


@dataclass(eq=False)
class Phrase:
    """An interaction phrase (verb, object category) with a fixed embedding."""

    phrase_id: int
    verb: str
    object_category: str
    embedding: np.ndarray  # (d_t,), unit L2 norm

    @property
    def text(self) -> str:
        return f"{self.verb} {self.object_category}"

    def to_dict(self) -> dict:
        return {
            "phrase_id": self.phrase_id,
            "verb": self.verb,
            "object_category": self.object_category,
            "embedding": self.embedding.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Phrase":
        return cls(
            phrase_id=int(d["phrase_id"]),
            verb=d["verb"],
            object_category=d["object_category"],
            embedding=np.asarray(d["embedding"], dtype=np.float64),
        )


@dataclass(eq=False)
class Script:
    """Soft slot assignment for one phrase.

    distributions[k] is a categorical over vocabulary slot k; reliabilities[k]
    weighs how much slot k should count during matching.  Virtual scripts are
    synthesized contrast targets: they carry a donor embedding for the base
    scorer but are treated as constants by the gradient.
    """

    phrase_id: int
    distributions: tuple[np.ndarray, ...]  # len 6, each (V_k,)
    reliabilities: np.ndarray  # (6,), each in (0, 1)
    virtual: bool = False
    embedding: np.ndarray | None = None  # set for virtual scripts only

    def argmaxes(self) -> tuple[int, ...]:
        return tuple(int(np.argmax(p)) for p in self.distributions)

    def to_dict(self) -> dict:
        return {
            "phrase_id": self.phrase_id,
            "distributions": [p.tolist() for p in self.distributions],
            "reliabilities": self.reliabilities.tolist(),
            "virtual": self.virtual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Script":
        return cls(
            phrase_id=int(d["phrase_id"]),
            distributions=tuple(np.asarray(p, dtype=np.float64) for p in d["distributions"]),
            reliabilities=np.asarray(d["reliabilities"], dtype=np.float64),
            virtual=bool(d.get("virtual", False)),
        )


@dataclass(eq=False)
class PairDescriptor:
    """Visual evidence for one (human, object) pair.

    g follows the G_COMPONENTS layout.  r_ctx feeds the base scorer only and
    is excluded from every slot token mask.
    """

    f_h: np.ndarray  # (d_f,) human appearance
    f_o: np.ndarray  # (d_f,) object appearance
    f_u: np.ndarray  # (d_f,) union-region appearance
    p: np.ndarray  # (d_p,) pose tokens
    g: np.ndarray  # (d_g,) geometry features, named layout
    r_part: np.ndarray  # (d_r,) body-part crops
    r_ctx: np.ndarray  # (d_c,) scene context
    object_category: str

    def to_dict(self) -> dict:
        return {
            "f_h": self.f_h.tolist(),
            "f_o": self.f_o.tolist(),
            "f_u": self.f_u.tolist(),
            "p": self.p.tolist(),
            "g": self.g.tolist(),
            "r_part": self.r_part.tolist(),
            "r_ctx": self.r_ctx.tolist(),
            "object_category": self.object_category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairDescriptor":
        arr = lambda k: np.asarray(d[k], dtype=np.float64)
        return cls(arr("f_h"), arr("f_o"), arr("f_u"), arr("p"), arr("g"),
                   arr("r_part"), arr("r_ctx"), d["object_category"])


@dataclass(eq=False)
class StateTokens:
    """Per-slot visual tokens produced by the tokenizer, slot order."""

    tokens: tuple[np.ndarray, ...]  # len 6, each (d_s,)


@dataclass
class IntervalLabel:
    lower: float
    upper: float


@dataclass
class MatchResult:
    """Stored intermediates of scoring one candidate against one script."""

    compat: np.ndarray  # (6,) per-slot compatibility m^k
    gamma: float
    delta: float
    s_base: float
    s_hat: float

    def to_dict(self) -> dict:
        return {
            "compat": self.compat.tolist(),
            "gamma": self.gamma,
            "delta": self.delta,
            "s_base": self.s_base,
            "s_hat": self.s_hat,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchResult":
        return cls(np.asarray(d["compat"], dtype=np.float64),
                   float(d["gamma"]), float(d["delta"]),
                   float(d["s_base"]), float(d["s_hat"]))


@dataclass(frozen=True)
class ModelDims:
    """Dimension bundle everything downstream sizes itself from."""

    d_t: int = 32  # phrase embedding
    d_f: int = 16  # appearance features
    d_p: int = 8   # pose tokens
    d_g: int = 7   # geometry, pinned to G_COMPONENTS
    d_r: int = 12  # body-part crops
    d_c: int = 8   # scene context
    d_s: int = 16  # state tokens
    d_m: int = 16  # match space
    slot_sizes: tuple[int, ...] = SlotVocabulary.default().sizes
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.d_g != len(G_COMPONENTS):
            raise ValueError(f"d_g must be {len(G_COMPONENTS)} (named geometry layout)")
        if len(self.slot_sizes) != N_SLOTS:
            raise ValueError("slot_sizes must have one entry per slot")

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def d_x(self) -> int:
        """Extended descriptor: f_h, f_o, f_u, p, g, r_part, r_ctx, category one-hot."""
        return 3 * self.d_f + self.d_p + self.d_g + self.d_r + self.d_c + self.n_categories

    def field_slices(self) -> dict[str, slice]:
        sizes = [("f_h", self.d_f), ("f_o", self.d_f), ("f_u", self.d_f),
                 ("p", self.d_p), ("g", self.d_g), ("r_part", self.d_r),
                 ("r_ctx", self.d_c), ("category", self.n_categories)]
        out, off = {}, 0
        for name, size in sizes:
            out[name] = slice(off, off + size)
            off += size
        return out

    def pair_index(self) -> np.ndarray:
        """Indices of the base-scorer input (f_h, f_o, f_u, r_ctx) in the extended vector."""
        sl = self.field_slices()
        idx = []
        for name in ("f_h", "f_o", "f_u", "r_ctx"):
            idx.extend(range(sl[name].start, sl[name].stop))
        return np.asarray(idx, dtype=np.intp)

    @property
    def d_pair(self) -> int:
        return 3 * self.d_f + self.d_c

    def category_onehot(self, category: str) -> np.ndarray:
        v = np.zeros(self.n_categories)
        v[self.categories.index(category)] = 1.0
        return v


def extended_vector(desc: PairDescriptor, dims: ModelDims) -> np.ndarray:
    """Concatenate descriptor fields plus the category one-hot into one vector."""
    return np.concatenate([
        desc.f_h, desc.f_o, desc.f_u, desc.p, desc.g, desc.r_part, desc.r_ctx,
        dims.category_onehot(desc.object_category),
    ])


@dataclass
class Hyper:
    """Scoring and loss hyperparameters.  Not part of the flat parameter vector."""

    kappa: float = 4.0
    lambda_gamma: float = 1.0
    lambda_delta: float = 1.0
    alpha_lower: float = 0.9
    alpha_upper: float = 0.9
    tau: float = 0.5
    lambda_ipl: float = 1.0
    lambda_csc: float = 0.5
    lambda_align: float = 0.5
    eps: float = 1e-8

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        return cls(**d)


# Flat layout: fields in this order, per-slot fields iterating slots 0..5.
# Every array is raveled C-order.
PARAM_FIELDS = (
    ("token_weights", True),      # (d_x, d_s) per slot
    ("token_bias", True),         # (d_s,) per slot
    ("script_heads", True),       # (d_t, V_k) per slot
    ("reliability_weights", True),  # (d_t,) per slot
    ("state_proj", True),         # (d_s, d_m) per slot
    ("script_proj", True),        # (V_k, d_m) per slot
    ("conflict_weights", False),  # (6,)
    ("conflict_bias", False),     # scalar, stored as shape ()
    ("base_bilinear", False),     # (d_pair, d_t)
)


@dataclass(frozen=True)
class ParamField:
    name: str
    slot: int | None
    shape: tuple[int, ...]
    offset: int
    size: int


def param_layout(dims: ModelDims) -> list[ParamField]:
    shapes = {
        "token_weights": lambda k: (dims.d_x, dims.d_s),
        "token_bias": lambda k: (dims.d_s,),
        "script_heads": lambda k: (dims.d_t, dims.slot_sizes[k]),
        "reliability_weights": lambda k: (dims.d_t,),
        "state_proj": lambda k: (dims.d_s, dims.d_m),
        "script_proj": lambda k: (dims.slot_sizes[k], dims.d_m),
        "conflict_weights": lambda k: (N_SLOTS,),
        "conflict_bias": lambda k: (),
        "base_bilinear": lambda k: (dims.d_pair, dims.d_t),
    }
    layout, offset = [], 0
    for name, per_slot in PARAM_FIELDS:
        for k in range(N_SLOTS) if per_slot else (None,):
            shape = shapes[name](k)
            size = int(np.prod(shape)) if shape else 1
            layout.append(ParamField(name, k, shape, offset, size))
            offset += size
    return layout


@dataclass(eq=False)
class ModelParams:
    """All trainable weights.  Flattening follows PARAM_FIELDS order."""

    dims: ModelDims
    hyper: Hyper
    token_weights: list[np.ndarray]
    token_bias: list[np.ndarray]
    script_heads: list[np.ndarray]
    reliability_weights: list[np.ndarray]
    state_proj: list[np.ndarray]
    script_proj: list[np.ndarray]
    conflict_weights: np.ndarray
    conflict_bias: np.ndarray  # shape ()
    base_bilinear: np.ndarray

    @classmethod
    def zeros(cls, dims: ModelDims, hyper: Hyper | None = None) -> "ModelParams":
        h = hyper if hyper is not None else Hyper()
        return cls(
            dims=dims,
            hyper=h,
            token_weights=[np.zeros((dims.d_x, dims.d_s)) for _ in range(N_SLOTS)],
            token_bias=[np.zeros(dims.d_s) for _ in range(N_SLOTS)],
            script_heads=[np.zeros((dims.d_t, v)) for v in dims.slot_sizes],
            reliability_weights=[np.zeros(dims.d_t) for _ in range(N_SLOTS)],
            state_proj=[np.zeros((dims.d_s, dims.d_m)) for _ in range(N_SLOTS)],
            script_proj=[np.zeros((v, dims.d_m)) for v in dims.slot_sizes],
            conflict_weights=np.zeros(N_SLOTS),
            conflict_bias=np.zeros(()),
            base_bilinear=np.zeros((dims.d_pair, dims.d_t)),
        )

    def _field(self, name: str, slot: int | None) -> np.ndarray:
        value = getattr(self, name)
        return value[slot] if slot is not None else value

    def n_params(self) -> int:
        layout = param_layout(self.dims)
        return layout[-1].offset + layout[-1].size

    def flatten(self) -> np.ndarray:
        parts = [np.asarray(self._field(f.name, f.slot), dtype=np.float64).ravel()
                 for f in param_layout(self.dims)]
        return np.concatenate(parts)

    def unflatten(self, vec: np.ndarray) -> "ModelParams":
        """Inverse of flatten against this params object's dims and hyper."""
        layout = param_layout(self.dims)
        total = layout[-1].offset + layout[-1].size
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (total,):
            raise ValueError(f"expected flat vector of length {total}, got {vec.shape}")
        out = ModelParams.zeros(self.dims, self.hyper)
        for f in layout:
            chunk = vec[f.offset:f.offset + f.size].reshape(f.shape).copy()
            if f.slot is not None:
                getattr(out, f.name)[f.slot] = chunk
            else:
                setattr(out, f.name, chunk)
        return out

    def copy(self) -> "ModelParams":
        return self.unflatten(self.flatten())

    def owner_of(self, index: int) -> tuple[str, int | None]:
        """Field name and slot owning flat coordinate index, for check reports."""
        for f in param_layout(self.dims):
            if f.offset <= index < f.offset + f.size:
                return f.name, f.slot
        raise IndexError(index)


# ---------------------------------------------------------------------------
# Scenes


@dataclass(eq=False)
class PairSample:
    """One (human, object) pair with truth, labels, and per-phrase flags.

    latent, labels, affordance_ok align with the bank's phrase order.
    labels may drop latent positives but never invent them.
    """

    human_idx: int
    object_idx: int
    descriptor: PairDescriptor
    true_slots: tuple[int, ...]
    latent: np.ndarray  # (n_phrases,) int8, z
    labels: np.ndarray  # (n_phrases,) int8, y
    affordance_ok: np.ndarray  # (n_phrases,) int8

    def to_dict(self) -> dict:
        return {
            "human_idx": self.human_idx,
            "object_idx": self.object_idx,
            "descriptor": self.descriptor.to_dict(),
            "true_slots": list(self.true_slots),
            "latent": self.latent.tolist(),
            "labels": self.labels.tolist(),
            "affordance_ok": self.affordance_ok.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairSample":
        return cls(
            human_idx=int(d["human_idx"]),
            object_idx=int(d["object_idx"]),
            descriptor=PairDescriptor.from_dict(d["descriptor"]),
            true_slots=tuple(int(s) for s in d["true_slots"]),
            latent=np.asarray(d["latent"], dtype=np.int8),
            labels=np.asarray(d["labels"], dtype=np.int8),
            affordance_ok=np.asarray(d["affordance_ok"], dtype=np.int8),
        )


@dataclass(eq=False)
class SceneRecord:
    scene_id: int
    width: int
    height: int
    human_boxes: list[np.ndarray]  # (4,) xyxy each
    object_boxes: list[np.ndarray]
    object_categories: list[str]
    pairs: list[PairSample]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "width": self.width,
            "height": self.height,
            "human_boxes": [[float(v) for v in b] for b in self.human_boxes],
            "object_boxes": [[float(v) for v in b] for b in self.object_boxes],
            "object_categories": list(self.object_categories),
            "pairs": [p.to_dict() for p in self.pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneRecord":
        return cls(
            scene_id=int(d["scene_id"]),
            width=int(d["width"]),
            height=int(d["height"]),
            human_boxes=[np.asarray(b, dtype=np.float64) for b in d["human_boxes"]],
            object_boxes=[np.asarray(b, dtype=np.float64) for b in d["object_boxes"]],
            object_categories=list(d["object_categories"]),
            pairs=[PairSample.from_dict(p) for p in d["pairs"]],
        )


# ---------------------------------------------------------------------------
# Validation


def _check_finite(name: str, arr: np.ndarray, out: list[Violation]):
    if not np.all(np.isfinite(arr)):
        out.append(Violation("nonfinite-field", f"{name} contains non-finite values"))


def validate_script(script: Script, sizes: Sequence[int] | None = None) -> list[Violation]:
    out: list[Violation] = []
    if len(script.distributions) != N_SLOTS:
        out.append(Violation("slot-count-mismatch",
                             f"script has {len(script.distributions)} distributions"))
        return out
    for k, p in enumerate(script.distributions):
        _check_finite(f"distributions[{k}]", p, out)
        if sizes is not None and p.shape != (sizes[k],):
            out.append(Violation("distribution-size-mismatch",
                                 f"slot {k} has shape {p.shape}, expected ({sizes[k]},)"))
        if np.any(p < 0):
            out.append(Violation("distribution-negative", f"slot {k} has negative mass"))
        if abs(float(p.sum()) - 1.0) > 1e-9:
            out.append(Violation("distribution-not-normalized",
                                 f"slot {k} sums to {float(p.sum())!r}"))
    _check_finite("reliabilities", script.reliabilities, out)
    if script.reliabilities.shape != (N_SLOTS,):
        out.append(Violation("reliability-shape", f"{script.reliabilities.shape}"))
    elif np.any(script.reliabilities <= 0) or np.any(script.reliabilities >= 1):
        out.append(Violation("reliability-out-of-range", "rho must lie strictly in (0, 1)"))
    return out


def validate_phrase(phrase: Phrase, d_t: int | None = None) -> list[Violation]:
    out: list[Violation] = []
    _check_finite("embedding", phrase.embedding, out)
    if d_t is not None and phrase.embedding.shape != (d_t,):
        out.append(Violation("embedding-shape", f"{phrase.embedding.shape} != ({d_t},)"))
    norm = float(np.linalg.norm(phrase.embedding))
    if abs(norm - 1.0) > 1e-6:
        out.append(Violation("embedding-not-normalized", f"norm {norm!r}"))
    return out


def validate_descriptor(desc: PairDescriptor, dims: ModelDims | None = None) -> list[Violation]:
    out: list[Violation] = []
    fields = {"f_h": desc.f_h, "f_o": desc.f_o, "f_u": desc.f_u, "p": desc.p,
              "g": desc.g, "r_part": desc.r_part, "r_ctx": desc.r_ctx}
    for name, arr in fields.items():
        _check_finite(name, arr, out)
    if dims is not None:
        expect = {"f_h": dims.d_f, "f_o": dims.d_f, "f_u": dims.d_f, "p": dims.d_p,
                  "g": dims.d_g, "r_part": dims.d_r, "r_ctx": dims.d_c}
        for name, d in expect.items():
            if fields[name].shape != (d,):
                out.append(Violation("descriptor-shape", f"{name} is {fields[name].shape}"))
        if dims.categories and desc.object_category not in dims.categories:
            out.append(Violation("unknown-category", desc.object_category))
    if desc.g.shape == (len(G_COMPONENTS),):
        if not 0.0 <= float(desc.g[G_IOU]) <= 1.0:
            out.append(Violation("iou-out-of-range", f"{float(desc.g[G_IOU])!r}"))
        if float(desc.g[G_HAND_DIST]) < 0 or float(desc.g[G_HEAD_DIST]) < 0:
            out.append(Violation("geometry-negative-distance", "distances must be >= 0"))
    return out


def _box_in_bounds(box: np.ndarray, w: int, h: int) -> bool:
    x1, y1, x2, y2 = box
    return 0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h


def validate_scene(scene: SceneRecord, n_phrases: int | None = None,
                   slot_sizes: Sequence[int] | None = None) -> list[Violation]:
    out: list[Violation] = []
    for i, b in enumerate(scene.human_boxes):
        if not _box_in_bounds(b, scene.width, scene.height):
            out.append(Violation("box-out-of-bounds", f"human {i}: {list(b)}"))
    for i, b in enumerate(scene.object_boxes):
        if not _box_in_bounds(b, scene.width, scene.height):
            out.append(Violation("box-out-of-bounds", f"object {i}: {list(b)}"))
    if len(scene.object_boxes) != len(scene.object_categories):
        out.append(Violation("object-table-mismatch", "boxes and categories differ in length"))
    for j, pair in enumerate(scene.pairs):
        if not 0 <= pair.human_idx < len(scene.human_boxes):
            out.append(Violation("pair-index-out-of-range", f"pair {j} human {pair.human_idx}"))
        if not 0 <= pair.object_idx < len(scene.object_boxes):
            out.append(Violation("pair-index-out-of-range", f"pair {j} object {pair.object_idx}"))
        out.extend(validate_descriptor(pair.descriptor))
        if n_phrases is not None:
            for name, arr in (("latent", pair.latent), ("labels", pair.labels),
                              ("affordance_ok", pair.affordance_ok)):
                if arr.shape != (n_phrases,):
                    out.append(Violation("phrase-table-length-mismatch",
                                         f"pair {j} {name} has shape {arr.shape}"))
        if np.any(pair.labels > pair.latent):
            out.append(Violation("annotation-contradicts-latent",
                                 f"pair {j} has y=1 where z=0"))
        if slot_sizes is not None:
            for k, s in enumerate(pair.true_slots):
                if not 0 <= s < slot_sizes[k]:
                    out.append(Violation("slot-state-out-of-range", f"pair {j} slot {k}={s}"))
    return out


def validate_match_result(mr: MatchResult, hyper: Hyper) -> list[Violation]:
    out: list[Violation] = []
    _check_finite("compat", mr.compat, out)
    recomputed = mr.s_base + hyper.lambda_gamma * np.log(mr.gamma + hyper.eps) \
        - hyper.lambda_delta * mr.delta
    if abs(recomputed - mr.s_hat) > 1e-9:
        out.append(Violation("match-result-inconsistent",
                             f"stored s_hat {mr.s_hat!r}, recomputed {recomputed!r}"))
    return out


def validate(obj, **kwargs) -> list[Violation]:
    """Dispatching validator for the record types above."""
    if isinstance(obj, Script):
        return validate_script(obj, **kwargs)
    if isinstance(obj, Phrase):
        return validate_phrase(obj, **kwargs)
    if isinstance(obj, PairDescriptor):
        return validate_descriptor(obj, **kwargs)
    if isinstance(obj, SceneRecord):
        return validate_scene(obj, **kwargs)
    if isinstance(obj, MatchResult):
        return validate_match_result(obj, **kwargs)
    raise TypeError(f"no validator for {type(obj).__name__}")


# ---------------------------------------------------------------------------
# JSONL serialization
#
# First line is a header carrying the schema name and version; every later
# line is one record.  Floats round-trip exactly (repr-based json encoding).


class NumpyJSONEncoder(json.JSONEncoder):
    """Accept numpy scalars and arrays wherever plain ints/floats/lists go."""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def write_jsonl(path, schema: str, rows: Iterable[dict], meta: dict | None = None):
    header = {"schema": schema, "version": SCHEMA_VERSION}
    if meta:
        header.update(meta)
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True, cls=NumpyJSONEncoder) + "\n")
        for row in rows:
            f.write(json.dumps(row, sort_keys=True, cls=NumpyJSONEncoder) + "\n")


def read_jsonl(path, expect_schema: str | None = None) -> tuple[dict, list[dict]]:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file, expected a schema header line")
    header = json.loads(lines[0])
    if "schema" not in header:
        raise ValueError(f"{path}: first line is not a schema header")
    if expect_schema is not None and header["schema"] != expect_schema:
        raise ValueError(f"{path}: schema {header['schema']!r}, expected {expect_schema!r}")
    if header.get("version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {header.get('version')!r}")
    return header, [json.loads(ln) for ln in lines[1:]]


def write_scenes(path, scenes: Iterable[SceneRecord], meta: dict | None = None):
    write_jsonl(path, SCENE_SCHEMA, (s.to_dict() for s in scenes), meta)


def read_scenes(path) -> tuple[dict, list[SceneRecord]]:
    header, rows = read_jsonl(path, SCENE_SCHEMA)
    return header, [SceneRecord.from_dict(r) for r in rows]


def write_phrases(path, phrases: Iterable[Phrase], meta: dict | None = None):
    write_jsonl(path, PHRASE_SCHEMA, (p.to_dict() for p in phrases), meta)


def read_phrases(path) -> tuple[dict, list[Phrase]]:
    header, rows = read_jsonl(path, PHRASE_SCHEMA)
    return header, [Phrase.from_dict(r) for r in rows]


def write_scripts(path, scripts: Iterable[Script], meta: dict | None = None):
    write_jsonl(path, SCRIPT_SCHEMA, (s.to_dict() for s in scripts), meta)


def read_scripts(path) -> tuple[dict, list[Script]]:
    header, rows = read_jsonl(path, SCRIPT_SCHEMA)
    return header, [Script.from_dict(r) for r in rows]
