"""Seeded synthetic interaction world.

Each scene holds a few humans and objects with axis-aligned boxes.  Every
(human, object) pair carries one ground-truth state per slot; the latent
interaction truth z for a phrase is *defined* as category match plus
satisfaction of the verb's required/forbidden slot states, and annotations y
drop latent positives independently at a fixed miss rate.  Descriptors are a
fixed seeded linear render of slot one-hots, box geometry, and category with
isotropic Gaussian noise on top, built so that at zero noise every slot state
is linearly decodable from the fields that slot's tokenizer mask exposes.

Consistency rules the renderer maintains:
  * contact other than "none" only occurs at overlapping/adjacent geometry,
  * geometry truth is always re-derived from the realized boxes, so boxes and
    the geometry slot can never disagree even when placement had to clamp,
  * the hand distance channel equals box gap plus a fixed offset whenever
    contact is "none", which keeps near/far decodable from geometry features.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    G_COMPONENTS,
    G_HAND_DIST,
    G_HEAD_DIST,
    G_IOU,
    SLOT_NAMES,
    ModelDims,
    PairDescriptor,
    PairSample,
    Phrase,
    SceneRecord,
    SlotVocabulary,
)
from .seeding import child_rng

# geometry band constants, as fractions of the image diagonal; pairs whose
# realized boxes land between bands are not emitted, so every geometry class
# keeps a positive feature-space margin
NEAR_GAP = (0.036, 0.084)
FAR_GAP = (0.141, 0.60)
NEAR_MAX = 0.085
FAR_MIN = 0.14
ADJ_IOU_MIN = 2e-3
HAND_OFFSET = 0.045       # hand distance = gap + offset when contact is none
HEAD_OFFSET = 0.06


@dataclass(frozen=True)
class VerbSpec:
    """Slot requirements that define when a verb truly applies."""

    required: dict          # slot name -> required value name
    forbidden: dict = field(default_factory=dict)   # slot name -> tuple of banned value names


@dataclass
class Rulebook:
    vocab: SlotVocabulary
    categories: tuple
    affordances: dict       # category -> tuple of verbs, in phrase order
    verbs: dict             # verb -> VerbSpec
    category_affordance: dict   # category -> affordance value name
    object_sizes: dict      # category -> (w_lo, w_hi, h_lo, h_hi) in pixels
    paraphrases: dict = field(default_factory=dict)  # alias verb -> base verb
    image_size: tuple = (1024, 768)
    p_interact: float = 0.85
    noise_sigma: float = 0.05
    contact_gain: float = 0.35   # contact one-hot scale inside f_u
    state_gain: float = 0.45     # object-state one-hot scale in renders
    embed_noise: float = 0.25    # verb/object identity scale in phrase embeddings

    def phrase_pairs(self):
        """Ordered (verb, category) list; position is the phrase id."""
        return [(v, c) for c in self.categories for v in self.affordances[c]]

    def required_indices(self, verb):
        spec = self.verbs[verb]
        out = {}
        for slot_name, value in spec.required.items():
            k = SLOT_NAMES.index(slot_name)
            out[k] = self.vocab.values[k].index(value)
        return out

    def forbidden_indices(self, verb):
        spec = self.verbs[verb]
        out = {}
        for slot_name, values in spec.forbidden.items():
            k = SLOT_NAMES.index(slot_name)
            out[k] = tuple(self.vocab.values[k].index(v) for v in values)
        return out

    def validate(self):
        """Raise on structural defects; return the list of dead phrases
        (phrases whose verb requirements are self-contradictory)."""
        for cat in self.categories:
            if cat not in self.affordances:
                raise ValueError(f"category {cat!r} has no affordance list")
            if cat not in self.category_affordance:
                raise ValueError(f"category {cat!r} has no affordance value")
            if cat not in self.object_sizes:
                raise ValueError(f"category {cat!r} has no size range")
            for verb in self.affordances[cat]:
                if verb not in self.verbs:
                    raise ValueError(f"phrase verb {verb!r} is not defined")
        for verb, spec in self.verbs.items():
            for slot_name in list(spec.required) + list(spec.forbidden):
                if slot_name not in SLOT_NAMES:
                    raise ValueError(f"{verb!r}: unknown slot {slot_name!r}")
            self.required_indices(verb)   # raises on unknown value names
            self.forbidden_indices(verb)
        for alias, base in self.paraphrases.items():
            if alias not in self.verbs or base not in self.verbs:
                raise ValueError(f"paraphrase {alias!r} -> {base!r}: unknown verb")
        dead = []
        for pid, (verb, cat) in enumerate(self.phrase_pairs()):
            req = self.required_indices(verb)
            forb = self.forbidden_indices(verb)
            if any(req.get(k) in banned for k, banned in forb.items()):
                dead.append((pid, verb, cat))
        return dead

    def to_dict(self) -> dict:
        return {
            "schema": RULEBOOK_SCHEMA,
            "version": 1,
            "vocab": self.vocab.to_dict(),
            "categories": list(self.categories),
            "affordances": {c: list(v) for c, v in self.affordances.items()},
            "verbs": {
                v: {"required": dict(s.required),
                    "forbidden": {k: list(vals) for k, vals in s.forbidden.items()}}
                for v, s in self.verbs.items()
            },
            "category_affordance": dict(self.category_affordance),
            "object_sizes": {c: list(s) for c, s in self.object_sizes.items()},
            "paraphrases": dict(self.paraphrases),
            "image_size": list(self.image_size),
            "p_interact": self.p_interact,
            "noise_sigma": self.noise_sigma,
            "contact_gain": self.contact_gain,
            "state_gain": self.state_gain,
            "embed_noise": self.embed_noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Rulebook":
        if d.get("schema", RULEBOOK_SCHEMA) != RULEBOOK_SCHEMA:
            raise ValueError(f"not a rulebook file: schema {d.get('schema')!r}")
        if d.get("version", 1) != 1:
            raise ValueError(f"unsupported rulebook version {d.get('version')!r}")
        return cls(
            vocab=SlotVocabulary.from_dict(d["vocab"]),
            categories=tuple(d["categories"]),
            affordances={c: tuple(v) for c, v in d["affordances"].items()},
            verbs={
                v: VerbSpec(dict(s["required"]),
                            {k: tuple(vals) for k, vals in s.get("forbidden", {}).items()})
                for v, s in d["verbs"].items()
            },
            category_affordance=dict(d["category_affordance"]),
            object_sizes={c: tuple(s) for c, s in d["object_sizes"].items()},
            paraphrases=dict(d.get("paraphrases", {})),
            image_size=tuple(d.get("image_size", (1024, 768))),
            p_interact=float(d.get("p_interact", 0.85)),
            noise_sigma=float(d.get("noise_sigma", 0.05)),
            contact_gain=float(d.get("contact_gain", 0.35)),
            state_gain=float(d.get("state_gain", 0.45)),
            embed_noise=float(d.get("embed_noise", 0.25)),
        )


RULEBOOK_SCHEMA = "hoiscript/rulebook"


def load_rulebook(path) -> Rulebook:
    with open(path) as f:
        return Rulebook.from_dict(json.load(f))


def save_rulebook(path, rulebook: Rulebook):
    with open(path, "w") as f:
        json.dump(rulebook.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def default_rulebook() -> Rulebook:
    vocab = SlotVocabulary.default()
    categories = (
        "cup", "bicycle", "hat", "cake",
        "television", "knife", "apple", "backpack",
    )
    affordances = {
        "cup": ("hold", "drink-from", "carry", "grip", "sip"),
        "bicycle": ("ride", "push", "repair", "mount"),
        "hat": ("wear", "hold", "carry"),
        "cake": ("cut", "eat", "hold", "carry"),
        "television": ("look-at", "repair", "inspect", "tap"),
        "knife": ("hold", "carry", "grip", "inspect"),
        "apple": ("eat", "hold", "carry", "cut"),
        "backpack": ("wear", "carry", "hold", "tap"),
    }
    verbs = {
        "hold": VerbSpec(
            {"body_role": "hand", "contact": "grasp", "object_state": "held"},
            {"geometry": ("far",)},
        ),
        # paraphrase of hold: same truth conditions, near-duplicate embedding
        "grip": VerbSpec(
            {"body_role": "hand", "contact": "grasp", "object_state": "held"},
            {"geometry": ("far",)},
        ),
        "drink-from": VerbSpec(
            {"body_role": "mouth", "contact": "mouth-contact", "object_state": "filled"},
            {"geometry": ("far",)},
        ),
        "carry": VerbSpec(
            {"body_role": "hand", "contact": "grasp", "motion": "carry-like"},
            {"geometry": ("far",)},
        ),
        "ride": VerbSpec(
            {"body_role": "torso", "contact": "touch", "geometry": "overlapping"},
        ),
        "push": VerbSpec(
            {"body_role": "hand", "contact": "touch", "motion": "extend"},
        ),
        "repair": VerbSpec(
            {"body_role": "hand", "contact": "tool-mediated", "object_state": "open"},
        ),
        "wear": VerbSpec(
            {"contact": "touch", "geometry": "overlapping", "object_state": "worn"},
            {"body_role": ("none", "foot")},
        ),
        "cut": VerbSpec(
            {"body_role": "hand", "contact": "tool-mediated", "object_state": "cut"},
        ),
        "eat": VerbSpec(
            {"body_role": "mouth", "contact": "mouth-contact"},
            {"geometry": ("far",)},
        ),
        "look-at": VerbSpec(
            {"body_role": "head", "contact": "none"},
            {"geometry": ("overlapping",)},
        ),
        # compositional reuse of existing slot values keeps most required
        # values multiply covered, so whole verbs can be held out without
        # orphaning any value
        "mount": VerbSpec(
            {"body_role": "torso", "contact": "touch", "geometry": "adjacent"},
        ),
        "inspect": VerbSpec(
            {"body_role": "head", "contact": "none", "geometry": "near"},
        ),
        "sip": VerbSpec(
            {"body_role": "mouth", "contact": "mouth-contact", "object_state": "held"},
            {"geometry": ("far",)},
        ),
        "tap": VerbSpec(
            {"body_role": "hand", "contact": "touch"},
        ),
    }
    category_affordance = {
        "cup": "graspable",
        "bicycle": "rideable",
        "hat": "wearable",
        "cake": "consumable",
        "television": "operable",
        "knife": "graspable",
        "apple": "consumable",
        "backpack": "wearable",
    }
    object_sizes = {
        "cup": (40, 62, 50, 78),
        "bicycle": (170, 230, 100, 140),
        "hat": (56, 92, 34, 60),
        "cake": (70, 120, 48, 82),
        "television": (120, 190, 90, 140),
        "knife": (54, 92, 16, 30),
        "apple": (30, 48, 30, 48),
        "backpack": (70, 120, 84, 136),
    }
    return Rulebook(
        vocab=vocab,
        categories=categories,
        affordances=affordances,
        verbs=verbs,
        category_affordance=category_affordance,
        object_sizes=object_sizes,
        paraphrases={"grip": "hold"},
    )


# ---------------------------------------------------------------------------
# phrase table and embeddings

def build_phrases(rulebook: Rulebook, dims: ModelDims, seed: int):
    """Phrase list with unit embeddings: a verb half shared across objects of
    the same verb and an object half shared across verbs of the same object,
    plus a small phrase-specific random part."""
    rng = child_rng(seed, "embed")
    vocab = rulebook.vocab
    slot_sizes = [len(v) for v in vocab.values]
    verb_dim = sum(slot_sizes)
    n_aff = slot_sizes[SLOT_NAMES.index("affordance")]
    obj_dim = len(rulebook.categories) + n_aff

    h_verb = dims.d_t // 2
    h_obj = dims.d_t - h_verb
    r_verb = rng.normal(size=(h_verb, verb_dim)) / np.sqrt(h_verb)
    r_obj = rng.normal(size=(h_obj, obj_dim)) / np.sqrt(h_obj)

    offsets = np.cumsum([0] + slot_sizes[:-1])
    aff_values = vocab.values[SLOT_NAMES.index("affordance")]

    raw_parts = {verb: rulebook.embed_noise * rng.normal(size=h_verb)
                 for verb in sorted(rulebook.verbs)}
    for alias, base in sorted(rulebook.paraphrases.items()):
        # paraphrase verbs sit next to their base in embedding space
        raw_parts[alias] = raw_parts[base] + 0.06 * rng.normal(size=h_verb)

    verb_subs = {}
    for verb in sorted(rulebook.verbs):
        feats = np.zeros(verb_dim)
        for k, vi in rulebook.required_indices(verb).items():
            feats[offsets[k] + vi] = 1.0
        for k, banned in rulebook.forbidden_indices(verb).items():
            for vi in banned:
                feats[offsets[k] + vi] -= 0.5
        v_sub = r_verb @ feats + raw_parts[verb]
        verb_subs[verb] = v_sub / np.linalg.norm(v_sub)

    obj_subs = {}
    for cat in rulebook.categories:
        ofeats = np.zeros(obj_dim)
        ofeats[rulebook.categories.index(cat)] = 1.0
        ofeats[len(rulebook.categories) + aff_values.index(rulebook.category_affordance[cat])] = 1.0
        o_sub = r_obj @ ofeats + rulebook.embed_noise * rng.normal(size=h_obj)
        obj_subs[cat] = o_sub / np.linalg.norm(o_sub)

    phrases = []
    for pid, (verb, cat) in enumerate(rulebook.phrase_pairs()):
        t = np.concatenate([verb_subs[verb], obj_subs[cat]])
        t /= np.linalg.norm(t)
        phrases.append(Phrase(phrase_id=pid, verb=verb, object_category=cat, embedding=t))
    return phrases


def _required_value_cover(rulebook: Rulebook):
    """(slot, value index) -> set of verbs requiring it."""
    cover = {}
    for verb in rulebook.verbs:
        for k, vi in rulebook.required_indices(verb).items():
            cover.setdefault((k, vi), set()).add(verb)
    return cover


def split_unseen(rulebook: Rulebook, seed: int, verb_frac=0.2, phrase_frac=0.2):
    """Hold out whole verbs plus extra phrases of the remaining verbs.

    Held-out verb combinations are sampled only among those whose required
    slot values all stay exercised by some retained verb; transfer to a verb
    built from never-observed primitives is not a meaningful ask.

    Returns (all unseen phrase ids, unseen verbs, extra phrase ids); the extra
    ids are the phrase-level holdout of round(phrase_frac * n_phrases) picks,
    on top of every phrase of the held-out verbs.  All sorted tuples.
    """
    rng = child_rng(seed, "split")
    pairs = rulebook.phrase_pairs()
    verbs = sorted(rulebook.verbs)
    n_unseen_verbs = max(1, round(verb_frac * len(verbs)))
    cover = _required_value_cover(rulebook)
    # a held-out paraphrase scores ~0 by construction (its detections are
    # suppressed as duplicates of the retained twin), so paraphrase families
    # never straddle the split
    family = set(rulebook.paraphrases) | set(rulebook.paraphrases.values())

    def admissible(combo):
        held = set(combo)
        return all(cover[(k, vi)] - held
                   for verb in combo
                   for k, vi in rulebook.required_indices(verb).items())

    combos = [c for c in itertools.combinations(
                  [v for v in verbs if v not in family], n_unseen_verbs)
              if admissible(c)]
    if not combos:
        raise ValueError("no coverage-preserving verb holdout exists")
    unseen_verbs = tuple(combos[int(rng.integers(len(combos)))])

    verb_held = [pid for pid, (v, _) in enumerate(pairs) if v in unseen_verbs]
    # extra picks avoid wiping out any retained verb entirely
    verb_count = {}
    for v, _ in pairs:
        verb_count[v] = verb_count.get(v, 0) + 1
    pool = [pid for pid, (v, _) in enumerate(pairs)
            if v not in unseen_verbs and v not in family and verb_count[v] >= 2]
    n_extra = max(1, round(phrase_frac * len(pairs)))
    n_extra = min(n_extra, len(pool) - 1)
    for _ in range(100):
        extra = sorted(int(e) for e in rng.choice(pool, size=n_extra, replace=False))
        picked = {}
        for pid in extra:
            picked[pairs[pid][0]] = picked.get(pairs[pid][0], 0) + 1
        if all(picked[v] < verb_count[v] for v in picked):
            break
    else:
        raise ValueError("could not sample a verb-preserving extra holdout")
    unseen_ids = tuple(sorted(set(verb_held) | set(extra)))
    return unseen_ids, unseen_verbs, tuple(extra)


# ---------------------------------------------------------------------------
# truth and probes

def satisfies(rulebook: Rulebook, verb: str, true_slots) -> bool:
    for k, vi in rulebook.required_indices(verb).items():
        if true_slots[k] != vi:
            return False
    for k, banned in rulebook.forbidden_indices(verb).items():
        if true_slots[k] in banned:
            return False
    return True


def required_contradictions(rulebook: Rulebook, verb: str, true_slots):
    """Slots whose required value the pair's true state contradicts."""
    return [
        k for k, vi in rulebook.required_indices(verb).items()
        if true_slots[k] != vi
    ]


def probe_set(scenes, rulebook: Rulebook):
    """Hard negatives: category matches the phrase and the verb suits the
    object's affordance, but at least one required slot is contradicted and
    z = 0.  Returns (scene_id, human_idx, object_idx, phrase_id) tuples."""
    pairs = rulebook.phrase_pairs()
    probes = []
    for scene in scenes:
        for pair in scene.pairs:
            cat = pair.descriptor.object_category
            for pid, (verb, pcat) in enumerate(pairs):
                if pcat != cat or pair.latent[pid]:
                    continue
                if verb not in rulebook.affordances[cat]:
                    continue
                if required_contradictions(rulebook, verb, pair.true_slots):
                    probes.append((scene.scene_id, pair.human_idx, pair.object_idx, pid))
    return probes


# ---------------------------------------------------------------------------
# box helpers

def _iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter <= 0:
        return 0.0
    area = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / area


def _gap(a, b):
    gx = max(0.0, a[0] - b[2], b[0] - a[2])
    gy = max(0.0, a[1] - b[3], b[1] - a[3])
    return float(np.hypot(gx, gy))


def _center(box):
    return (box[0] + box[2]) / 2.0, (box[1] + box[3]) / 2.0


def _box_at(cx, cy, w, h):
    return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def _clamp_box(box, width, height):
    # absorbs float spill from centers at the feasible-region boundary
    return (max(box[0], 0.0), max(box[1], 0.0),
            min(box[2], float(width)), min(box[3], float(height)))


def classify_geometry(hbox, obox, diag):
    """Geometry truth from realized boxes, or None inside a dead zone.

    Placement only aims for a band; the truth is always re-derived here.
    None marks ambiguous configurations (hairline overlap, gap between the
    near and far bands) that the generator refuses to annotate.
    """
    ocx, ocy = _center(obox)
    if hbox[0] <= ocx <= hbox[2] and hbox[1] <= ocy <= hbox[3]:
        return "overlapping"
    iou = _iou(hbox, obox)
    if iou >= ADJ_IOU_MIN:
        return "adjacent"
    if iou > 0.0:
        return None
    gap = _gap(hbox, obox) / diag
    if gap <= NEAR_MAX:
        return "near"
    if gap < FAR_MIN:
        return None
    return "far"


def _place_object(rng, hbox, geom, ow, oh, width, height):
    """Box for the object aiming at the given geometry class."""
    diag = float(np.hypot(width, height))
    hcx, hcy = _center(hbox)
    lo_x, hi_x = ow / 2.0, width - ow / 2.0
    lo_y, hi_y = oh / 2.0, height - oh / 2.0

    if geom == "overlapping":
        cx = hcx + rng.uniform(-0.2, 0.2) * (hbox[2] - hbox[0])
        cy = hcy + rng.uniform(-0.2, 0.2) * (hbox[3] - hbox[1])
        cx = float(np.clip(cx, max(lo_x, hbox[0] + 1.0), min(hi_x, hbox[2] - 1.0)))
        cy = float(np.clip(cy, max(lo_y, hbox[1] + 1.0), min(hi_y, hbox[3] - 1.0)))
        return _clamp_box(_box_at(cx, cy, ow, oh), width, height)

    if geom == "adjacent":
        # overlap depth sized so realized iou clears ADJ_IOU_MIN with margin
        # while the object center stays outside the human box
        h_area = (hbox[2] - hbox[0]) * (hbox[3] - hbox[1])
        need = 1.3 * ADJ_IOU_MIN * (h_area + ow * oh) / oh
        olap = max(rng.uniform(0.10, 0.18) * ow, need)
        olap = min(olap, 0.45 * ow)
        room_right = width - hbox[2]
        room_left = hbox[0]
        go_right = room_right >= room_left
        if go_right:
            cx = hbox[2] + ow / 2.0 - olap
        else:
            cx = hbox[0] - ow / 2.0 + olap
        cx = float(np.clip(cx, lo_x, hi_x))
        y_lo = max(lo_y, hbox[1] + oh / 2.0)
        y_hi = min(hi_y, hbox[3] - oh / 2.0)
        cy = rng.uniform(y_lo, y_hi) if y_lo < y_hi else (y_lo + y_hi) / 2.0
        return _clamp_box(_box_at(cx, cy, ow, oh), width, height)

    # near / far: walk toward the farthest feasible corner until the box gap
    # reaches a band target; monotone in t, so bisection is exact enough
    band = NEAR_GAP if geom == "near" else FAR_GAP
    target = rng.uniform(*band) * diag
    corners = [(lo_x, lo_y), (lo_x, hi_y), (hi_x, lo_y), (hi_x, hi_y)]
    corner = max(corners, key=lambda c: np.hypot(c[0] - hcx, c[1] - hcy))

    def gap_at(t):
        cx = hcx + t * (corner[0] - hcx)
        cy = hcy + t * (corner[1] - hcy)
        return _gap(hbox, _box_at(cx, cy, ow, oh))

    if gap_at(1.0) <= target:
        t = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(48):
            mid = (lo + hi) / 2.0
            if gap_at(mid) < target:
                lo = mid
            else:
                hi = mid
        t = hi
    cx = hcx + t * (corner[0] - hcx)
    cy = hcy + t * (corner[1] - hcy)
    return _clamp_box(_box_at(float(cx), float(cy), ow, oh), width, height)


# ---------------------------------------------------------------------------
# slot state sampling

_BG_BODY = (("none", 0.28), ("hand", 0.40), ("head", 0.15), ("foot", 0.10), ("mouth", 0.07))
_BG_MOTION = (("static", 0.55), ("extend", 0.18), ("swing", 0.12), ("carry-like", 0.15))
_BG_STATE = (("neutral", 0.55), ("held", 0.09), ("worn", 0.09), ("open", 0.09),
             ("cut", 0.09), ("filled", 0.09))
_BG_GEOMETRY = (("overlapping", 0.06), ("adjacent", 0.20), ("near", 0.37), ("far", 0.37))
_IX_GEOM_CONTACT = (("overlapping", 0.3), ("adjacent", 0.7))
_IX_GEOM_NOCONTACT = (("adjacent", 0.2), ("near", 0.45), ("far", 0.35))
_WEAR_BODY = (("torso", 0.5), ("head", 0.3), ("hand", 0.2))


def _draw(rng, table, banned=()):
    names = [n for n, _ in table if n not in banned]
    weights = np.array([w for n, w in table if n not in banned])
    weights = weights / weights.sum()
    return names[int(rng.choice(len(names), p=weights))]


def _sample_interaction_slots(rng, rulebook, verb):
    """Named slot states for an interacting pair; geometry is a preference
    the placer aims for, final truth comes from the realized boxes."""
    spec = rulebook.verbs[verb]
    required = spec.required
    forbidden = spec.forbidden

    body = required.get("body_role")
    if body is None:
        body = _draw(rng, _WEAR_BODY, banned=forbidden.get("body_role", ()))
    contact = required["contact"]
    motion = required.get("motion")
    if motion is None:
        motion = _draw(rng, _BG_MOTION, banned=forbidden.get("motion", ()))
    state = required.get("object_state")
    if state is None:
        state = _draw(rng, _BG_STATE, banned=forbidden.get("object_state", ()))

    geom = required.get("geometry")
    if geom is None:
        table = _IX_GEOM_NOCONTACT if contact == "none" else _IX_GEOM_CONTACT
        geom = _draw(rng, table, banned=forbidden.get("geometry", ()))
    return {"body_role": body, "contact": contact, "geometry": geom,
            "motion": motion, "object_state": state}


def _sample_background_slots(rng, geom_truth):
    """Background states given the geometry the boxes realized; contact other
    than none only at overlapping/adjacent range."""
    body = _draw(rng, _BG_BODY)
    if geom_truth in ("overlapping", "adjacent"):
        contact = "touch" if rng.random() < 0.30 else "none"
    else:
        contact = "none"
    motion = _draw(rng, _BG_MOTION)
    state = _draw(rng, _BG_STATE)
    return {"body_role": body, "contact": contact, "motion": motion, "object_state": state}


# ---------------------------------------------------------------------------
# descriptor render

class _Render:
    """Fixed seeded linear maps from slot one-hots to descriptor fields."""

    def __init__(self, rng, dims: ModelDims, rulebook: Rulebook):
        sizes = [len(v) for v in rulebook.vocab.values]
        n_body, n_contact, _, n_aff, n_motion, n_state = sizes
        ncat = len(rulebook.categories)

        def mat(out_dim, in_dim):
            return rng.normal(size=(out_dim, in_dim)) / np.sqrt(out_dim)

        self.r_pose = mat(dims.d_p, n_body + n_motion)
        self.r_part = mat(dims.d_r, n_body + n_contact + n_motion)
        self.r_union = mat(dims.d_f, n_contact + n_state)
        self.r_object = mat(dims.d_f, n_aff + n_state + ncat)
        self.r_ctx = mat(dims.d_c, ncat)
        self.sizes = sizes
        self.ncat = ncat

    def onehot(self, k, idx):
        v = np.zeros(self.sizes[k])
        v[idx] = 1.0
        return v


def _render_descriptor(rng, render: _Render, rulebook, dims, slots, cat_name,
                       hbox, obox, human_latent, object_latent, diag):
    vocab = rulebook.vocab
    idx = {name: vocab.values[k].index(slots[name]) if name in slots else None
           for k, name in enumerate(SLOT_NAMES)}
    k_body = SLOT_NAMES.index("body_role")
    k_contact = SLOT_NAMES.index("contact")
    k_geom = SLOT_NAMES.index("geometry")
    k_aff = SLOT_NAMES.index("affordance")
    k_motion = SLOT_NAMES.index("motion")
    k_state = SLOT_NAMES.index("object_state")

    body = render.onehot(k_body, idx["body_role"])
    contact = render.onehot(k_contact, idx["contact"])
    motion = render.onehot(k_motion, idx["motion"])
    state = rulebook.state_gain * render.onehot(k_state, idx["object_state"])
    aff = render.onehot(k_aff, idx["affordance"])
    cat = np.zeros(render.ncat)
    cat[rulebook.categories.index(cat_name)] = 1.0

    sigma = rulebook.noise_sigma
    f_h = 0.5 * human_latent + sigma * rng.normal(size=dims.d_f)
    f_o = (render.r_object @ np.concatenate([aff, state, cat])
           + 0.5 * object_latent + sigma * rng.normal(size=dims.d_f))
    f_u = (render.r_union @ np.concatenate([rulebook.contact_gain * contact, state])
           + sigma * rng.normal(size=dims.d_f))
    p = render.r_pose @ np.concatenate([body, motion]) + sigma * rng.normal(size=dims.d_p)
    r_part = (render.r_part @ np.concatenate([body, contact, motion])
              + sigma * rng.normal(size=dims.d_r))
    r_ctx = render.r_ctx @ cat + sigma * rng.normal(size=dims.d_c)

    hcx, hcy = _center(hbox)
    ocx, ocy = _center(obox)
    h_area = (hbox[2] - hbox[0]) * (hbox[3] - hbox[1])
    o_area = (obox[2] - obox[0]) * (obox[3] - obox[1])
    gap = _gap(hbox, obox) / diag
    contact_name = slots["contact"]
    body_name = slots["body_role"]

    if contact_name == "none":
        hand = gap + HAND_OFFSET
    elif contact_name == "mouth-contact":
        hand = rng.uniform(0.0, 0.05)
    else:
        hand = rng.uniform(0.0, 0.04)
    if body_name in ("head", "mouth"):
        head = rng.uniform(0.0, 0.06)
    else:
        head = gap + HEAD_OFFSET

    contained = 1.0 if (hbox[0] <= ocx <= hbox[2] and hbox[1] <= ocy <= hbox[3]) else 0.0
    g = np.array([
        (ocx - hcx) / diag,
        (ocy - hcy) / diag,
        np.log(o_area / h_area),
        _iou(hbox, obox),
        contained,
        hand,
        head,
    ])
    assert g.shape == (len(G_COMPONENTS),)

    true_slots = np.array([idx[name] for name in SLOT_NAMES], dtype=np.int64)
    desc = PairDescriptor(
        f_h=f_h, f_o=f_o, f_u=f_u, p=p, g=g,
        r_part=r_part, r_ctx=r_ctx, object_category=cat_name,
    )
    return desc, true_slots


# ---------------------------------------------------------------------------
# scene generation

def _generate_scene(scene_id, rulebook, dims, render, phrase_pairs, seed,
                    rho_miss, drop_ids):
    rng = child_rng(seed, "scene", scene_id)
    width, height = rulebook.image_size
    diag = float(np.hypot(width, height))

    n_h = 1 if rng.random() < 0.6 else 2
    n_o = int(rng.integers(3, 6))

    human_boxes = []
    human_latents = []
    for _ in range(n_h):
        w = rng.uniform(110, 180)
        h = rng.uniform(210, 300)
        x1 = rng.uniform(0, width - w)
        y1 = rng.uniform(0, height - h)
        human_boxes.append(_clamp_box((x1, y1, x1 + w, y1 + h), width, height))
        human_latents.append(rng.normal(0, 0.4, size=dims.d_f))

    cats = rng.choice(len(rulebook.categories), size=n_o, replace=False)
    specs = []          # (owner human, verb or None, size) per object
    object_latents = []
    for cat_idx in cats:
        cat = rulebook.categories[int(cat_idx)]
        w_lo, w_hi, h_lo, h_hi = rulebook.object_sizes[cat]
        ow, oh = rng.uniform(w_lo, w_hi), rng.uniform(h_lo, h_hi)
        interacting = rng.random() < rulebook.p_interact
        h_idx = int(rng.integers(n_h))
        verb = None
        if interacting:
            verb = str(rng.choice(list(rulebook.affordances[cat])))
        object_latents.append(rng.normal(0, 0.4, size=dims.d_f))
        specs.append((h_idx, verb, ow, oh))

    pairs = []
    placed_boxes = []
    for o_idx, (cat_idx, (h_idx, verb, ow, oh)) in enumerate(zip(cats, specs)):
        cat = rulebook.categories[int(cat_idx)]
        hbox = human_boxes[h_idx]
        if verb is not None:
            ix_slots = _sample_interaction_slots(rng, rulebook, verb)
            geom_pref = ix_slots["geometry"]
        else:
            ix_slots = None
            geom_pref = _draw(rng, _BG_GEOMETRY)
        obox = _place_object(rng, hbox, geom_pref, ow, oh, width, height)
        placed_boxes.append(obox)

        for hh in range(n_h):
            geom_truth = classify_geometry(human_boxes[hh], obox, diag)
            if geom_truth is None:
                continue        # dead-zone configuration, never annotated
            if hh == h_idx and ix_slots is not None:
                slots = dict(ix_slots)
            else:
                slots = _sample_background_slots(rng, geom_truth)
            slots["geometry"] = geom_truth
            slots["affordance"] = rulebook.category_affordance[cat]

            desc, true_slots = _render_descriptor(
                rng, render, rulebook, dims, slots, cat,
                human_boxes[hh], obox, human_latents[hh], object_latents[o_idx], diag,
            )
            z = np.array(
                [1 if (pc == cat and satisfies(rulebook, pv, true_slots)) else 0
                 for pv, pc in phrase_pairs],
                dtype=np.int8,
            )
            y = z.copy()
            for pid in np.nonzero(z)[0]:
                if pid in drop_ids or rng.random() < rho_miss:
                    y[pid] = 0
            aff_ok = np.array(
                [1 if pc == cat and pv in rulebook.affordances[cat] else 0
                 for pv, pc in phrase_pairs],
                dtype=np.int8,
            )
            pairs.append(PairSample(
                human_idx=hh, object_idx=o_idx, descriptor=desc,
                true_slots=true_slots, latent=z, labels=y, affordance_ok=aff_ok,
            ))

    return SceneRecord(
        scene_id=scene_id,
        width=width,
        height=height,
        human_boxes=tuple(human_boxes),
        object_boxes=tuple(placed_boxes),
        object_categories=tuple(rulebook.categories[int(c)] for c in cats),
        pairs=tuple(pairs),
    )


def generate(rulebook: Rulebook, dims: ModelDims, n_scenes: int, seed: int,
             rho_miss: float = 0.3, drop_phrase_ids=(), start_id: int = 0,
             threads: int = 1):
    """Scenes [start_id, start_id + n_scenes), bit-identical for a given
    (seed, start_id) regardless of thread count."""
    render = _Render(child_rng(seed, "render"), dims, rulebook)
    phrase_pairs = rulebook.phrase_pairs()
    drop_ids = frozenset(int(i) for i in drop_phrase_ids)
    ids = range(start_id, start_id + n_scenes)

    def one(i):
        return _generate_scene(i, rulebook, dims, render, phrase_pairs, seed,
                               rho_miss, drop_ids)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, ids))
    return [one(i) for i in ids]
