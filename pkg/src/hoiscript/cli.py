"""Command line entry point: gen / train / eval / ablate / check.

Every command is deterministic given (config, seed): reports are JSON or CSV
with sorted keys and no timestamps, and all of them carry the resolved config
hash.  Exit codes: 0 success, 1 usage, 2 data, 3 divergence, 4 failed self
test.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np
from scipy.special import expit

from . import __version__, selfcheck
from .bank import ScriptBank
from .config import (ConfigError, ModeError, apply_overrides, load_config,
                     master_seed_override, resolve)
from .domain import (NumpyJSONEncoder, read_phrases, read_scenes, write_phrases,
                     write_scenes)
from .evaluate import (affordance_conflict_fpr, evaluate_detections,
                       rank_and_suppress, read_predictions, score_scenes,
                       train_positive_counts, write_predictions)
from .synth import build_phrases, generate, probe_set, save_rulebook, split_unseen
from .trainer import (DivergenceError, load_checkpoint, resolve_mode,
                      save_checkpoint, train)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3
EXIT_CHECK = 4

# scene id bases keep the three splits' random streams disjoint
VAL_BASE = 1_000_000
TEST_BASE = 2_000_000

SPLIT_FILES = {"train": "train.jsonl", "val": "val.jsonl", "test": "test.jsonl"}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, cls=NumpyJSONEncoder)
    if path is None:
        print(text)
    else:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as f:
            f.write(text + "\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolved(args):
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        cfg = master_seed_override(cfg, args.seed)
    if getattr(args, "mode", None) is not None:
        cfg = apply_overrides(cfg, [f"train.mode={args.mode}"])
    return resolve(cfg)


def _split_counts(scenes, n_phrases):
    pairs = sum(len(s.pairs) for s in scenes)
    z = sum(int(p.latent.sum()) for s in scenes for p in s.pairs)
    y = sum(int(p.labels.sum()) for s in scenes for p in s.pairs)
    return {"scenes": len(scenes), "pairs": pairs,
            "latent_positives": z, "observed_positives": y}


def cmd_gen(args) -> int:
    res = _resolved(args)
    out_dir = args.out or "data"
    os.makedirs(out_dir, exist_ok=True)
    rb, dims, world, seeds = res.rulebook, res.dims, res.world, res.seeds

    dead = rb.validate()
    if dead:
        names = ", ".join(f"{v} {c}" for _, v, c in dead)
        print(f"warning: dead phrases that can never fire: {names}",
              file=sys.stderr)

    phrases = build_phrases(rb, dims, seed=seeds["world"])
    unseen_ids, unseen_verbs, extra_ids = split_unseen(
        rb, seed=seeds["split"], verb_frac=world["verb_frac"],
        phrase_frac=world["phrase_frac"])

    threads = args.threads or 1
    common = dict(rulebook=rb, dims=dims, seed=seeds["world"],
                  rho_miss=world["rho_miss"], threads=threads)
    splits = {
        "train": generate(n_scenes=world["n_train"], start_id=0,
                          drop_phrase_ids=unseen_ids, **common),
        "val": generate(n_scenes=world["n_val"], start_id=VAL_BASE, **common),
        "test": generate(n_scenes=world["n_test"], start_id=TEST_BASE, **common),
    }

    meta = {"config_hash": res.hash}
    save_rulebook(os.path.join(out_dir, "rulebook.json"), rb)
    write_phrases(os.path.join(out_dir, "phrases.jsonl"), phrases, meta=meta)
    for name, scenes in splits.items():
        write_scenes(os.path.join(out_dir, SPLIT_FILES[name]), scenes,
                     meta={**meta, "split": name})

    files = ["rulebook.json", "phrases.jsonl"] + sorted(SPLIT_FILES.values())
    manifest = {
        "schema": "hoiscript/manifest",
        "version": 1,
        "config_hash": res.hash,
        "seeds": seeds,
        "n_phrases": len(phrases),
        "unseen_verbs": list(unseen_verbs),
        "held_out_phrases": list(extra_ids),
        "unseen_phrase_ids": list(unseen_ids),
        "dead_phrases": [[pid, v, c] for pid, v, c in dead],
        "counts": {name: _split_counts(scenes, len(phrases))
                   for name, scenes in splits.items()},
        "checksums": {f: _sha256(os.path.join(out_dir, f)) for f in files},
    }
    _dump_json(manifest, os.path.join(out_dir, "manifest.json"))
    print(f"wrote {out_dir}: "
          + ", ".join(f"{n}={manifest['counts'][n]['scenes']} scenes"
                      for n in ("train", "val", "test"))
          + f", {len(phrases)} phrases ({len(unseen_ids)} unseen)")
    return EXIT_OK


def _load_data(data_dir, what=("phrases",)):
    out = {}
    if "phrases" in what:
        _, out["phrases"] = read_phrases(os.path.join(data_dir, "phrases.jsonl"))
    for split in ("train", "val", "test"):
        if split in what:
            _, out[split] = read_scenes(os.path.join(data_dir, SPLIT_FILES[split]))
    if "manifest" in what:
        path = os.path.join(data_dir, "manifest.json")
        with open(path) as f:
            out["manifest"] = json.load(f)
    return out


def cmd_train(args) -> int:
    res = _resolved(args)
    data = _load_data(args.data, what=("phrases", "train"))
    out_path = args.out or os.path.join("out", "model.ckpt")
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)

    resume = None
    if args.resume:
        resume, meta = load_checkpoint(args.resume, res.dims, res.hyper)
        if meta["mode"] != res.train.mode or meta["seed"] != res.seeds["train"]:
            print(f"error: checkpoint was trained with mode={meta['mode']} "
                  f"seed={meta['seed']}; current config says "
                  f"mode={res.train.mode} seed={res.seeds['train']}",
                  file=sys.stderr)
            return EXIT_DATA

    def log(entry):
        print(f"epoch {entry['epoch'] + 1}/{res.train.epochs} "
              f"loss {entry['total']:.4f}", file=sys.stderr)

    state = train(data["phrases"], data["train"], res.dims, res.hyper,
                  res.train, seed=res.seeds["train"], resume=resume, log_fn=log)

    save_checkpoint(out_path, state, seed=res.seeds["train"],
                    mode=res.train.mode, config_hash=res.hash_bytes)
    log_path = os.path.splitext(out_path)[0] + ".log.json"
    _dump_json({
        "config_hash": res.hash,
        "seed": res.seeds["train"],
        "mode": res.train.mode,
        "train_config": res.train.to_dict(),
        "epochs_completed": state.epoch,
        "history": state.history,
    }, log_path)
    print(f"wrote {out_path} and {log_path} "
          f"(final loss {state.history[-1]['total']:.4f})")
    return EXIT_OK


def _dropped_probability(preds, scenes, unseen):
    """Mean predicted probability over latent positives whose label was
    dropped, excluding unseen-phrase holdout; computed from predictions so it
    works for both freshly scored and reloaded prediction sets."""
    by_pair = {(s.scene_id, p.human_idx, p.object_idx): p
               for s in scenes for p in s.pairs}
    unseen = set(unseen)
    vals = []
    for pred in preds:
        pair = by_pair.get(pred.pair_key)
        if pair is None or pred.phrase_id in unseen:
            continue
        if pair.latent[pred.phrase_id] == 1 and pair.labels[pred.phrase_id] == 0:
            vals.append(float(expit(pred.score)))
    return float(np.mean(vals)) if vals else None


def cmd_eval(args) -> int:
    res = _resolved(args)
    split = args.split
    data = _load_data(args.data, what=("phrases", "train", split, "manifest"))
    phrases, scenes = data["phrases"], data[split]
    unseen_ids = data["manifest"]["unseen_phrase_ids"]
    bank = ScriptBank(phrases)

    mode = None
    if args.predictions:
        _, preds = read_predictions(args.predictions)
    else:
        if not args.checkpoint:
            print("error: need --checkpoint or --predictions", file=sys.stderr)
            return EXIT_USAGE
        state, meta = load_checkpoint(args.checkpoint, res.dims, res.hyper)
        mode = meta["mode"]
        _, _, slot_mask = resolve_mode(mode, res.hyper)
        preds = score_scenes(scenes, bank, state.params, slot_mask=slot_mask)
        preds = rank_and_suppress(preds, bank, res.suppression)

    out_path = args.out
    if out_path and not args.predictions:
        pred_path = os.path.splitext(out_path)[0] + ".predictions.jsonl"
        os.makedirs(os.path.dirname(os.path.abspath(pred_path)), exist_ok=True)
        write_predictions(pred_path, preds,
                          meta={"config_hash": res.hash, "split": split,
                                "mode": mode})

    counts = train_positive_counts(data["train"], len(phrases))
    report = evaluate_detections(
        preds, scenes, phrases, counts, unseen_ids,
        iou_thresh=res.eval["iou_threshold"], rare_cutoff=res.eval["rare_cutoff"])
    probes = probe_set(scenes, res.rulebook)
    metrics = {
        "schema": "hoiscript/metrics",
        "version": 1,
        "config_hash": res.hash,
        "split": split,
        "mode": mode,
        "n_predictions": len(preds),
        "n_suppressed": sum(p.suppressed for p in preds),
        "map": report,
        "affordance_conflict_fpr": affordance_conflict_fpr(
            preds, probes, top_k=res.eval["top_k"]),
        "n_probes": len(probes),
        "dropped_positive_probability": _dropped_probability(
            preds, scenes, unseen_ids),
    }
    if not preds:
        metrics["warning"] = "no predictions; all metrics are zero"
        print("warning: no predictions; all metrics are zero", file=sys.stderr)
    _dump_json(metrics, out_path)
    if out_path:
        full = report["full"]
        print(f"wrote {out_path} (mAP full "
              f"{full if full is None else round(full, 4)})")
    return EXIT_OK


ABLATE_COLUMNS = ("mode", "seen", "unseen", "hm", "fpr", "rare", "full")


def cmd_ablate(args) -> int:
    base_cfg = load_config(args.config)
    base_cfg = apply_overrides(base_cfg, getattr(args, "set", None))
    if args.seed is not None:
        base_cfg = master_seed_override(base_cfg, args.seed)
    modes = [args.mode] if args.mode else base_cfg["ablate"]["modes"]

    data = _load_data(args.data, what=("phrases", "train", "test", "manifest"))
    phrases = data["phrases"]
    unseen_ids = data["manifest"]["unseen_phrase_ids"]
    out_dir = args.out or os.path.join("out", "ablate")
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    details = {}
    for mode in modes:
        res = resolve(apply_overrides(base_cfg, [f"train.mode={mode}"]))
        print(f"ablate: training mode={mode}", file=sys.stderr)
        state = train(phrases, data["train"], res.dims, res.hyper, res.train,
                      seed=res.seeds["train"])
        _, _, slot_mask = resolve_mode(mode, res.hyper)
        bank = ScriptBank(phrases)
        preds = score_scenes(data["test"], bank, state.params, slot_mask=slot_mask)
        preds = rank_and_suppress(preds, bank, res.suppression)
        counts = train_positive_counts(data["train"], len(phrases))
        report = evaluate_detections(
            preds, data["test"], phrases, counts, unseen_ids,
            iou_thresh=res.eval["iou_threshold"],
            rare_cutoff=res.eval["rare_cutoff"])
        fpr = affordance_conflict_fpr(preds, probe_set(data["test"], res.rulebook),
                                      top_k=res.eval["top_k"])
        rows.append({"mode": mode, "seen": report["seen"],
                     "unseen": report["unseen"], "hm": report["hm"],
                     "fpr": fpr, "rare": report["rare"], "full": report["full"]})
        details[mode] = {"config_hash": res.hash, "map": report, "fpr": fpr}

    csv_path = os.path.join(out_dir, "ablate.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ABLATE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else f"{row[k]:.6f}")
                             if k != "mode" else row[k]
                             for k in ABLATE_COLUMNS})
    _dump_json({"schema": "hoiscript/ablation", "version": 1, "rows": rows,
                "details": details}, os.path.join(out_dir, "ablate.json"))
    print(f"wrote {csv_path} ({len(rows)} modes)")
    return EXIT_OK


def cmd_check(args) -> int:
    res = _resolved(args)
    report = selfcheck.run_all(tol=args.tol)
    report["config_hash"] = res.hash
    _dump_json(report, args.out)
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status}  {c['name']}: {c['detail']}", file=sys.stderr)
    return EXIT_OK if report["ok"] else EXIT_CHECK


def _add_common(sub, *, mode=False, data=False):
    sub.add_argument("--config", help="JSON config file; defaults apply if omitted")
    sub.add_argument("--seed", type=int,
                     help="master seed overriding every seeds.* entry")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config key, e.g. train.epochs=50")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads for scene generation; never changes results")
    sub.add_argument("--out", help="output path (gen/ablate: directory)")
    if mode:
        sub.add_argument("--mode", help="training mode override")
    if data:
        sub.add_argument("--data", required=True,
                         help="directory written by the gen command")


def build_parser() -> _Parser:
    parser = _Parser(prog="hoiscript",
                     description="Scripted interaction scoring on a synthetic world")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="generate dataset splits and a manifest")
    _add_common(p)

    p = subs.add_parser("train", help="train a model on a generated dataset")
    _add_common(p, mode=True, data=True)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = subs.add_parser("eval", help="score a split and report metrics")
    _add_common(p, data=True)
    p.add_argument("--checkpoint", help="trained checkpoint to score with")
    p.add_argument("--split", choices=sorted(SPLIT_FILES), default="test")
    p.add_argument("--predictions",
                   help="existing predictions JSONL to evaluate instead of scoring")

    p = subs.add_parser("ablate", help="train and evaluate every configured mode")
    _add_common(p, mode=True, data=True)

    p = subs.add_parser("check", help="run built-in self tests")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-4,
                   help="gradient check tolerance")

    return parser


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ModeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
