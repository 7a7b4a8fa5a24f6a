"""Command line pipeline driver.

Subcommands cover the whole chain: generate-synth (bundled dataset),
flow (populate the flow cache), extract (tap features), train (one head
per protocol), eval (score checkpoints), report (tables and heatmaps),
and run-all (flow through report in order).

Configuration comes from an optional JSON file plus flag overrides;
flags win. Every run writes the fully resolved configuration next to
its outputs. Exit codes: 0 ok, 2 configuration error, 3 partial data
failure, 4 missing upstream stage.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .errors import (
    ConfigError,
    InputError,
    StageError,
    ViewflowError,
)
from .flow.tvl1 import FlowParams
from .harness import (
    build_split,
    derive_seed,
    evaluate,
    load_manifest,
    parse_protocol,
    render_report,
    standard_protocols,
)
from .harness.evaluate import EvalResult, SuiteResult
from .harness.report import slug
from .heads.models import load_checkpoint, save_checkpoint
from .heads.train import TrainConfig, train
from .network.container import read_container
from .network.extract import (
    FRAME_SUFFIXES,
    clip_flow_volume,
    extract_features,
    preprocess_frame,
    read_clip_frames,
    read_feature,
    read_index,
)
from .network.model import FeatureBlock, load_network
from .network.spec import load_spec
from .synth import SynthParams, generate_dataset

log = logging.getLogger("viewflow")

DEFAULT_SEED = 17
STAGE_ORDER = ("flow", "extract", "train", "eval", "report")


# ------------------------------------------------------------------ config


def default_config() -> dict:
    return {
        "dataset_root": ".",
        "manifest": None,
        "network_spec": "reduced",
        "weights": None,
        "head": "slp",
        "output_dir": "out",
        "seed": DEFAULT_SEED,
        "protocols": None,
        "jobs": 1,
        "flow": dataclasses.asdict(FlowParams()),
        "train": {
            "learning_rate": 0.01,
            "momentum": 0.9,
            "batch_size": 16,
            "max_epochs": 100,
            "early_stop_patience": 10,
        },
    }


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def merge_config(base: dict, override: dict, source: str) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{source}: {key} must be an object")
            unknown = set(value) - set(base[key])
            if unknown:
                raise ConfigError(
                    f"{source}: unknown {key} key(s) {', '.join(sorted(unknown))}"
                )
            merged[key] = {**base[key], **value}
        else:
            merged[key] = value
    return merged


def apply_set_overrides(cfg: dict, assignments) -> dict:
    for item in assignments or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        if len(parts) == 1:
            cfg = merge_config(cfg, {parts[0]: value}, "--set")
        elif len(parts) == 2:
            cfg = merge_config(cfg, {parts[0]: {parts[1]: value}}, "--set")
        else:
            raise ConfigError(f"--set key {key!r} nests too deep")
    return cfg


class RunContext:
    """Resolved configuration plus derived paths and parsed params."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.dataset_root = os.path.abspath(cfg["dataset_root"])
        manifest = cfg["manifest"] or os.path.join(self.dataset_root, "manifest.json")
        self.manifest_path = os.path.abspath(manifest)
        self.output_dir = os.path.abspath(cfg["output_dir"])
        self.seed = int(cfg["seed"])
        self.head = cfg["head"]
        self.jobs = max(1, int(cfg["jobs"]))
        self.weights_path = cfg["weights"]
        self.flow_params = FlowParams(**cfg["flow"])
        self.train_config = TrainConfig(seed=self.seed, **cfg["train"])
        if cfg["protocols"] is None:
            self.protocols = None
        else:
            self.protocols = tuple(parse_protocol(p) for p in cfg["protocols"])
        self.spec = load_spec(cfg["network_spec"])

    @property
    def cache_root(self) -> str:
        env = os.environ.get("VIEWFLOW_CACHE")
        return env if env else os.path.join(self.output_dir, "flow", "cache")

    def stage_dir(self, stage: str) -> str:
        return os.path.join(self.output_dir, stage)

    def resolved(self) -> dict:
        out = json.loads(json.dumps(self.cfg))
        out["dataset_root"] = self.dataset_root
        out["manifest"] = self.manifest_path
        out["output_dir"] = self.output_dir
        out["cache_root"] = self.cache_root
        return out

    def echo_config(self):
        os.makedirs(self.output_dir, exist_ok=True)
        path = os.path.join(self.output_dir, "config.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.resolved(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def load_manifest(self):
        if not os.path.exists(self.manifest_path):
            raise ConfigError(f"manifest not found: {self.manifest_path}")
        return load_manifest(self.manifest_path)

    def battery(self, manifest):
        if self.protocols is not None:
            return self.protocols
        return standard_protocols(manifest.views())

    def network(self):
        if self.weights_path:
            if not os.path.exists(self.weights_path):
                raise ConfigError(f"weights not found: {self.weights_path}")
            weights = read_container(self.weights_path)
            return load_network(self.spec, weights)
        return load_network(self.spec, seed=self.seed)


# ------------------------------------------------------------------ stages


def _preprocessed_frames(entry_path: str, input_size: int):
    frames = read_clip_frames(entry_path)
    return [preprocess_frame(f, input_size) for f in frames]


def cmd_generate_synth(ctx: RunContext, args) -> int:
    params = SynthParams(
        classes=args.classes,
        views=tuple(int(v) for v in args.views.split(",")),
        train_clips=args.train_clips,
        test_clips=args.test_clips,
        frames=args.frames,
        size=args.size,
        seed=ctx.seed,
    )
    manifest = generate_dataset(ctx.dataset_root, params, force=args.force)
    log.info("generate-synth: %d clips under %s", len(manifest), ctx.dataset_root)
    return 0


def _clip_cache_complete(clip_dir: str, cache: str, clip_id: str, size: int) -> bool:
    """True when every frame pair of the clip already has a cached flow."""
    if not os.path.isdir(clip_dir):
        return False
    n = sum(1 for name in os.listdir(clip_dir) if name.lower().endswith(FRAME_SUFFIXES))
    if n < 2:
        return False
    stem = os.path.join(cache, clip_id, f"{size}x{size}")
    return all(os.path.exists(f"{stem}_{i:04d}.vflo") for i in range(n - 1))


def cmd_flow(ctx: RunContext, args) -> int:
    manifest = ctx.load_manifest()
    if len(manifest) == 0:
        log.warning("flow: manifest lists 0 clips; nothing to do")
        return 0
    cache = ctx.cache_root
    os.makedirs(cache, exist_ok=True)
    failures = []
    done = 0
    skipped = 0
    for entry in sorted(manifest.entries, key=lambda e: e.id):
        clip_cache = os.path.join(cache, entry.id)
        if args.force and os.path.isdir(clip_cache):
            shutil.rmtree(clip_cache)
        elif _clip_cache_complete(entry.path, cache, entry.id, ctx.spec.input_size):
            skipped += 1
            log.info("flow: %s already cached, skipping", entry.id)
            continue
        try:
            frames = _preprocessed_frames(entry.path, ctx.spec.input_size)
            clip_flow_volume(
                frames,
                ctx.flow_params,
                ctx.spec.min_frames,
                cache_dir=cache,
                clip_id=entry.id,
            )
            done += 1
            log.info("flow: %s ok (%d frames)", entry.id, len(frames))
        except (ViewflowError, OSError) as exc:
            failures.append((entry.id, f"{type(exc).__name__}: {exc}"))
            log.error("flow: %s failed: %s", entry.id, exc)
    log.info("flow: %d clips cached, %d skipped, %d failed", done, skipped, len(failures))
    return 3 if failures else 0


def cmd_extract(ctx: RunContext, args) -> int:
    manifest = ctx.load_manifest()
    if len(manifest) == 0:
        log.warning("extract: manifest lists 0 clips; nothing to do")
        return 0
    if not os.path.isdir(ctx.cache_root):
        raise StageError("flow stage missing: no flow cache at "
                         f"{ctx.cache_root}; run the flow stage first", stage="flow")
    features_dir = os.path.join(ctx.stage_dir("extract"), "features")
    network = ctx.network()
    result = extract_features(
        manifest,
        network,
        ctx.flow_params,
        features_dir,
        cache_dir=ctx.cache_root,
        force=args.force,
        jobs=ctx.jobs,
    )
    log.info(
        "extract: %d written, %d skipped, %d failed",
        len(result.written),
        len(result.skipped),
        len(result.errors),
    )
    for clip_id, message in result.errors:
        log.error("extract: %s failed: %s", clip_id, message)
    return 3 if result.errors else 0


def _load_feature_store(features_dir: str) -> dict:
    index = read_index(features_dir)
    store = {}
    for clip_id, meta in index.items():
        path = os.path.join(features_dir, meta["file"])
        store[clip_id] = FeatureBlock(values=read_feature(path), clip_id=clip_id)
    return store


def _checkpoint_path(ctx: RunContext, proto) -> str:
    return os.path.join(ctx.stage_dir("train"), f"{ctx.head}_{slug(proto.name)}.vwtc")


def cmd_train(ctx: RunContext, args) -> int:
    manifest = ctx.load_manifest()
    features_dir = os.path.join(ctx.stage_dir("extract"), "features")
    if not os.path.isfile(os.path.join(features_dir, "index.json")):
        raise StageError("extract stage missing: no features at "
                         f"{features_dir}; run the extract stage first", stage="extract")
    store = _load_feature_store(features_dir)
    protocols = ctx.battery(manifest)
    os.makedirs(ctx.stage_dir("train"), exist_ok=True)

    def train_one(proto):
        path = _checkpoint_path(ctx, proto)
        sidecar = os.path.splitext(path)[0] + ".json"
        if not args.force and os.path.exists(path) and os.path.exists(sidecar):
            log.info("train: %s already trained, skipping", proto.name)
            return None
        train_set, _ = build_split(manifest, proto)
        feats, labels = [], []
        for entry in train_set:
            if entry.id not in store:
                raise InputError(f"no extracted features for clip {entry.id!r}")
            feats.append(store[entry.id])
            labels.append(entry.label)
        cfg = replace(ctx.train_config, seed=derive_seed(ctx.seed, proto.name))
        result = train(ctx.head, feats, labels, cfg, class_names=sorted(set(labels)))
        save_checkpoint(
            result.model,
            path,
            train_config={"protocol": proto.name, **cfg.to_json()},
        )
        log.info(
            "train: %s done in %d epochs (final loss %.4f)",
            proto.name,
            result.epochs,
            result.losses[-1],
        )
        return None

    failures = []
    if ctx.jobs > 1:
        with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
            futures = {pool.submit(train_one, p): p for p in protocols}
            for future, proto in futures.items():
                try:
                    future.result()
                except ViewflowError as exc:
                    failures.append((proto.name, str(exc)))
    else:
        for proto in protocols:
            try:
                train_one(proto)
            except ViewflowError as exc:
                failures.append((proto.name, str(exc)))
    for name, message in failures:
        log.error("train: protocol %s failed: %s", name, message)
    return 3 if failures else 0


def cmd_eval(ctx: RunContext, args) -> int:
    manifest = ctx.load_manifest()
    train_dir = ctx.stage_dir("train")
    protocols = ctx.battery(manifest)
    have = [p for p in protocols if os.path.exists(_checkpoint_path(ctx, p))]
    if not have:
        raise StageError("train stage missing: no checkpoints under "
                         f"{train_dir}; run the train stage first", stage="train")
    features_dir = os.path.join(ctx.stage_dir("extract"), "features")
    if not os.path.isfile(os.path.join(features_dir, "index.json")):
        raise StageError("extract stage missing: no features at "
                         f"{features_dir}; run the extract stage first", stage="extract")
    store = _load_feature_store(features_dir)

    os.makedirs(ctx.stage_dir("eval"), exist_ok=True)
    out_path = os.path.join(ctx.stage_dir("eval"), "eval.json")
    results = []
    failures = []
    for proto in protocols:
        path = _checkpoint_path(ctx, proto)
        if not os.path.exists(path):
            failures.append((proto.name, "checkpoint missing"))
            continue
        try:
            model, _meta = load_checkpoint(path)
            _, test_set = build_split(manifest, proto)
            pairs = []
            for entry in test_set:
                if entry.id not in store:
                    raise InputError(f"no extracted features for clip {entry.id!r}")
                pairs.append((store[entry.id], entry.label))
            scored = evaluate(
                model, pairs, batch_size=ctx.train_config.batch_size, protocol=proto.name
            )
            results.append(scored)
            log.info("eval: %s accuracy %.2f%%", proto.name, scored.accuracy)
        except ViewflowError as exc:
            failures.append((proto.name, str(exc)))
            log.error("eval: protocol %s failed: %s", proto.name, exc)

    payload = {
        "head": ctx.head,
        "results": [
            {
                "protocol": r.protocol,
                "accuracy": r.accuracy,
                "confusion": r.confusion.tolist(),
                "class_names": list(r.class_names),
                "per_class": list(r.per_class),
            }
            for r in results
        ],
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("eval: %d protocols scored, %d failed", len(results), len(failures))
    return 3 if failures else 0


def cmd_report(ctx: RunContext, args) -> int:
    eval_path = os.path.join(ctx.stage_dir("eval"), "eval.json")
    if not os.path.isfile(eval_path):
        raise StageError("eval stage missing: no results at "
                         f"{eval_path}; run the eval stage first", stage="eval")
    with open(eval_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    results = tuple(
        EvalResult(
            protocol=r["protocol"],
            accuracy=float(r["accuracy"]),
            confusion=np.asarray(r["confusion"], dtype=np.int64),
            class_names=tuple(r["class_names"]),
            per_class=tuple(r["per_class"]),
        )
        for r in payload["results"]
    )
    if not results:
        raise StageError("eval stage missing: eval.json holds no results; "
                         "run the eval stage first", stage="eval")
    suite = SuiteResult(head=payload["head"], results=results)
    written = render_report([suite], ctx.stage_dir("report"))
    log.info("report: wrote %d files under %s", len(written), ctx.stage_dir("report"))
    return 0


def cmd_run_all(ctx: RunContext, args) -> int:
    worst = 0
    for stage in STAGE_ORDER:
        code = COMMANDS[stage](ctx, args)
        if code in (2, 4):
            return code
        worst = max(worst, code)
    return worst


COMMANDS = {
    "generate-synth": cmd_generate_synth,
    "flow": cmd_flow,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "run-all": cmd_run_all,
}


# ------------------------------------------------------------------ wiring


class JsonLogFormatter(logging.Formatter):
    def format(self, record):
        entry = {
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        return json.dumps(entry, sort_keys=True)


def configure_logging(json_logs: bool):
    handler = logging.StreamHandler(sys.stderr)
    if json_logs:
        handler.setFormatter(JsonLogFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.INFO)


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file")
    shared.add_argument("--root", help="dataset root directory")
    shared.add_argument("--manifest", help="manifest path (default root/manifest.json)")
    shared.add_argument("--spec", help="network spec name or JSON path")
    shared.add_argument("--weights", help="weight container for the backbone")
    shared.add_argument("--head", choices=("slp", "conv3d"), help="classifier head kind")
    shared.add_argument("--output", help="output directory")
    shared.add_argument("--seed", type=int, help="master seed (default 17)")
    shared.add_argument("--jobs", type=int, help="parallel workers")
    shared.add_argument(
        "--protocol",
        action="append",
        dest="protocols",
        metavar="SPEC",
        help="protocol like '0,1|2'; repeat for several (default: full battery)",
    )
    shared.add_argument(
        "--set",
        action="append",
        dest="assignments",
        metavar="KEY=VALUE",
        help="override any config key, e.g. --set flow.n_iters=10",
    )
    shared.add_argument("--force", action="store_true", help="recompute existing artifacts")
    shared.add_argument("--json-logs", action="store_true", help="one JSON object per log line")

    parser = argparse.ArgumentParser(
        prog="viewflow",
        description="optical-flow features and cross-view evaluation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("flow", "extract", "train", "eval", "report", "run-all"):
        sub.add_parser(name, parents=[shared])
    gen = sub.add_parser("generate-synth", parents=[shared])
    gen.add_argument("--classes", type=int, default=20)
    gen.add_argument("--train-clips", type=int, default=10)
    gen.add_argument("--test-clips", type=int, default=5)
    gen.add_argument("--frames", type=int, default=9)
    gen.add_argument("--size", type=int, default=80)
    gen.add_argument("--views", default="0,1,2", help="comma-separated view ids")
    return parser


def resolve_config(args) -> dict:
    cfg = default_config()
    if args.config:
        cfg = merge_config(cfg, load_config_file(args.config), args.config)
    flag_map = {
        "dataset_root": args.root,
        "manifest": args.manifest,
        "network_spec": args.spec,
        "weights": args.weights,
        "head": args.head,
        "output_dir": args.output,
        "seed": args.seed,
        "jobs": args.jobs,
        "protocols": args.protocols,
    }
    overrides = {k: v for k, v in flag_map.items() if v is not None}
    cfg = merge_config(cfg, overrides, "flags")
    cfg = apply_set_overrides(cfg, args.assignments)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.json_logs)
    try:
        ctx = RunContext(resolve_config(args))
        ctx.echo_config()
        code = COMMANDS[args.command](ctx, args)
    except StageError as exc:
        log.error("%s", exc)
        return 4
    except ViewflowError as exc:
        log.error("%s", exc)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
