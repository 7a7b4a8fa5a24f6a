"""Protocol evaluation: split, train a head per protocol, score it."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import CoverageError, DataError, LabelError, ProtocolError
from ..heads import models as head_models
from ..heads.train import TrainConfig, train
from .manifest import Manifest
from .protocol import ProtocolSpec, check_views_available, standard_protocols

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalResult:
    """Score of one protocol: accuracy, confusion counts, per-class rates.

    Confusion rows are true classes, columns predictions, in class_names
    order. per_class holds an accuracy percent per class, or None where
    the test split had no examples of it.
    """

    protocol: str
    accuracy: float
    confusion: np.ndarray
    class_names: tuple
    per_class: tuple


@dataclass(frozen=True)
class SuiteResult:
    head: str
    results: tuple


def build_split(manifest: Manifest, protocol: ProtocolSpec):
    """Training entries (TR, source views) and test entries (TE, target views)."""
    train_set = tuple(
        e
        for e in manifest.entries
        if e.split == "TR" and e.view in protocol.source_views
    )
    test_set = tuple(
        e
        for e in manifest.entries
        if e.split == "TE" and e.view in protocol.target_views
    )
    if not train_set:
        raise ProtocolError(f"protocol {protocol.name}: empty train selection")
    if not test_set:
        raise ProtocolError(f"protocol {protocol.name}: empty test selection")
    overlap = {e.id for e in train_set} & {e.id for e in test_set}
    if overlap:
        some = ", ".join(sorted(overlap)[:5])
        raise ProtocolError(
            f"protocol {protocol.name}: train and test share clip ids ({some})"
        )
    return train_set, test_set


def evaluate(model, test_pairs: Sequence, batch_size: int = 16, protocol: str = "") -> EvalResult:
    """Score a trained head on (features, label) pairs."""
    if not test_pairs:
        raise DataError("no test examples to evaluate")
    classes = model.class_names
    index = {name: i for i, name in enumerate(classes)}
    labels = []
    for _, label in test_pairs:
        if label not in index:
            raise LabelError(
                f"test label {label!r} is not among the model's classes"
            )
        labels.append(index[label])

    feats = np.stack(
        [np.asarray(getattr(f, "values", f), dtype=np.float32) for f, _ in test_pairs]
    )
    probs = head_models.predict(model, feats, batch_size=batch_size)
    predicted = np.argmax(probs, axis=1)

    n = len(classes)
    confusion = np.zeros((n, n), dtype=np.int64)
    for true_i, pred_i in zip(labels, predicted):
        confusion[true_i, pred_i] += 1
    accuracy = 100.0 * float(np.trace(confusion)) / float(confusion.sum())
    per_class = []
    for i in range(n):
        row = confusion[i].sum()
        per_class.append(100.0 * float(confusion[i, i]) / float(row) if row else None)
    return EvalResult(
        protocol=protocol,
        accuracy=accuracy,
        confusion=confusion,
        class_names=tuple(classes),
        per_class=tuple(per_class),
    )


def derive_seed(master_seed: int, protocol_name: str) -> int:
    """Stable per-protocol seed so protocols get independent RNG streams."""
    digest = hashlib.sha256(f"{master_seed}:{protocol_name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _features_for(entries, features):
    out = []
    for entry in entries:
        try:
            block = features[entry.id]
        except KeyError:
            raise DataError(f"no extracted features for clip {entry.id!r}") from None
        out.append((block, entry.label))
    return out


def _run_one(manifest, features, head, cfg, proto):
    train_set, test_set = build_split(manifest, proto)
    train_pairs = _features_for(train_set, features)
    test_pairs = _features_for(test_set, features)
    class_names = sorted({label for _, label in train_pairs})
    proto_cfg = replace(cfg, seed=derive_seed(cfg.seed, proto.name))
    result = train(
        head,
        [f for f, _ in train_pairs],
        [label for _, label in train_pairs],
        proto_cfg,
        class_names=class_names,
    )
    scored = evaluate(
        result.model, test_pairs, batch_size=cfg.batch_size, protocol=proto.name
    )
    log.info(
        "protocol %s: accuracy %.2f%% (%d train / %d test clips, %d epochs)",
        proto.name,
        scored.accuracy,
        len(train_pairs),
        len(test_pairs),
        result.epochs,
    )
    return scored


def run_protocol_suite(
    manifest: Manifest,
    features: Mapping,
    head: str,
    cfg: TrainConfig,
    protocols: Optional[Sequence[ProtocolSpec]] = None,
    jobs: int = 1,
) -> SuiteResult:
    """Train and score a fresh head per protocol.

    Each protocol trains from scratch with a seed derived from
    (cfg.seed, protocol name), so results do not depend on suite order
    or on how many protocols run, and jobs > 1 may run them in parallel.
    """
    available = manifest.views()
    if protocols is None:
        protocols = standard_protocols(available)
    check_views_available(protocols, available)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_one, manifest, features, head, cfg, proto)
                for proto in protocols
            ]
            results = tuple(f.result() for f in futures)
    else:
        results = tuple(
            _run_one(manifest, features, head, cfg, proto) for proto in protocols
        )
    return SuiteResult(head=head, results=results)


def _single_view(part: str):
    views = part.split(",")
    return int(views[0]) if len(views) == 1 else None


def mean_one_one(results: Sequence[EvalResult], views=None) -> float:
    """Unweighted mean accuracy over every ordered pair of distinct views.

    Non-pair protocols in the input are ignored. The expected pair set
    comes from `views` when given, otherwise from the views seen in the
    pair results themselves.
    """
    pairs = {}
    for result in results:
        src, _, tgt = result.protocol.partition("|")
        i, j = _single_view(src), _single_view(tgt)
        if i is None or j is None or i == j:
            continue
        if (i, j) in pairs:
            raise CoverageError(
                f"protocol {result.protocol} appears more than once",
                missing=(),
            )
        pairs[(i, j)] = result.accuracy

    if views is None:
        views = sorted({v for pair in pairs for v in pair})
    else:
        views = sorted(set(views))
    expected = [(i, j) for i in views for j in views if i != j]
    if not expected:
        raise CoverageError("no ordered view pairs to average", missing=())
    missing = [f"{i}|{j}" for i, j in expected if (i, j) not in pairs]
    if missing:
        raise CoverageError(
            "one-one results incomplete, missing: " + ", ".join(missing),
            missing=tuple(missing),
        )
    return float(sum(pairs[p] for p in expected) / len(expected))
