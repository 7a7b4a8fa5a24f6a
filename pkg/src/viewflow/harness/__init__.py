"""Evaluation harness: manifests, cross-view protocols, scoring, reports."""

from .evaluate import (
    EvalResult,
    SuiteResult,
    build_split,
    derive_seed,
    evaluate,
    mean_one_one,
    run_protocol_suite,
)
from .manifest import ClipEntry, Manifest, load_manifest, manifest_from_entries
from .protocol import (
    ProtocolSpec,
    one_one_protocols,
    one_view_out_protocols,
    parse_protocol,
    same_view_protocols,
    standard_protocols,
)
from .report import render_report

__all__ = [
    "ClipEntry",
    "EvalResult",
    "Manifest",
    "ProtocolSpec",
    "SuiteResult",
    "build_split",
    "derive_seed",
    "evaluate",
    "load_manifest",
    "manifest_from_entries",
    "mean_one_one",
    "one_one_protocols",
    "one_view_out_protocols",
    "parse_protocol",
    "render_report",
    "run_protocol_suite",
    "same_view_protocols",
    "standard_protocols",
]
