"""Train/test protocols over camera views.

A protocol names which views supply training clips and which supply test
clips, written "0,1|2" (sources left of the bar, targets right, both
ascending). Generators below enumerate the standard families: same-view,
all-views, one-view-out and one-one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import ProtocolError


@dataclass(frozen=True)
class ProtocolSpec:
    source_views: tuple
    target_views: tuple

    def __post_init__(self):
        object.__setattr__(self, "source_views", _check_views(self.source_views, "source"))
        object.__setattr__(self, "target_views", _check_views(self.target_views, "target"))

    @property
    def name(self) -> str:
        src = ",".join(str(v) for v in self.source_views)
        tgt = ",".join(str(v) for v in self.target_views)
        return f"{src}|{tgt}"

    def __str__(self):
        return self.name


def _check_views(views, side) -> tuple:
    try:
        views = tuple(sorted({int(v) for v in views}))
    except (TypeError, ValueError):
        raise ProtocolError(f"{side} views must be integers, got {views!r}") from None
    if not views:
        raise ProtocolError(f"{side} view set is empty")
    if any(v < 0 for v in views):
        raise ProtocolError(f"{side} views must be non-negative, got {views}")
    return views


def parse_protocol(text: str) -> ProtocolSpec:
    """Parse "0,1|2" into a ProtocolSpec."""
    parts = text.split("|")
    if len(parts) != 2:
        raise ProtocolError(
            f"protocol {text!r} is not of the form 'sources|targets'"
        )

    def views(part, side):
        items = [p.strip() for p in part.split(",") if p.strip()]
        if not items:
            raise ProtocolError(f"protocol {text!r} has no {side} views")
        try:
            return tuple(int(p) for p in items)
        except ValueError:
            raise ProtocolError(
                f"protocol {text!r} has a non-integer {side} view"
            ) from None

    return ProtocolSpec(views(parts[0], "source"), views(parts[1], "target"))


def same_view_protocols(views: Iterable[int]) -> tuple:
    return tuple(ProtocolSpec((v,), (v,)) for v in sorted(set(views)))


def one_one_protocols(views: Iterable[int]) -> tuple:
    """All ordered pairs of distinct views, lexicographic."""
    vs = sorted(set(views))
    return tuple(
        ProtocolSpec((i,), (j,)) for i in vs for j in vs if i != j
    )


def one_view_out_protocols(views: Iterable[int]) -> tuple:
    """Train on all views but one, test on the held-out view."""
    vs = sorted(set(views))
    out = []
    for held in vs:
        rest = tuple(v for v in vs if v != held)
        out.append(ProtocolSpec(rest, (held,)))
    # ascending by source tuple, which for three views yields
    # 0,1|2  0,2|1  1,2|0
    return tuple(sorted(out, key=lambda p: p.source_views))


def standard_protocols(views: Iterable[int]) -> tuple:
    """The default protocol battery for a dataset with the given views.

    Same-view baselines, the all-views protocol, every one-view-out
    combination and every one-one pair, in that order. Three views give
    the familiar 13 columns:

        0|0 1|1 2|2 0,1,2|0,1,2 0,1|2 0,2|1 1,2|0
        0|1 0|2 1|0 1|2 2|0 2|1

    A single-view dataset only has its same-view baseline.
    """
    vs = tuple(sorted(set(views)))
    if not vs:
        raise ProtocolError("no views to build protocols from")
    if len(vs) == 1:
        return same_view_protocols(vs)
    battery = list(same_view_protocols(vs))
    battery.append(ProtocolSpec(vs, vs))
    battery.extend(one_view_out_protocols(vs))
    battery.extend(one_one_protocols(vs))
    # with two views, leave-one-out and one-one coincide; keep the first
    seen = set()
    unique = []
    for proto in battery:
        if proto.name not in seen:
            seen.add(proto.name)
            unique.append(proto)
    return tuple(unique)


def check_views_available(protocols: Sequence[ProtocolSpec], available: Iterable[int]):
    """Raise ProtocolError if any protocol references a view the dataset lacks."""
    have = set(available)
    for proto in protocols:
        used = set(proto.source_views) | set(proto.target_views)
        missing = sorted(used - have)
        if missing:
            raise ProtocolError(
                f"protocol {proto.name} references absent view(s) "
                f"{', '.join(str(v) for v in missing)}"
            )
