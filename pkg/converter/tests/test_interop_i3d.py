"""Round trip against the recognition pipeline's full i3d-flow topology.

Builds a synthetic checkpoint with the published release's tensor names and
layouts, converts it with the bundled map, and proves three things: the
container verifies, every payload is bit-identical to the declared
permutation of its source, and the feature extractor binds it with zero
errors.
"""
import time

import numpy as np
import pytest

from viewflow.network.container import read_container
from viewflow.network.model import load_network
from viewflow.network.spec import load_spec

from vwtc_convert import (
    MapEntry,
    convert,
    default_map_path,
    load_name_map,
    scan_container,
    verify,
)


def source_shape(entry, target_shape):
    """Invert the entry's transform to get the checkpoint-side shape."""
    if entry.permute is not None:
        shape = [0] * len(entry.permute)
        for i, axis in enumerate(entry.permute):
            shape[axis] = target_shape[i]
        return tuple(shape)
    if entry.squeeze:
        # per-channel vectors are stored broadcastable: [1,1,1,1,C]
        assert len(target_shape) == 1
        return (1, 1, 1, 1, target_shape[0])
    return target_shape


@pytest.fixture(scope="module")
def fixture(tmp_path_factory):
    base = tmp_path_factory.mktemp("i3d")
    entries = load_name_map(default_map_path())
    reference = load_network(load_spec("i3d-flow"), seed=3)
    assert {e.target for e in entries} == set(reference.params)

    rng = np.random.default_rng(77)
    arrays = {}
    for e in entries:
        shape = source_shape(e, reference.params[e.target].shape)
        if e.source.endswith("moving_variance"):
            arrays[e.source] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        else:
            arrays[e.source] = rng.standard_normal(shape).astype(np.float32)
    # unmapped extras a real checkpoint would carry
    arrays["Flow/inception_i3d/Logits/aux/w"] = np.zeros(4, np.float32)

    ckpt = base / "flow_kinetics.npz"
    np.savez(ckpt, **arrays)
    out = base / "flow_kinetics.vwtc"
    manifest = convert(ckpt, entries, out)
    return entries, arrays, ckpt, out, manifest


def test_convert_verify_bind_round_trip(fixture):
    t0 = time.perf_counter()
    entries, _, _, out, manifest = fixture
    assert len(manifest) == 230
    assert verify(out) == 230

    container = read_container(out)
    network = load_network(load_spec("i3d-flow"), weights=container)
    bound = network.params["Conv3d_1a_7x7/conv/kernel"]
    assert bound.shape == (64, 2, 7, 7, 7)
    print(
        f"\n[acceptance] converter round trip: PASS (convert -> verify -> "
        f"i3d-flow bind, {len(manifest)} tensors, zero binding errors, "
        f"{time.perf_counter() - t0:.1f}s)"
    )


def test_payloads_bit_identical_after_permutation(fixture):
    entries, arrays, _, out, _ = fixture
    stored = dict(scan_container(out))
    assert len(stored) == len(entries)
    for e in entries:
        src = arrays[e.source]
        want = np.transpose(src, e.permute) if e.permute is not None else src
        if e.squeeze:
            want = np.squeeze(want)
        got = stored[e.target]
        assert got.shape == want.shape, e.target
        assert got.tobytes() == np.ascontiguousarray(want).tobytes(), e.target
    print(f"\n[acceptance] payload bit-identity: PASS ({len(entries)} tensors)")


def test_container_extras_are_ignored_by_binding(fixture, tmp_path):
    entries, _, ckpt, _, _ = fixture
    extended = entries + [MapEntry("Flow/inception_i3d/Logits/aux/w", "Debug/aux")]
    out = tmp_path / "extended.vwtc"
    convert(ckpt, extended, out)
    assert verify(out) == 231
    network = load_network(load_spec("i3d-flow"), weights=read_container(out))
    assert "Debug/aux" not in network.params
