"""Conversion core: readers, permutations, map validation, CLI manifest."""
import json

import numpy as np
import pytest

from vwtc_convert import (
    MapEntry,
    MapError,
    SourceError,
    convert,
    load_name_map,
    scan_container,
)
from vwtc_convert.cli import main as cli_main
from vwtc_convert.readers import CheckpointError


def write_map(path, entries):
    path.write_text(json.dumps({"version": 1, "entries": entries}))
    return path


def test_empty_map_yields_empty_container(tmp_path):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, a=np.ones(3, dtype=np.float32))
    out = tmp_path / "out.vwtc"
    manifest = convert(ckpt, [], out)
    assert manifest == []
    assert list(scan_container(out)) == []


def test_transpose_round_trip_exact(tmp_path):
    src = np.arange(6, dtype=np.float32).reshape(2, 3)
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, **{"block/w": src})
    out = tmp_path / "out.vwtc"
    entries = [MapEntry("block/w", "block/weight", permute=(1, 0))]
    manifest = convert(ckpt, entries, out)
    assert [(m.source, m.target, m.shape) for m in manifest] == [
        ("block/w", "block/weight", (3, 2))
    ]
    ((name, arr),) = scan_container(out)
    assert name == "block/weight"
    assert arr.tobytes() == np.ascontiguousarray(src.T).tobytes()


def test_kernel_permutation_and_squeeze(tmp_path):
    rng = np.random.default_rng(0)
    kernel = rng.standard_normal((3, 5, 5, 2, 8)).astype(np.float32)
    beta = rng.standard_normal((1, 1, 1, 1, 8)).astype(np.float32)
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, **{"c/w": kernel, "c/beta": beta})
    out = tmp_path / "out.vwtc"
    convert(ckpt, [
        MapEntry("c/w", "c/kernel", permute=(4, 3, 0, 1, 2)),
        MapEntry("c/beta", "c/beta", squeeze=True),
    ], out)
    got = dict(scan_container(out))
    assert got["c/kernel"].shape == (8, 2, 3, 5, 5)
    assert got["c/kernel"].tobytes() == np.ascontiguousarray(
        kernel.transpose(4, 3, 0, 1, 2)).tobytes()
    assert got["c/beta"].shape == (8,)
    assert got["c/beta"].tobytes() == beta.reshape(-1).tobytes()


def test_order_follows_the_map(tmp_path):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, a=np.zeros(1, np.float32), b=np.ones(1, np.float32))
    out = tmp_path / "out.vwtc"
    convert(ckpt, [MapEntry("b", "second"), MapEntry("a", "first")], out)
    assert [name for name, _ in scan_container(out)] == ["second", "first"]


def test_missing_sources_all_listed(tmp_path):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, present=np.zeros(1, np.float32))
    with pytest.raises(SourceError) as err:
        convert(ckpt, [
            MapEntry("present", "t0"),
            MapEntry("gone_one", "t1"),
            MapEntry("gone_two", "t2"),
        ], tmp_path / "out.vwtc")
    assert "gone_one" in str(err.value) and "gone_two" in str(err.value)
    assert "2 mapped tensors missing" in str(err.value)


def test_rank_permutation_mismatch(tmp_path):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, w=np.zeros((2, 3), np.float32))
    with pytest.raises(MapError, match="not a permutation of rank 2"):
        convert(ckpt, [MapEntry("w", "t", permute=(0, 1, 2))],
                tmp_path / "out.vwtc")
    with pytest.raises(MapError, match="not a permutation of rank 2"):
        convert(ckpt, [MapEntry("w", "t", permute=(0, 0))],
                tmp_path / "out.vwtc")


def test_non_float_source_rejected(tmp_path):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, step=np.int64(7))
    with pytest.raises(SourceError, match="not a float type"):
        convert(ckpt, [MapEntry("step", "t")], tmp_path / "out.vwtc")


def test_float64_source_cast_to_f32(tmp_path):
    src = np.array([1.0, 1.0 / 3.0], dtype=np.float64)
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, v=src)
    out = tmp_path / "out.vwtc"
    convert(ckpt, [MapEntry("v", "v")], out)
    ((_, arr),) = scan_container(out)
    assert arr.dtype == np.float32
    np.testing.assert_array_equal(arr, src.astype(np.float32))


def test_map_document_validation(tmp_path):
    good = write_map(tmp_path / "m.json", [
        {"source": "a", "target": "x"},
        {"source": "b", "target": "y", "permute": [0], "squeeze": False},
    ])
    entries = load_name_map(good)
    assert entries[1].permute == (0,)

    dup_src = write_map(tmp_path / "d1.json", [
        {"source": "a", "target": "x"}, {"source": "a", "target": "y"}])
    with pytest.raises(MapError, match="duplicate source"):
        load_name_map(dup_src)

    dup_tgt = write_map(tmp_path / "d2.json", [
        {"source": "a", "target": "x"}, {"source": "b", "target": "x"}])
    with pytest.raises(MapError, match="duplicate target"):
        load_name_map(dup_tgt)

    unknown = write_map(tmp_path / "d3.json", [
        {"source": "a", "target": "x", "transpose": [1, 0]}])
    with pytest.raises(MapError, match="unknown keys"):
        load_name_map(unknown)

    (tmp_path / "d4.json").write_text("[1, 2]")
    with pytest.raises(MapError, match="version 1"):
        load_name_map(tmp_path / "d4.json")


def test_unrecognized_checkpoint_format(tmp_path):
    bogus = tmp_path / "weights.bin"
    bogus.write_bytes(b"\x00" * 16)
    with pytest.raises(CheckpointError, match="unrecognized checkpoint format"):
        convert(bogus, [], tmp_path / "out.vwtc")


def test_torch_state_dict_reader(tmp_path):
    torch = pytest.importorskip("torch")
    src = torch.arange(12, dtype=torch.float32).reshape(3, 4)
    ckpt = tmp_path / "w.pt"
    torch.save({"state_dict": {"enc.w": src, "epoch": 3}, "meta": "x"}, ckpt)
    out = tmp_path / "out.vwtc"
    convert(ckpt, [MapEntry("enc.w", "enc/weight", permute=(1, 0))], out)
    ((name, arr),) = scan_container(out)
    assert name == "enc/weight"
    assert arr.tobytes() == np.ascontiguousarray(src.numpy().T).tobytes()


def test_tensorflow_checkpoint_reader(tmp_path):
    tf = pytest.importorskip("tensorflow")
    src = np.arange(8, dtype=np.float32).reshape(2, 4)
    graph = tf.Graph()
    with graph.as_default():
        var = tf.Variable(src, name="Flow/block/w")
        saver = tf.compat.v1.train.Saver({"Flow/block/w": var})
        with tf.compat.v1.Session(graph=graph) as sess:
            sess.run(tf.compat.v1.global_variables_initializer())
            prefix = saver.save(sess, str(tmp_path / "model.ckpt"),
                                write_meta_graph=False)
    out = tmp_path / "out.vwtc"
    convert(prefix, [MapEntry("Flow/block/w", "block/weight")], out)
    ((name, arr),) = scan_container(out)
    assert arr.tobytes() == src.tobytes()
    # pointing at the .index file works too
    convert(prefix + ".index", [MapEntry("Flow/block/w", "block/weight")],
            tmp_path / "out2.vwtc")


def test_cli_convert_prints_manifest(tmp_path, capsys):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, **{"a/w": np.zeros((2, 3), np.float32)})
    map_path = write_map(tmp_path / "m.json",
                         [{"source": "a/w", "target": "a/weight",
                           "permute": [1, 0]}])
    out = tmp_path / "c.vwtc"
    code = cli_main(["convert", "--checkpoint", str(ckpt),
                     "--map", str(map_path), "--out", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "a/w -> a/weight  [3x2]" in captured.out
    assert "converted 1 tensors" in captured.out
    assert out.exists()


def test_cli_convert_failure_exit_code(tmp_path, capsys):
    ckpt = tmp_path / "w.npz"
    np.savez(ckpt, a=np.zeros(1, np.float32))
    map_path = write_map(tmp_path / "m.json",
                         [{"source": "missing", "target": "t"}])
    code = cli_main(["convert", "--checkpoint", str(ckpt),
                     "--map", str(map_path), "--out", str(tmp_path / "c.vwtc")])
    assert code == 1
    assert "missing" in capsys.readouterr().err
