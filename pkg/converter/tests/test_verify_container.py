"""Verification: structural integrity, offsets, finiteness, CLI exit codes."""
import struct

import numpy as np
import pytest

from vwtc_convert import IntegrityError, verify, write_container
from vwtc_convert.cli import main as cli_main


@pytest.fixture
def container(tmp_path):
    path = tmp_path / "c.vwtc"
    rng = np.random.default_rng(1)
    write_container(path, [
        ("first/kernel", rng.standard_normal((2, 3, 4)).astype(np.float32)),
        ("second/bias", rng.standard_normal(5).astype(np.float32)),
    ])
    return path


def test_fresh_container_verifies(container):
    assert verify(container) == 2


def test_flipped_magic_reports_offset_zero(container):
    blob = bytearray(container.read_bytes())
    blob[0] ^= 0xFF
    container.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError, match="bad magic at offset 0"):
        verify(container)


def test_truncation_reports_byte_offset(container):
    blob = container.read_bytes()
    cut = len(blob) - 11
    container.write_bytes(blob[:cut])
    with pytest.raises(IntegrityError) as err:
        verify(container)
    msg = str(err.value)
    assert "truncated" in msg
    assert f"file ends at {cut}" in msg
    assert "byte offset" in msg


def test_truncated_header(tmp_path):
    path = tmp_path / "c.vwtc"
    path.write_bytes(b"VWTC\x01\x00")
    with pytest.raises(IntegrityError, match="byte offset 4"):
        verify(path)


def test_injected_nan_names_the_tensor(container):
    blob = bytearray(container.read_bytes())
    # first payload starts after magic(4) version+count(8) namelen(4)
    # name(12) dtype+ndim(2) dims(3*8)
    offset = 4 + 8 + 4 + len("first/kernel") + 2 + 24
    blob[offset:offset + 4] = struct.pack("<f", float("nan"))
    container.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError, match="first/kernel: 1 non-finite"):
        verify(container)


def test_injected_inf_counted(container):
    blob = bytearray(container.read_bytes())
    offset = 4 + 8 + 4 + len("first/kernel") + 2 + 24
    blob[offset:offset + 8] = struct.pack("<ff", float("inf"), float("-inf"))
    container.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError, match="2 non-finite values"):
        verify(container)


def test_unsupported_version(container):
    blob = bytearray(container.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    container.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError, match="version 9"):
        verify(container)


def test_trailing_garbage_rejected(container):
    container.write_bytes(container.read_bytes() + b"xx")
    with pytest.raises(IntegrityError, match="2 trailing bytes"):
        verify(container)


def test_cli_verify_ok(container, capsys):
    assert cli_main(["verify", str(container)]) == 0
    assert capsys.readouterr().out.strip() == "OK, 2 tensors"


def test_cli_verify_failure(container, capsys):
    blob = bytearray(container.read_bytes())
    blob[0] ^= 0xFF
    container.write_bytes(bytes(blob))
    assert cli_main(["verify", str(container)]) == 1
    assert "bad magic" in capsys.readouterr().err


def test_cli_verify_missing_file(tmp_path, capsys):
    assert cli_main(["verify", str(tmp_path / "nope.vwtc")]) == 1
    assert "error" in capsys.readouterr().err
