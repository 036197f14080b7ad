import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isle.image_io import (
    FormatError,
    Image,
    LabelTable,
    read_labels_csv,
    read_pgm,
    write_labels_csv,
    write_pgm,
)


def test_smallest_pgm():
    img = read_pgm(b"P5 2 2 255\n" + bytes([0, 1, 2, 3]))
    assert (img.width, img.height, img.bit_depth) == (2, 2, 8)
    assert img.pixels.ravel().tolist() == [0, 1, 2, 3]


def test_16bit_is_big_endian():
    img = read_pgm(b"P5 1 1 65535\n" + bytes([0x01, 0x00]))
    assert img.bit_depth == 16
    assert int(img.pixels[0, 0]) == 256


def test_comments_after_magic():
    img = read_pgm(b"P5\n# made by hand\n2 1\n# another\n255\n\x05\x06")
    assert img.pixels.ravel().tolist() == [5, 6]


def test_write_8bit_canonical():
    img = Image.from_array([[7]], 8)
    assert write_pgm(img) == b"P5\n1 1\n255\n\x07"


def test_write_16bit_endianness():
    img = Image.from_array([[256, 1]], 16)
    data = write_pgm(img)
    assert data.startswith(b"P5\n2 1\n65535\n")
    assert data[-4:] == bytes([0x01, 0x00, 0x00, 0x01])


def test_small_maxval_reads_as_8bit():
    img = read_pgm(b"P5 2 1 15\n\x0f\x00")
    assert img.bit_depth == 8


@pytest.mark.parametrize(
    "data",
    [
        b"P6 1 1 255\n\x00",
        b"P5 1 1\n",
        b"P5 a 1 255\n\x00",
        b"P5 1 1 0\n",
        b"P5 1 1 70000\n\x00\x00",
        b"P5 0 1 255\n",
        b"P5 1 1 9\n\x0a",
    ],
)
def test_malformed_headers(data):
    with pytest.raises(FormatError):
        read_pgm(data)


@pytest.mark.parametrize("depth", [8, 16])
def test_short_payload_rejected(depth):
    maxval = (1 << depth) - 1
    full = 3 * 2 * depth // 8
    for short in range(full):
        with pytest.raises(FormatError, match="truncated"):
            read_pgm(f"P5 3 2 {maxval}\n".encode() + b"\x00" * short)


@settings(max_examples=100, deadline=None)
@given(
    w=st.integers(1, 64),
    h=st.integers(1, 64),
    depth=st.sampled_from([8, 16]),
    seed=st.integers(0, 2**32 - 1),
)
def test_pgm_round_trip(w, h, depth, seed):
    rng = np.random.default_rng(seed)
    img = Image.from_array(rng.integers(0, 1 << depth, size=(h, w)), depth)
    data = write_pgm(img)
    assert read_pgm(data) == img
    assert write_pgm(read_pgm(data)) == data


def test_image_rejects_out_of_range():
    with pytest.raises(ValueError):
        Image.from_array([[256]], 8)
    with pytest.raises(ValueError):
        Image(2, 2, 8, np.zeros((3, 2)))


def test_labels_csv_basic():
    t = read_labels_csv(b"asset_id,a\nx,1\n")
    assert t.label_names == ("a",) and t.asset_ids == ("x",) and t.values == ((1,),)
    t = read_labels_csv(b"asset_id,a,b\nx,1,0\ny,0,1\n")
    assert t.row("y") == (0, 1)
    assert t.as_array().tolist() == [[1, 0], [0, 1]]


@pytest.mark.parametrize(
    "data",
    [
        b"asset_id,a\nx,1,0\n",
        b"asset_id,a\nx,2\n",
        b"asset_id,a\nx,1\nx,0\n",
        b"id,a\nx,1\n",
        b"asset_id,a\nbad id,1\n",
    ],
)
def test_labels_csv_errors(data):
    with pytest.raises(FormatError):
        read_labels_csv(data)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=1, max_size=30))
def test_labels_round_trip(rows):
    table = LabelTable(("a", "b", "c"), tuple(f"id{i}" for i in range(len(rows))), tuple(map(tuple, rows)))
    assert read_labels_csv(write_labels_csv(table)) == table
