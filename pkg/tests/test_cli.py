import json

import numpy as np
import pytest

from conftest import smooth_image
from isle.cli import main
from isle.codestream import decode_partial, encode, parse, serialize, truncate
from isle.image_io import read_labels_csv, read_pgm, write_pgm
from isle.wavelet import forward_2d


@pytest.fixture()
def pgm(tmp_path):
    img = smooth_image(np.random.default_rng(4), 150, 97)
    path = tmp_path / "in.pgm"
    path.write_bytes(write_pgm(img))
    return path, img


def test_encode_decode_round_trip(pgm, tmp_path):
    path, img = pgm
    out = tmp_path / "a.islc"
    assert main(["encode", "--in", str(path), "--out", str(out)]) == 0
    assert serialize(encode(img)) == out.read_bytes()
    back = tmp_path / "back.pgm"
    assert main(["decode", "--in", str(out), "--out", str(back)]) == 0
    assert back.read_bytes() == path.read_bytes()


def test_decode_base_level_dims(pgm, tmp_path):
    path, img = pgm
    out = tmp_path / "a.islc"
    main(["encode", "--in", str(path), "--out", str(out)])
    low = tmp_path / "low.pgm"
    assert main(["decode", "--in", str(out), "--out", str(low), "--d", "0"]) == 0
    cs = parse(out.read_bytes())
    base = read_pgm(low.read_bytes())
    assert (base.width, base.height) == cs.plan.dims(0) == (75, 49)
    pyr = forward_2d(img, cs.n_levels)
    assert np.array_equal(base.pixels, np.clip(pyr.base_ll.coeffs, 0, 255))


def test_decode_range_error(pgm, tmp_path, capsys):
    path, _ = pgm
    out = tmp_path / "a.islc"
    main(["encode", "--in", str(path), "--out", str(out)])
    assert main(["decode", "--in", str(out), "--out", str(tmp_path / "x.pgm"), "--d", "9"]) == 2
    assert "RANGE" in capsys.readouterr().err
    assert not (tmp_path / "x.pgm").exists()


def test_bad_input_exit_codes(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n3 3\n255\n")
    assert main(["encode", "--in", str(bad), "--out", str(tmp_path / "o.islc")]) == 2
    assert main(["encode", "--in", str(tmp_path / "missing.pgm"), "--out", str(tmp_path / "o.islc")]) == 1
    assert not (tmp_path / "o.islc").exists()
    junk = tmp_path / "junk.islc"
    junk.write_bytes(b"ISLC" + b"\0" * 5)
    assert main(["inspect", "--in", str(junk)]) == 2


def test_too_small_image_is_invalid(tmp_path):
    small = tmp_path / "s.pgm"
    small.write_bytes(write_pgm(smooth_image(np.random.default_rng(0), 40, 40)))
    assert main(["encode", "--in", str(small), "--out", str(tmp_path / "s.islc")]) == 2


def test_alpha_from_environment(pgm, tmp_path, monkeypatch):
    path, img = pgm
    monkeypatch.setenv("ISLE_ALPHA", "16")
    out = tmp_path / "a.islc"
    assert main(["encode", "--in", str(path), "--out", str(out)]) == 0
    cs = parse(out.read_bytes())
    assert cs.header.alpha == 16 and cs.n_levels == 2
    monkeypatch.setenv("ISLE_ALPHA", "x")
    assert main(["encode", "--in", str(path), "--out", str(out)]) == 2


def test_inspect_and_truncate(pgm, tmp_path, capsys):
    path, _ = pgm
    out = tmp_path / "a.islc"
    main(["encode", "--in", str(path), "--out", str(out), "--alpha", "16"])
    capsys.readouterr()
    assert main(["inspect", "--in", str(out), "--json"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n_levels"] == 2 and info["present_segments"] == 3
    assert info["file_bytes"] == out.stat().st_size
    assert [r["d"] for r in info["ladder"]] == [0, 1, 2]
    assert info["ladder"][-1]["stream_bytes"] == info["file_bytes"]

    cut = tmp_path / "cut.islc"
    assert main(["truncate", "--in", str(out), "--out", str(cut), "--d", "1"]) == 0
    assert cut.read_bytes() == serialize(truncate(parse(out.read_bytes()), 1))
    main(["inspect", "--in", str(cut), "--json"])
    info = json.loads(capsys.readouterr().out)
    assert info["present_segments"] == 2
    assert [s["present"] for s in info["segments"]] == [True, True, False]
    assert main(["inspect", "--in", str(cut)]) == 0
    assert "(absent)" in capsys.readouterr().out
    assert main(["decode", "--in", str(cut), "--out", str(tmp_path / "x.pgm"), "--d", "2"]) == 2


def test_gen_synthetic_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["gen-synthetic", "--n", "20", "--size", "64", "--labels", "2",
                     "--seed", "3", "--out-dir", str(d), "--encode"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert len([n for n in names if n.endswith(".islc")]) == 20
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    table = read_labels_csv((a / "labels.csv").read_bytes())
    assert table.asset_ids[0] == "syn0000"
    assert (a / "assets.txt").read_text().split() == list(table.asset_ids)
    assert main(["gen-synthetic", "--n", "5", "--out-dir", str(tmp_path / "c")]) == 2
    assert not (tmp_path / "c").exists()


def test_optimize_writes_report_and_figure(tmp_path, capsys):
    corpus = tmp_path / "val"
    main(["gen-synthetic", "--n", "40", "--size", "128", "--labels", "3", "--seed", "1",
          "--out-dir", str(corpus), "--encode"])
    report = tmp_path / "report.json"
    rc = main(["optimize", "--val-dir", str(corpus), "--labels", str(corpus / "labels.csv"),
               "--input-size", "32", "--seed", "1", "--report", str(report)])
    assert rc == 0
    doc = json.loads(report.read_text())
    assert doc["d_min_architecture"] <= doc["chosen_d"] <= doc["plan"]["n_levels"]
    assert doc["n_assets"] == 40
    assert report.with_suffix(".png").read_bytes()[:4] == b"\x89PNG"
    rc = main(["optimize", "--val-dir", str(corpus), "--labels", str(corpus / "labels.csv"),
               "--significance", "2"])
    assert rc == 2


def test_optimize_precomputed_missing_score(tmp_path):
    corpus = tmp_path / "val"
    main(["gen-synthetic", "--n", "20", "--size", "64", "--labels", "2", "--seed", "1",
          "--out-dir", str(corpus), "--encode"])
    scores = tmp_path / "scores.csv"
    scores.write_text("asset_id,d,label0,label1\nsyn0000,0,0.1,0.2\n")
    rc = main(["optimize", "--val-dir", str(corpus), "--labels", str(corpus / "labels.csv"),
               "--scorer", "precomputed", "--scores", str(scores), "--input-size", "32"])
    assert rc == 2


def test_fetch_and_bench(server, small_store, tmp_path, capsys):
    _, streams = small_store
    out = tmp_path / "f.islc"
    assert main(["fetch", "--addr", server.address, "--asset", "asset1", "--d", "1",
                 "--out", str(out)]) == 0
    assert out.read_bytes() == serialize(truncate(streams["asset1"], 1))
    img = tmp_path / "f.pgm"
    assert main(["fetch", "--addr", server.address, "--asset", "asset1", "--d", "0",
                 "--out", str(img)]) == 0
    assert img.read_bytes() == write_pgm(decode_partial(streams["asset1"], 0))
    assert main(["fetch", "--addr", server.address, "--asset", "ghost", "--out", str(out)]) == 1
    assert main(["fetch", "--addr", server.address, "--asset", "asset1", "--d", "9",
                 "--out", str(tmp_path / "r.islc")]) == 2

    assets = tmp_path / "assets.txt"
    assets.write_text("asset0\nasset1\nasset2\n")
    capsys.readouterr()
    report = tmp_path / "bench.json"
    rc = main(["bench", "--addr", server.address, "--assets", str(assets), "--d", "0",
               "--d", "full", "--input-size", "16", "--report", str(report)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split(",")
    assert {"data_transferred_bytes", "decode_time_s", "throughput_ips"} <= set(header)
    assert [ln.split(",")[0] for ln in lines[1:]] == ["d=0", "full"]
    doc = json.loads(report.read_text())
    assert doc["rows"][0]["data_transferred_bytes"] < doc["rows"][1]["data_transferred_bytes"]
    assert report.with_suffix(".png").exists()


def test_unreachable_server_is_io_error(tmp_path):
    import socket
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert main(["fetch", "--addr", f"127.0.0.1:{port}", "--asset", "a",
                 "--out", str(tmp_path / "x.islc")]) == 1
