import csv
import json

import numpy as np
import pytest

from divc.cli import build_parser, load_config, main
from divc.nnet.modelfile import save_model
from divc.volume import read_volume

SUBCOMMANDS = ["make-volume", "train", "compress", "decompress", "mesh", "atlas", "eval", "sweep", "pipeline"]


def test_help_lists_every_subcommand(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for name in SUBCOMMANDS:
        assert name in out


def test_make_volume(tmp_path):
    out = tmp_path / "v.tsdf"
    assert main(["make-volume", "--scene", "sphere", "--dims", "16,24,32", "--voxel", "4", "--tau", "8", "-o", str(out)]) == 0
    v = read_volume(out)
    assert v.dims == (16, 24, 32) and v.voxel_size == 4.0 and v.tau == 8.0


def test_seed_from_environment(tmp_path, monkeypatch):
    a, b, c = (tmp_path / f"{n}.tsdf" for n in "abc")
    main(["make-volume", "--scene", "random", "--dims", "32", "--seed", "1", "-o", str(a)])
    monkeypatch.setenv("DIVC_SEED", "1")
    main(["make-volume", "--scene", "random", "--dims", "32", "--seed", "2", "-o", str(b)])
    monkeypatch.setenv("DIVC_SEED", "3")
    main(["make-volume", "--scene", "random", "--dims", "32", "--seed", "1", "-o", str(c)])
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# volume\nscene = torus\ndims = 16,16,16\noutput = %s\n" % (tmp_path / "t.tsdf"))
    assert load_config(cfg)["scene"] == "torus"
    assert main(["make-volume", "--config", str(cfg)]) == 0
    assert read_volume(tmp_path / "t.tsdf").dims == (16, 16, 16)
    # flags override the file
    assert main(["make-volume", "--config", str(cfg), "--dims", "8,8,8"]) == 0
    assert read_volume(tmp_path / "t.tsdf").dims == (8, 8, 8)
    cfg.write_text("bogus = 1\n")
    with pytest.raises(SystemExit):
        main(["make-volume", "--config", str(cfg), "-o", "x"])


def test_codec_commands(tmp_path, small_model):
    m = tmp_path / "m.divm"
    save_model(m, small_model)
    v, c, d = tmp_path / "v.tsdf", tmp_path / "v.divc", tmp_path / "d.tsdf"
    main(["make-volume", "--scene", "blend", "--dims", "32,32,32", "-o", str(v)])
    assert main(["compress", "-m", str(m), str(v), "-o", str(c)]) == 0
    assert main(["decompress", "-m", str(m), str(c), "-o", str(d), "--stats", str(tmp_path / "s.json")]) == 0
    stats = json.loads((tmp_path / "s.json").read_text())
    assert stats["total"] == 8 * c.stat().st_size
    assert np.array_equal(read_volume(d).positive(), read_volume(v).positive())

    assert main(["mesh", str(c), "-m", str(m), "-o", str(tmp_path / "d.obj")]) == 0
    assert (tmp_path / "d.obj").read_text().startswith("v ")

    assert main(["atlas", "-m", str(m), str(c), str(c), "--res", "128", "--color", "checker",
                 "-o", str(tmp_path / "frame_%04d.ppm"), "--obj", str(tmp_path / "frame_%04d.obj")]) == 0
    f0, f1 = (tmp_path / "frame_0000.ppm").read_bytes(), (tmp_path / "frame_0001.ppm").read_bytes()
    assert f0 == f1 and f0.startswith(b"P6")
    assert "vt " in (tmp_path / "frame_0000.obj").read_text()

    out = tmp_path / "metrics.csv"
    assert main(["eval", "--orig", str(v), "--decoded", str(d), "--samples", "2", "-o", str(out)]) == 0
    row = next(csv.DictReader(out.open()))
    assert row["topology_equal"] == "True" and 0 < float(row["chamfer_mm"]) <= float(row["hausdorff_mm"])


def test_train_command(tmp_path):
    out = tmp_path / "m.divm"
    assert main(["train", "--synthetic", "2", "--steps", "3", "--layers", "2", "--lam", "0.01", "-o", str(out)]) == 0
    from divc.nnet.modelfile import load_model

    assert load_model(out).arch.n_layers == 2
    with pytest.raises(SystemExit):
        main(["train", "--steps", "1", "-o", str(out)])


def test_container_input_needs_model(tmp_path, small_model):
    v, c = tmp_path / "v.tsdf", tmp_path / "v.divc"
    save_model(tmp_path / "m.divm", small_model)
    main(["make-volume", "--dims", "16,16,16", "-o", str(v)])
    main(["compress", "-m", str(tmp_path / "m.divm"), str(v), "-o", str(c)])
    with pytest.raises(SystemExit):
        main(["mesh", str(c), "-o", str(tmp_path / "x.obj")])


def test_parser_defaults():
    args = build_parser().parse_args(["pipeline"])
    assert args.seed == 42 and args.steps is None
