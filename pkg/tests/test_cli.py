"""End-to-end command-line flows, exit-code mapping, and output artifacts."""

import numpy as np
import pytest

from skelact.checkpoint import load_checkpoint
from skelact.cli import main
from skelact.model import ModelConfig
from skelact.recognizer import count_flops
from skelact.skeleton import SkeletonSequence, write_jsonl
from skelact.synth import humanoid_topology


def _synth_args(out, per_class=6, classes=4, extra=()):
    return ["synth", "--classes", str(classes), "--per-class", str(per_class),
            "--noise", "0.02", "--out", str(out), *extra]


def _train_args(data, ckpt, log=None, extra=()):
    args = ["train", "--data", str(data), "--epochs", "2", "--batch", "8",
            "--channels", "2", "4", "8", "--fc-hidden", "16", "--scale-hidden", "8",
            "--out-checkpoint", str(ckpt), *extra]
    if log is not None:
        args += ["--log", str(log)]
    return args


@pytest.fixture()
def dataset(tmp_path):
    path = tmp_path / "data.jsonl"
    assert main(_synth_args(path)) == 0
    return path


def _has_header(path, header):
    with open(path, "rb") as fh:
        return fh.read(len(header)) == header


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_dataset_and_reports(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    assert main(_synth_args(out, per_class=3)) == 0
    assert out.exists()
    assert "sequences=12 classes=4" in capsys.readouterr().out


def test_synth_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(_synth_args(a))
    main(_synth_args(b))
    assert a.read_bytes() == b.read_bytes()


def test_seed_env_override_and_flag_priority(tmp_path, monkeypatch):
    base, env, flag = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "c.jsonl"
    main(_synth_args(base))
    monkeypatch.setenv("AFE_SEED", "7")
    main(_synth_args(env))
    assert base.read_bytes() != env.read_bytes()
    main(_synth_args(flag, extra=["--seed", "0"]))  # explicit flag beats env
    assert base.read_bytes() == flag.read_bytes()
    monkeypatch.setenv("AFE_SEED", "not-a-number")
    assert main(_synth_args(tmp_path / "d.jsonl")) == 1


# ---------------------------------------------------------------------------
# train / eval


def test_train_eval_round_trip(tmp_path, dataset, capsys):
    ckpt = tmp_path / "model.ckpt"
    log = tmp_path / "train.csv"
    assert main(_train_args(dataset, ckpt, log)) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("2,")  # final epoch line
    lines = log.read_text().strip().split("\n")
    assert len(lines) == 2
    assert all(len(line.split(",")) == 4 for line in lines)

    out_dir = tmp_path / "report"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(dataset),
                 "--out-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "accuracy " in out
    assert out.count("class ") == 4
    csv = (out_dir / "confusion.csv").read_text().strip().split("\n")
    assert len(csv) == 4 and all(len(r.split(",")) == 4 for r in csv)
    assert _has_header(out_dir / "confusion.ppm", b"P6\n4 4\n255\n")


def test_train_is_byte_deterministic(tmp_path, dataset):
    c1, l1 = tmp_path / "a.ckpt", tmp_path / "a.csv"
    c2, l2 = tmp_path / "b.ckpt", tmp_path / "b.csv"
    assert main(_train_args(dataset, c1, l1)) == 0
    assert main(_train_args(dataset, c2, l2)) == 0
    assert c1.read_bytes() == c2.read_bytes()
    assert l1.read_bytes() == l2.read_bytes()


def test_train_respects_stage_toggles(tmp_path, dataset):
    ckpt = tmp_path / "slim.ckpt"
    assert main(_train_args(dataset, ckpt, extra=["--no-velocity", "--no-attention"])) == 0
    params = load_checkpoint(ckpt)
    assert params.config.flags.velocity is False
    assert params.config.flags.attention is False
    assert len(params.streams) == 2


def test_eval_checkpoint_topology_mismatch_is_exit_3(tmp_path, dataset):
    ckpt = tmp_path / "model.ckpt"
    main(_train_args(dataset, ckpt))
    rng = np.random.default_rng(0)
    foreign = tmp_path / "kinect.jsonl"
    write_jsonl([
        SkeletonSequence(rng.normal(size=(4, 25, 3)).astype(np.float32),
                         action_label=i % 2, subject_id=i, camera_id=1)
        for i in range(6)
    ], foreign)
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(foreign)]) == 3


def test_eval_rejects_corrupt_checkpoint(tmp_path, dataset):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + b"\x00" * 64)
    assert main(["eval", "--checkpoint", str(bad), "--data", str(dataset)]) == 2


# ---------------------------------------------------------------------------
# encode


def test_encode_writes_five_images(tmp_path, dataset, capsys):
    out_dir = tmp_path / "imgs"
    assert main(["encode", "--init", "--data", str(dataset), "--seed", "0",
                 "--out-dir", str(out_dir)]) == 0
    assert "wrote 5 images" in capsys.readouterr().out
    for name in ("enhanced_joints.ppm", "enhanced_bones.ppm", "joint_velocity.ppm",
                 "bone_velocity.ppm", "attention.ppm"):
        assert _has_header(out_dir / name, b"P6\n64 64\n255\n"), name


def test_encode_is_byte_deterministic(tmp_path, dataset):
    d1, d2 = tmp_path / "x", tmp_path / "y"
    for d in (d1, d2):
        assert main(["encode", "--init", "--data", str(dataset), "--seed", "3",
                     "--out-dir", str(d)]) == 0
    for name in ("enhanced_joints.ppm", "attention.ppm", "bone_velocity.ppm"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_encode_from_checkpoint_respects_flags(tmp_path, dataset, capsys):
    ckpt = tmp_path / "slim.ckpt"
    main(_train_args(dataset, ckpt, extra=["--no-velocity"]))
    out_dir = tmp_path / "imgs"
    assert main(["encode", "--checkpoint", str(ckpt), "--data", str(dataset),
                 "--out-dir", str(out_dir)]) == 0
    assert "wrote 3 images" in capsys.readouterr().out
    assert not (out_dir / "joint_velocity.ppm").exists()


def test_encode_usage_errors(tmp_path, dataset):
    assert main(["encode", "--data", str(dataset), "--out-dir", str(tmp_path)]) == 1
    assert main(["encode", "--init", "--data", str(dataset), "--sequence", "999",
                 "--out-dir", str(tmp_path)]) == 1


# ---------------------------------------------------------------------------
# ingest


def _skeleton_file(dir_path, name, offsets):
    lines = [str(len(offsets))]
    for off in offsets:
        lines.append("1")
        lines.append("8 0 1 1 1 1 0 0.1 -0.2 2 0")
        lines.append("25")
        for j in range(25):
            lines.append(f"{off + j * 0.01:.4f} 0.5 1.0 0 0 0 0 0 0 0 0 2")
    path = dir_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


def test_ingest_skips_bad_files_but_continues(tmp_path, capsys):
    src = tmp_path / "raw"
    src.mkdir()
    _skeleton_file(src, "S001C001P001R001A001.skeleton", [0.0, 0.1])
    _skeleton_file(src, "S001C002P002R001A002.skeleton", [0.0, 0.2, 0.4])
    (src / "S001C003P003R001A003.skeleton").write_text("not a number\n")
    out = tmp_path / "data.jsonl"
    assert main(["ingest", "--ntu-dir", str(src), "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "skipping S001C003P003R001A003.skeleton" in captured.err
    assert "sequences=2 classes=2 subjects=2 cameras=2" in captured.out


def test_ingest_with_nothing_usable_is_exit_2(tmp_path, capsys):
    src = tmp_path / "raw"
    src.mkdir()
    (src / "S001C001P001R001A001.skeleton").write_text("garbage\n")
    assert main(["ingest", "--ntu-dir", str(src), "--out", str(tmp_path / "o.jsonl")]) == 2
    assert "no sequences ingested" in capsys.readouterr().err
    assert main(["ingest", "--out", str(tmp_path / "o.jsonl")]) == 1


def test_ingest_merges_existing_jsonl(tmp_path, dataset, capsys):
    src = tmp_path / "raw"
    src.mkdir()
    _skeleton_file(src, "S001C001P001R001A001.skeleton", [0.0, 0.1])
    out = tmp_path / "merged.jsonl"
    assert main(["ingest", "--ntu-dir", str(src), "--jsonl", str(dataset),
                 "--out", str(out)]) == 0
    assert "sequences=25" in capsys.readouterr().out  # 1 parsed + 24 merged


# ---------------------------------------------------------------------------
# bench and exit codes


def test_bench_reports_latency_and_cost(capsys):
    assert main(["bench", "--iters", "3", "--warmup", "1", "--seed", "0"]) == 0
    out = capsys.readouterr().out.strip().split("\n")
    assert out[0].startswith("# ")
    fields = dict(line.split("=", 1) for line in out[1:])
    assert set(fields) == {"mean_ms", "median_ms", "p95_ms", "gflops", "params"}
    assert float(fields["mean_ms"]) > 0
    assert float(fields["p95_ms"]) >= float(fields["median_ms"]) * 0.5
    topo = humanoid_topology()
    config = ModelConfig(joints=15, classes=8, bones=topo.bones, root=topo.root,
                         labels=tuple(range(8)))
    report = count_flops(config)
    assert fields["gflops"] == repr(report.total_flops / 1e9)
    assert int(fields["params"]) == report.param_count


def test_exit_codes(tmp_path, dataset):
    assert main(["train", "--data", str(dataset), "--bogus-flag"]) == 1
    assert main(["no-such-command"]) == 1
    corrupt = tmp_path / "broken.jsonl"
    corrupt.write_text("{oops\n")
    assert main(_train_args(corrupt, tmp_path / "x.ckpt")) == 2
    missing = tmp_path / "missing.jsonl"
    assert main(_train_args(missing, tmp_path / "x.ckpt")) == 2
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(_train_args(empty, tmp_path / "x.ckpt")) == 2
