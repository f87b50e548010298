"""End-to-end command line runs on a small synthetic hand dataset."""

import json
import os

import numpy as np
import pytest

from mocapkit.augment import OcclusionStats
from mocapkit.cli import main
from mocapkit.datagen import default_hand_spec, generate_dataset
from mocapkit.metrics import metric_ompe
from mocapkit.sequence import load_sequence
from mocapkit.serialize import dump_json, load_json

# One 5-frame gap per marker; the default histogram floors to zero gaps
# at this scale.
GAP_STATS = OcclusionStats((0.05,) * 19, (5,), (1.0,))


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("dataset")
    generate_dataset(
        str(path),
        count=2,
        n_frames=160,
        seed=11,
        spec=default_hand_spec("left", seed=3),
        stats=GAP_STATS,
    )
    return path


@pytest.fixture(scope="session")
def stats_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("stats") / "target.json"
    dump_json(GAP_STATS.to_dict(), path)
    return str(path)


@pytest.fixture(scope="session")
def cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "pipeline.json"
    dump_json(
        {
            "solver": {
                "marker_widths": [16],
                "global_width": 32,
                "global_blocks": 1,
                "global_feature": 16,
                "local_widths": [16],
                "joint_widths": [16],
            },
            "lr": 0.003,
            "refiner_conv_width": 8,
            "refiner_rnn_width": 8,
        },
        path,
    )
    return str(path)


@pytest.fixture(scope="session")
def solver_model(tmp_path_factory, dataset_dir, cfg_path):
    out = tmp_path_factory.mktemp("models") / "solver.json"
    rc = main(
        [
            "train",
            "solver",
            "--dataset",
            str(dataset_dir),
            "--out",
            str(out),
            "--stream",
            "left_hand",
            "--steps",
            "25",
            "--config",
            cfg_path,
            "--seed",
            "7",
        ]
    )
    assert rc == 0
    return str(out)


@pytest.fixture(scope="session")
def refiner_model(tmp_path_factory, dataset_dir, cfg_path):
    out = tmp_path_factory.mktemp("models") / "refiner.json"
    rc = main(
        [
            "train",
            "refiner",
            "--dataset",
            str(dataset_dir),
            "--out",
            str(out),
            "--stream",
            "left_hand",
            "--steps",
            "15",
            "--config",
            cfg_path,
            "--seed",
            "7",
        ]
    )
    assert rc == 0
    return str(out)


def run(capsys, argv):
    rc = main(argv)
    doc = json.loads(capsys.readouterr().out)
    return rc, doc


def test_augment_refuses_to_run_without_seed(capsys, dataset_dir, tmp_path):
    rc, doc = run(
        capsys,
        [
            "augment",
            "--in",
            str(dataset_dir / "seq_000_clean.json"),
            "--out",
            str(tmp_path / "c.json"),
            "--mask-out",
            str(tmp_path / "m.json"),
        ],
    )
    assert rc == 2
    assert doc["ok"] is False
    assert "--seed" in doc["message"]


def test_missing_input_reports_structured_error(capsys, tmp_path):
    rc, doc = run(
        capsys,
        [
            "clean",
            "--in",
            str(tmp_path / "nope.json"),
            "--out",
            str(tmp_path / "out.json"),
        ],
    )
    assert rc == 2
    assert doc["ok"] is False
    assert doc["error"] == "missing_file"


def test_stats_writes_occlusion_and_neighbor_files(capsys, dataset_dir, tmp_path):
    stats_out = tmp_path / "stats.json"
    table_out = tmp_path / "neighbors.json"
    rc, doc = run(
        capsys,
        [
            "stats",
            "--in",
            str(dataset_dir / "seq_000_corrupted.json"),
            str(dataset_dir / "seq_001_corrupted.json"),
            "--out",
            str(stats_out),
            "--neighbors-out",
            str(table_out),
            "--k",
            "3",
        ],
    )
    assert rc == 0
    assert doc["ok"] is True
    assert doc["sequences"] == 2
    assert doc["k"] == 3
    stats = load_json(stats_out)
    assert len(stats["occlusion_rates"]) == 19
    assert 0.0 < np.mean(stats["occlusion_rates"]) < 1.0
    table = load_json(table_out)
    assert len(table["neighbors"]) == 19


def test_augment_is_byte_deterministic(capsys, dataset_dir, stats_path, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"corr_{tag}.json"
        mask = tmp_path / f"mask_{tag}.json"
        rc, doc = run(
            capsys,
            [
                "augment",
                "--in",
                str(dataset_dir / "seq_000_clean.json"),
                "--out",
                str(out),
                "--mask-out",
                str(mask),
                "--stats",
                stats_path,
                "--seed",
                "21",
            ],
        )
        assert rc == 0
        assert doc["occluded_entries"] > 0
        outs.append((out.read_bytes(), mask.read_bytes()))
    assert outs[0] == outs[1]
    mask = np.asarray(load_json(tmp_path / "mask_a.json")["mask"], bool)
    seq = load_sequence(tmp_path / "corr_a.json")
    assert mask.shape == (seq.n_frames, seq.n_markers)
    assert (seq.visibility[mask] == 0).all()


def test_clean_on_clean_input_is_identity(capsys, dataset_dir, tmp_path):
    src = dataset_dir / "seq_000_clean.json"
    out = tmp_path / "cleaned.json"
    rc, doc = run(capsys, ["clean", "--in", str(src), "--out", str(out)])
    assert rc == 0
    assert doc["outlier_events"] == 0
    assert doc["gaps"] == 0
    assert out.read_bytes() == src.read_bytes()


def test_clean_fills_corrupted_sequence(capsys, dataset_dir, tmp_path):
    out = tmp_path / "cleaned.json"
    report = tmp_path / "report.json"
    rc, doc = run(
        capsys,
        [
            "clean",
            "--in",
            str(dataset_dir / "seq_000_corrupted.json"),
            "--out",
            str(out),
            "--report",
            str(report),
        ],
    )
    assert rc == 0
    assert doc["gaps"] > 0
    assert doc["gaps_filled"] >= 1
    cleaned = load_sequence(out)
    corrupted = load_sequence(dataset_dir / "seq_000_corrupted.json")
    occluded = corrupted.visibility == 0
    assert occluded.sum() > 0
    assert np.isfinite(cleaned.positions[occluded]).all()
    # fills replace the carried coordinates with estimates
    assert not np.array_equal(cleaned.positions[occluded], corrupted.positions[occluded])
    rep = load_json(report)
    assert rep["gaps"][0]["methods"]
    # visibility still marks where measurements were missing
    np.testing.assert_array_equal(cleaned.visibility, corrupted.visibility)


def test_clean_with_refiner_reports_touched_entries(
    capsys, dataset_dir, refiner_model, tmp_path
):
    out = tmp_path / "refined.json"
    rc, doc = run(
        capsys,
        [
            "clean",
            "--in",
            str(dataset_dir / "seq_000_corrupted.json"),
            "--out",
            str(out),
            "--refiner",
            refiner_model,
        ],
    )
    assert rc == 0
    assert doc["refined_entries"] > 0


def test_solve_writes_motion_and_bvh_deterministically(
    capsys, dataset_dir, solver_model, tmp_path
):
    blobs = []
    for tag in ("a", "b"):
        motion_out = tmp_path / f"motion_{tag}.json"
        bvh_out = tmp_path / f"motion_{tag}.bvh"
        rc, doc = run(
            capsys,
            [
                "solve",
                "--in",
                str(dataset_dir / "seq_000_clean.json"),
                "--model",
                solver_model,
                "--out",
                str(motion_out),
                "--bvh",
                str(bvh_out),
            ],
        )
        assert rc == 0
        assert doc["stream"] == "left_hand"
        assert doc["frames"] == 160
        assert doc["joints"] == 16
        blobs.append((motion_out.read_bytes(), bvh_out.read_bytes()))
    assert blobs[0] == blobs[1]
    assert blobs[0][1].startswith(b"HIERARCHY")


def test_eval_motion_reports_joe_and_jpe(
    capsys, dataset_dir, solver_model, tmp_path
):
    motion_out = tmp_path / "motion.json"
    rc, _ = run(
        capsys,
        [
            "solve",
            "--in",
            str(dataset_dir / "seq_000_clean.json"),
            "--model",
            solver_model,
            "--out",
            str(motion_out),
        ],
    )
    assert rc == 0
    csv_out = tmp_path / "per_frame.csv"
    rc, doc = run(
        capsys,
        [
            "eval",
            "--pred",
            str(motion_out),
            "--truth",
            str(dataset_dir / "seq_000_motion.json"),
            "--csv",
            str(csv_out),
        ],
    )
    assert rc == 0
    assert doc["kind"] == "motion"
    assert np.isfinite(doc["joe"]) and doc["joe"] >= 0
    assert np.isfinite(doc["jpe"]) and doc["jpe"] >= 0
    lines = csv_out.read_text().splitlines()
    assert lines[0] == "frame,joe,jpe"
    assert len(lines) == 161


def test_eval_sequence_matches_library_value(capsys, dataset_dir, tmp_path):
    cleaned = tmp_path / "cleaned.json"
    rc, _ = run(
        capsys,
        [
            "clean",
            "--in",
            str(dataset_dir / "seq_000_corrupted.json"),
            "--out",
            str(cleaned),
        ],
    )
    assert rc == 0
    rc, doc = run(
        capsys,
        [
            "eval",
            "--pred",
            str(cleaned),
            "--truth",
            str(dataset_dir / "seq_000_clean.json"),
            "--mask",
            str(dataset_dir / "seq_000_mask.json"),
        ],
    )
    assert rc == 0
    assert doc["kind"] == "sequence"
    mask = np.asarray(load_json(dataset_dir / "seq_000_mask.json")["mask"], bool)
    want = metric_ompe(
        load_sequence(cleaned).positions,
        load_sequence(dataset_dir / "seq_000_clean.json").positions,
        mask,
    )
    # stdout floats are canonically rounded to 1e-6
    assert doc["ompe"] == pytest.approx(want, abs=5.1e-7)


def test_eval_rejects_mixed_kinds(capsys, dataset_dir):
    rc, doc = run(
        capsys,
        [
            "eval",
            "--pred",
            str(dataset_dir / "seq_000_clean.json"),
            "--truth",
            str(dataset_dir / "seq_000_motion.json"),
        ],
    )
    assert rc == 2
    assert doc["ok"] is False


def test_train_writes_loss_log(capsys, dataset_dir, cfg_path, tmp_path):
    out = tmp_path / "solver.json"
    log = tmp_path / "loss.csv"
    rc, doc = run(
        capsys,
        [
            "train",
            "solver",
            "--dataset",
            str(dataset_dir),
            "--out",
            str(out),
            "--stream",
            "left_hand",
            "--steps",
            "5",
            "--loss-log",
            str(log),
            "--config",
            cfg_path,
            "--seed",
            "3",
        ],
    )
    assert rc == 0
    assert doc["steps"] == 5
    assert np.isfinite(doc["final_loss"])
    lines = log.read_text().splitlines()
    assert lines[0] == "step,loss"
    assert len(lines) == 6
