import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qalign import degradations, imaging, procedural
from qalign.sampling import (
    LadderConfig,
    ManifestRow,
    apply_chain,
    build_ladder,
    crop_iou,
    extract_overlapping_crops,
    generate_corpus,
    load_corpus,
    make_ladder,
    read_manifest,
    replay_ladder,
    write_manifest,
)


@pytest.fixture(scope="module")
def image():
    return procedural.make_image(5, 0, 96)


def test_config_validation():
    with pytest.raises(ValueError):
        LadderConfig(levels=1)
    with pytest.raises(ValueError):
        LadderConfig(levels=6)
    with pytest.raises(ValueError):
        LadderConfig(n_distortions=8)
    with pytest.raises(ValueError):
        LadderConfig(min_overlap=1.0)


def test_iou_formula():
    assert crop_iou((0, 0), (0, 0), 10) == 1.0
    assert crop_iou((0, 0), (0, 5), 10) == pytest.approx(50 / 150)
    assert crop_iou((0, 0), (10, 0), 10) == 0.0


def test_exact_size_gives_identical_crops():
    img = procedural.make_image(1, 0, 32)
    pair = extract_overlapping_crops(img, LadderConfig(patch_size=32), np.random.default_rng(0))
    assert pair.overlap == 1.0
    np.testing.assert_array_equal(pair.crop_a, pair.crop_b)


def test_overlap_bound_over_many_draws():
    img = np.zeros((448, 448, 3))
    cfg = LadderConfig(patch_size=224, min_overlap=0.25)
    rng = np.random.default_rng(0)
    from qalign.sampling import _sample_positions

    for _ in range(1000):
        _, _, iou = _sample_positions(rng, 448, 448, 224, cfg.min_overlap)
        assert iou >= 0.25


def test_position_sampler_is_uniform_over_admissible_pairs():
    """Empirical frequencies match enumeration of the admissible set."""
    from qalign.sampling import _sample_positions

    h, w, s, mo = 6, 6, 3, 0.3
    ny = nx = h - s + 1
    admissible = [
        ((ay, ax), (by, bx))
        for ay in range(ny) for ax in range(nx) for by in range(ny) for bx in range(nx)
        if crop_iou((ay, ax), (by, bx), s) >= mo
    ]
    rng = np.random.default_rng(1)
    n = 40000
    counts = {}
    for _ in range(n):
        a, b, _ = _sample_positions(rng, h, w, s, mo)
        counts[(a, b)] = counts.get((a, b), 0) + 1
    assert set(counts) == set(admissible)
    expected = n / len(admissible)
    chi2 = sum((counts[k] - expected) ** 2 / expected for k in admissible)
    dof = len(admissible) - 1
    assert chi2 < dof + 5 * np.sqrt(2 * dof)


def test_crops_deterministic(image):
    cfg = LadderConfig(patch_size=48)
    a = extract_overlapping_crops(image, cfg, np.random.default_rng(7))
    b = extract_overlapping_crops(image, cfg, np.random.default_rng(7))
    assert (a.rect_a, a.rect_b) == (b.rect_a, b.rect_b)
    np.testing.assert_array_equal(a.crop_a, b.crop_a)


def test_small_image_is_upscaled():
    img = procedural.make_image(2, 0, 40)
    pair = extract_overlapping_crops(img, LadderConfig(patch_size=64), np.random.default_rng(0))
    assert pair.upscaled_from == (40, 40)
    assert pair.crop_a.shape == (64, 64, 3)


def test_ladder_shape_and_lockstep(image):
    cfg = LadderConfig(patch_size=48, levels=5)
    rng = np.random.default_rng(3)
    pair = extract_overlapping_crops(image, cfg, rng)
    ladder = build_ladder(pair, cfg, rng)
    assert ladder.levels == 5 and len(ladder.applied) == 1
    assert sum(2 for _ in ladder.pairs) == 10
    for i, (a, b) in enumerate(ladder.pairs, start=1):
        np.testing.assert_array_equal(a, apply_chain(pair.crop_a, ladder.applied, i))
        np.testing.assert_array_equal(b, apply_chain(pair.crop_b, ladder.applied, i))


def test_two_distortions_from_distinct_groups(image):
    cfg = LadderConfig(patch_size=48, n_distortions=2)
    for seed in range(20):
        ladder = make_ladder(image, cfg, f"x{seed}")
        groups = [degradations.KINDS[k].group for k, _ in ladder.applied]
        assert len(groups) == 2 and len(set(groups)) == 2


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_ladder_severity_ordering(seed):
    img = procedural.make_image(seed, 0, 72)
    ladder = make_ladder(img, LadderConfig(patch_size=64, seed=seed), "img")
    p = ladder.pristine
    ps = [np.mean([imaging.psnr(p.crop_a, a), imaging.psnr(p.crop_b, b)]) for a, b in ladder.pairs]
    for i in range(len(ps)):
        for j in range(i + 1, len(ps)):
            assert ps[i] >= ps[j] - 0.1, (ladder.applied, ps)


def _write_images(tmp_path, n, size=80):
    rows = []
    for i in range(n):
        p = tmp_path / f"img{i}.png"
        imaging.save_image(p, procedural.make_image(9, i, size))
        rows.append(ManifestRow(p, f"id{i}"))
    m = tmp_path / "manifest.csv"
    write_manifest(m, rows)
    return m


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_empty_manifest(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("path,id\n")
    s = generate_corpus(m, LadderConfig(patch_size=32), tmp_path / "out")
    assert (s.processed, s.failed) == (0, 0)


def test_corpus_files_and_determinism(tmp_path):
    m = _write_images(tmp_path, 3)
    cfg = LadderConfig(patch_size=48, seed=4)
    s1 = generate_corpus(m, cfg, tmp_path / "a")
    s2 = generate_corpus(m, cfg, tmp_path / "b", jobs=3)
    assert (s1.processed, s1.failed) == (3, 0)
    assert len(list((tmp_path / "a").rglob("*.png"))) == 30
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    rec = json.loads((tmp_path / "a" / "id0" / "ladder.json").read_text())
    assert rec["levels"] == [1, 2, 3, 4, 5] and len(rec["crops"]) == 2


def test_replay_reproduces_stored_crops(tmp_path):
    m = _write_images(tmp_path, 2)
    generate_corpus(m, LadderConfig(patch_size=48, seed=1), tmp_path / "c")
    for d in sorted((tmp_path / "c").iterdir()):
        replay = replay_ladder(d)
        for i, (a, b) in enumerate(replay, start=1):
            np.testing.assert_array_equal(imaging.quantize8(a), imaging.load_image(d / f"level{i}_a.png"))
            np.testing.assert_array_equal(imaging.quantize8(b), imaging.load_image(d / f"level{i}_b.png"))


def test_unreadable_image_counted(tmp_path):
    m = _write_images(tmp_path, 2)
    with open(m, "a") as fh:
        fh.write(f"{tmp_path / 'missing.png'},gone\n")
    s = generate_corpus(m, LadderConfig(patch_size=48), tmp_path / "o")
    assert (s.processed, s.failed) == (2, 1)
    assert "gone" in s.failures[0]


def test_load_corpus(tmp_path):
    m = _write_images(tmp_path, 2)
    generate_corpus(m, LadderConfig(patch_size=48, levels=3), tmp_path / "c")
    ladders = load_corpus(tmp_path / "c")
    assert [l.source_id for l in ladders] == ["id0", "id1"]
    assert all(l.levels == 3 for l in ladders)


def test_manifest_duplicate_ids(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("path,id\na.png,x\nb.png,x\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_manifest(m)


def test_manifest_mos_column(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("path,id,mos\na.png,x,3.5\nb.png,y,\n")
    rows = read_manifest(m)
    assert rows[0].mos == 3.5 and rows[1].mos is None
    assert rows[0].path == tmp_path / "a.png"
