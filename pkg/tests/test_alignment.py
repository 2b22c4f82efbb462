import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qalign import imaging, procedural
from qalign.alignment import (
    LossConfig,
    OptimizerConfig,
    SimilarityGrid,
    cosine_similarity,
    encode,
    grad_check,
    init_params,
    loss_consistency,
    loss_negative,
    loss_positive,
    loss_quality_ranking_variant,
    prompt_similarities,
    random_bank,
    total_loss,
    train,
)
from qalign.alignment.losses import hinge_arguments, quality_grid, ranking_term_count
from qalign.alignment.prompts import PromptBank
from qalign.sampling import LadderConfig, make_ladder

M_CONS, M_RANK = 2.5e-3, 6.75e-2
sims = st.floats(-1, 1, allow_nan=False)


def grids(levels=st.integers(2, 5)):
    return levels.flatmap(
        lambda L: st.tuples(arrays(np.float64, (L, 2), elements=sims), arrays(np.float64, (L, 2), elements=sims))
    ).map(lambda t: SimilarityGrid(*t))


def const_grid(sp_levels, sn_levels=None):
    sp = np.repeat(np.asarray(sp_levels, float)[:, None], 2, axis=1)
    sn = np.zeros_like(sp) if sn_levels is None else np.repeat(np.asarray(sn_levels, float)[:, None], 2, axis=1)
    return SimilarityGrid(sp, sn)


def brute_positive(sp, m):
    L = sp.shape[0]
    return sum(
        max(0.0, sp[j, k] - sp[i, l] + m) for i in range(L) for j in range(i + 1, L) for k in range(2) for l in range(2)
    )


# ---------------------------------------------------------------- prompts


def test_cosine_examples():
    a = np.eye(4)[0]
    assert cosine_similarity(a, a) == 1.0
    assert cosine_similarity(a, np.eye(4)[1]) == 0.0
    assert cosine_similarity(a, -a) == -1.0
    with pytest.raises(ValueError):
        cosine_similarity(a * 2, a)
    with pytest.raises(ValueError):
        cosine_similarity(np.full(4, np.nan), a)


def test_prompt_similarity_mean():
    x = np.eye(3)[0]
    pos = np.array([[0.2, np.sqrt(0.96), 0], [0.4, np.sqrt(0.84), 0]])
    bank = PromptBank(pos, -pos, [("a", "b"), ("c", "d")])
    s_p, s_n = prompt_similarities(x, bank)
    assert s_p == pytest.approx(0.3) and s_n == pytest.approx(-0.3)
    same = PromptBank(np.tile(x, (2, 1)), -np.tile(x, (2, 1)), [("a", "b")] * 2)
    assert prompt_similarities(x, same)[0] == 1.0


def test_empty_bank():
    with pytest.raises(ValueError):
        prompt_similarities(np.ones(3) / np.sqrt(3), PromptBank(np.zeros((0, 3)), np.zeros((0, 3)), []))


# ---------------------------------------------------------------- loss examples


def test_consistency_example():
    g = SimilarityGrid([[0.31, 0.30]], [[0.1, 0.1]])
    assert loss_consistency(g, M_CONS)[0] == pytest.approx(0.0075, abs=1e-12)
    g = SimilarityGrid([[0.3, 0.3 + M_CONS]], [[0.0, -M_CONS]])
    assert loss_consistency(g, M_CONS)[0] == pytest.approx(0.0, abs=1e-15)


def test_positive_examples():
    assert loss_positive(const_grid([0.5, 0.4]), M_RANK)[0] == 0.0
    assert loss_positive(const_grid([0.45, 0.5]), M_RANK)[0] == pytest.approx(0.47, abs=1e-12)
    assert ranking_term_count(5) == 40


def test_negative_examples():
    g = const_grid(np.zeros(5), np.linspace(0, 0.4, 5))
    assert loss_negative(g, M_RANK)[0] == 0.0
    g = const_grid(np.zeros(5), np.full(5, 0.2))
    assert loss_negative(g, M_RANK)[0] == pytest.approx(2.7, abs=1e-12)


@given(grids())
def test_positive_matches_brute_force(g):
    assert loss_positive(g, M_RANK)[0] == pytest.approx(brute_positive(g.sp, M_RANK), abs=1e-12)


@given(grids())
def test_negative_symmetry_oracle(g):
    mirrored = SimilarityGrid(-g.sn, np.zeros_like(g.sn))
    assert loss_negative(g, M_RANK)[0] == pytest.approx(loss_positive(mirrored, M_RANK)[0], abs=1e-12)


@given(grids(), st.floats(-0.5, 0.5))
def test_shift_invariance(g, c):
    shifted = SimilarityGrid(g.sp + c, g.sn + c)
    assert loss_consistency(shifted, M_CONS)[0] == pytest.approx(loss_consistency(g, M_CONS)[0], abs=1e-9)
    assert loss_positive(shifted, M_RANK)[0] == pytest.approx(loss_positive(g, M_RANK)[0], abs=1e-9)
    assert loss_negative(shifted, M_RANK)[0] == pytest.approx(loss_negative(g, M_RANK)[0], abs=1e-9)


@given(grids(), st.sampled_from(["similarity", "quality"]))
def test_crop_swap_symmetry(g, variant):
    cfg = LossConfig(variant=variant)
    assert total_loss(g.swapped(), cfg)[0] == pytest.approx(total_loss(g, cfg)[0], abs=1e-12)


@given(grids())
def test_total_is_weighted_sum(g):
    cfg = LossConfig()
    parts = loss_consistency(g, M_CONS)[0] + loss_positive(g, M_RANK)[0] + loss_negative(g, M_RANK)[0]
    assert abs(total_loss(g, cfg)[0] - parts) <= 1e-12
    assert total_loss(g, LossConfig(lambda_cons=0, lambda_pos=0, lambda_neg=0))[0] == 0
    assert total_loss(g, LossConfig(lambda_pos=0, lambda_neg=0))[0] == loss_consistency(g, M_CONS)[0]


def test_perfect_ranking_is_zero():
    L = 5
    sp = np.repeat(0.5 - 0.1 * np.arange(L)[:, None], 2, axis=1)
    sp[:, 1] += 0.001
    sn = np.repeat(-0.2 + 0.1 * np.arange(L)[:, None], 2, axis=1)
    assert total_loss(SimilarityGrid(sp, sn), LossConfig())[0] == 0.0


@settings(max_examples=50)
@given(grids(), st.sampled_from(["similarity", "quality"]))
def test_loss_gradient_matches_finite_differences(g, variant):
    cfg = LossConfig(variant=variant)
    assume(np.min(np.abs(hinge_arguments(g, cfg))) > 1e-4)
    _, grad = total_loss(g, cfg)
    h = 1e-7
    for arr, garr in ((g.sp, grad.sp), (g.sn, grad.sn)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            fp = total_loss(g, cfg)[0]
            arr[idx] = old - h
            fm = total_loss(g, cfg)[0]
            arr[idx] = old
            assert (fp - fm) / (2 * h) == pytest.approx(garr[idx], abs=1e-6)


def test_quality_variant_closed_form():
    g = SimilarityGrid(np.full((5, 2), 0.3), np.full((5, 2), 0.3))
    b = loss_quality_ranking_variant(g, LossConfig(variant="quality"))
    assert b.cons == 0
    assert b.total == pytest.approx(2 * 40 * M_RANK, abs=1e-12)


def test_quality_variant_zero_on_perfect_ranking():
    # q decreasing by more than the margin per level
    diff = np.array([3.0, 2.0, 1.0, 0.0, -1.0])[:, None] * np.ones(2)
    g = SimilarityGrid(diff, np.zeros((5, 2)))
    q, _ = quality_grid(g, 2.0)
    assert np.all(np.diff(q[:, 0]) < -M_RANK)
    assert loss_quality_ranking_variant(g, LossConfig(variant="quality")).total == 0.0


def test_quality_derivative_at_balance():
    tau, h = 2.0, 1e-6
    qp = quality_grid(SimilarityGrid([[h, 0]], [[0, 0]]), tau)[0][0, 0]
    qm = quality_grid(SimilarityGrid([[-h, 0]], [[0, 0]]), tau)[0][0, 0]
    assert (qp - qm) / (2 * h) == pytest.approx(0.125, abs=1e-9)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(tau=0)
    with pytest.raises(ValueError):
        LossConfig(variant="other")
    with pytest.raises(ValueError):
        LossConfig(m_rank=-1)


# ---------------------------------------------------------------- encoder


@pytest.fixture(scope="module")
def params():
    return init_params(32, 0)


def test_encode_unit_norm_and_deterministic(params):
    img = procedural.make_image(0, 0, 40)
    e = encode(params, img)
    assert abs(np.linalg.norm(e) - 1) < 1e-6
    np.testing.assert_array_equal(e, encode(params, img))


def test_encode_rejects_tiny(params):
    with pytest.raises(ValueError):
        encode(params, np.zeros((4, 4, 3)))


def test_degenerate_embedding_is_perturbed():
    p = init_params(8, 0)
    p.w3[:] = 0
    p.b3[:] = 0
    e = encode(p, np.zeros((8, 8, 3)))
    np.testing.assert_array_equal(e, np.eye(8)[0])


def test_upscale_keeps_embedding(params):
    # measured minimum over these images was about 0.9998
    for i in range(5):
        img = procedural.make_image(21, i, 48)
        up = imaging.resample(img, 96, 96, "bicubic")
        assert encode(params, img) @ encode(params, up) >= 0.99


# ---------------------------------------------------------------- training


@pytest.fixture(scope="module")
def toy_ladders():
    imgs = procedural.make_images(4, 50, 40)
    cfg = LadderConfig(patch_size=32, seed=1)
    return [make_ladder(img, cfg, f"i{k}") for k, img in enumerate(imgs)]


def test_zero_epochs_keeps_params(toy_ladders):
    bank = random_bank()
    res = train(toy_ladders, LossConfig(), bank, OptimizerConfig(epochs=0, seed=2))
    np.testing.assert_array_equal(res.params.flat(), init_params(32, 2).flat())
    assert res.history == []


def test_training_is_deterministic(toy_ladders):
    bank = random_bank()
    opt = OptimizerConfig(epochs=1, seed=5)
    a = train(toy_ladders[:20], LossConfig(), bank, opt)
    b = train(toy_ladders[:20], LossConfig(), bank, opt)
    assert a.history == b.history
    np.testing.assert_array_equal(a.params.flat(), b.params.flat())


def test_training_reduces_loss(toy_ladders):
    bank = random_bank()
    res = train(toy_ladders, LossConfig(), bank, OptimizerConfig(epochs=10, lr=1e-2, seed=0))
    first = np.mean([h.total for h in res.history if h.epoch == 0])
    last = np.mean([h.total for h in res.history if h.epoch == 9])
    assert last < first


def test_training_rejects_dim_mismatch(toy_ladders):
    with pytest.raises(ValueError):
        train(toy_ladders, LossConfig(), random_bank(dim=16), OptimizerConfig(epochs=1), params=init_params(32))


def test_nonfinite_loss_names_ladder(toy_ladders):
    p = init_params(32, 0)
    p.w1[0, 0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="i"):
        train(toy_ladders[:2], LossConfig(), random_bank(), OptimizerConfig(epochs=1), params=p)


def test_early_stopping_returns_best(toy_ladders):
    scores = iter([0.5, 0.9, 0.1, 0.2, 0.3])
    res = train(toy_ladders[:16], LossConfig(), random_bank(), OptimizerConfig(epochs=5, patience=2), validate=lambda p: next(scores))
    assert res.best_epoch == 1
    assert len(res.validation) == 4


@pytest.mark.parametrize("variant", ["similarity", "quality"])
def test_grad_check(toy_ladders, variant):
    cfg = LossConfig(variant=variant)
    r = grad_check(init_params(32, 3), toy_ladders[0], cfg, random_bank(), epsilon=1e-4, n_params=200)
    assert r.checked + r.excluded == 200
    assert r.checked > 100
    assert r.max_rel_error < 1e-3


def test_grad_check_zero_weights(toy_ladders):
    cfg = LossConfig(lambda_cons=0, lambda_pos=0, lambda_neg=0)
    r = grad_check(init_params(32, 0), toy_ladders[0], cfg, random_bank())
    assert r.max_rel_error == 0.0


def test_grad_check_zero_params_warns(toy_ladders):
    with pytest.warns(UserWarning):
        r = grad_check(init_params(32, 0), toy_ladders[0], LossConfig(), random_bank(), n_params=0)
    assert r.max_rel_error == 0.0


def test_grad_check_epsilon_range(toy_ladders):
    with pytest.raises(ValueError):
        grad_check(init_params(32, 0), toy_ladders[0], LossConfig(), random_bank(), epsilon=1e-2)
