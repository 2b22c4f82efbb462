import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qalign import degradations, procedural
from qalign.evaluation import (
    DegenerateCorrelation,
    LogisticParams,
    evaluate,
    fit_logistic,
    gmad_select,
    intensity_sweep,
    plcc,
    psnr_oracle,
    srcc,
)

vectors = st.integers(3, 30).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.integers(-5, 5).map(float)),
        arrays(np.float64, n, elements=st.floats(-10, 10, allow_nan=False)),
    )
)


def brute_ranks(v):
    # average rank of each element: 1 + #smaller + (#equal - 1) / 2
    v = list(v)
    return np.array([1 + sum(u < x for u in v) + (sum(u == x for u in v) - 1) / 2 for x in v])


def brute_srcc(a, b):
    ra, rb = brute_ranks(a), brute_ranks(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    return float((ra @ rb) / np.sqrt((ra @ ra) * (rb @ rb)))


def test_srcc_examples():
    assert srcc([1, 2, 3], [1, 2, 3]) == 1.0
    assert srcc([1, 2, 3], [3, 2, 1]) == -1.0
    assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)


def test_srcc_errors():
    with pytest.raises(ValueError):
        srcc([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        srcc([1, 2], [1, 2])
    with pytest.raises(DegenerateCorrelation):
        srcc([1, 1, 1], [1, 2, 3])


@given(vectors)
def test_srcc_matches_brute_force(pair):
    a, b = pair
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        with pytest.raises(DegenerateCorrelation):
            srcc(a, b)
    else:
        assert srcc(a, b) == pytest.approx(brute_srcc(a, b), abs=1e-12)


@given(vectors, st.sampled_from([np.exp, np.arctan, lambda x: x**3 + 2 * x]))
def test_srcc_monotone_invariance(pair, f):
    a, b = pair
    if np.ptp(a) > 0 and np.ptp(b) > 0:
        assert srcc(f(a), b) == pytest.approx(srcc(a, b), abs=1e-12)


def test_logistic_recovers_planted():
    x = np.linspace(0, 1, 200)
    beta = (5.0, 1.0, 0.5, 0.1)
    fit = fit_logistic(x, LogisticParams(*beta)(x))
    assert fit.converged
    np.testing.assert_allclose(fit.params.as_tuple(), beta, rtol=1e-3)


def test_logistic_affine_data():
    x = np.linspace(0, 1, 100)
    y = 2 * x + 1
    fit = fit_logistic(x, y)
    assert np.sqrt(np.mean((fit.predict(x) - y) ** 2)) < 1e-2


def test_constant_mos_is_degenerate():
    fit = fit_logistic(np.arange(6.0), np.full(6, 3.0))
    assert fit.degenerate
    with pytest.raises(DegenerateCorrelation):
        plcc(np.arange(6.0), np.full(6, 3.0))


def test_fit_requires_five_and_variation():
    with pytest.raises(ValueError):
        fit_logistic([1, 2, 3, 4], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        fit_logistic(np.ones(6), np.arange(6.0))


def test_plcc_examples():
    x = np.random.default_rng(0).random(300)
    assert plcc(x, x) == pytest.approx(1.0, abs=1e-9)
    y = LogisticParams(3.0, -1.0, 0.4, 0.07)(x)
    assert plcc(x, y) == pytest.approx(1.0, abs=1e-6)


def test_plcc_null_permutation():
    rng = np.random.default_rng(123)
    x = rng.random(1000)
    y = rng.permutation(np.argsort(np.argsort(x))).astype(float)
    assert abs(plcc(x, y)) < 0.1


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10), st.floats(-5, 5), st.integers(0, 1000))
def test_plcc_affine_invariance(a, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.random(80)
    y = LogisticParams(4.0, 1.0, 0.5, 0.15)(x) + 0.05 * rng.standard_normal(80)
    assert plcc(a * x + c, y) == pytest.approx(plcc(x, y), abs=1e-6)


def test_evaluate_report():
    x = np.linspace(0, 1, 20)
    r = evaluate(x, x)
    assert r.n == 20 and r.srcc == 1.0
    assert len(r.residuals) == 20


# ---------------------------------------------------------------- sweep


@pytest.fixture(scope="module")
def sweep_images():
    return procedural.make_images(8, 3, 48)


def test_sweep_constant_scorer(sweep_images):
    res = intensity_sweep(lambda img: 0.5, sweep_images[:1], kinds=["WhiteNoise", "JPEG"])
    assert res.srcc == {"WhiteNoise": 0.0, "JPEG": 0.0}
    assert res.degenerate == ["WhiteNoise", "JPEG"]
    assert len(res.rows) == 10


def test_sweep_psnr_oracle_all_kinds(sweep_images):
    res = intensity_sweep(psnr_oracle, sweep_images, seed=3, full_reference=True)
    assert len(res.rows) == 24 * 5
    assert res.srcc == {k: -1.0 for k in degradations.KIND_NAMES}


def test_sweep_errors():
    with pytest.raises(ValueError):
        intensity_sweep(lambda i: 0, [])
    with pytest.raises(ValueError):
        intensity_sweep(lambda i: 0, [np.zeros((16, 16, 3))], kinds=[])


# ---------------------------------------------------------------- gMAD


def brute_gmad(d, a, lo, hi):
    members = [i for i in d if lo <= d[i] <= hi]
    best = None
    for i, j in itertools.permutations(members, 2):
        gap = a[j] - a[i]
        if best is None or gap > best:
            best = gap
    return best


@pytest.mark.parametrize("seed", range(20))
def test_gmad_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ids = [f"im{k}" for k in range(1000)]
    d = dict(zip(ids, rng.random(1000)))
    a = dict(zip(ids, rng.standard_normal(1000)))
    sel = gmad_select(d, a, levels=2, band_width=0.05)
    assert [e.anchor for e in sel.entries] == [0.25, 0.75]
    for e in sel.entries:
        lo, hi = e.defender_band
        assert lo <= d[e.image_id_low] <= hi and lo <= d[e.image_id_high] <= hi
        assert e.attacker_gap == brute_gmad(d, a, lo, hi)
        assert a[e.image_id_high] - a[e.image_id_low] == e.attacker_gap


def test_gmad_constant_attacker():
    ids = [str(i) for i in range(100)]
    d = dict(zip(ids, np.linspace(0, 1, 100)))
    sel = gmad_select(d, {i: 1.0 for i in ids})
    assert all(e.attacker_gap == 0 for e in sel.entries)


def test_gmad_attacker_equals_defender_narrow_band():
    ids = [str(i) for i in range(1000)]
    d = dict(zip(ids, np.random.default_rng(0).random(1000)))
    gaps = [max(e.attacker_gap for e in gmad_select(d, d, band_width=w).entries) for w in (0.1, 0.01, 0.001)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_gmad_empty_band_and_id_mismatch():
    d = {"a": 0.1, "b": 0.9}
    sel = gmad_select(d, d, band_width=0.01)
    assert all(e.empty for e in sel.entries)
    with pytest.raises(ValueError):
        gmad_select(d, {"a": 1.0})
