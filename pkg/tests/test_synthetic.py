import numpy as np
import pytest

from sepfeat.errors import SpecInvalid
from sepfeat.evaluation import auroc
from sepfeat.synthetic import (PairwiseMixtureSpec, generate_pairwise_mixture, generate_scaling_grid,
                               generate_single_axis, grid_spec, pair_to_dimension, split_sizes)


def raw(**kw):
    return generate_pairwise_mixture(PairwiseMixtureSpec(**kw), standardize=False)


def test_two_clusters_one_axis():
    m = raw(k_true=2, d_total=5, separation=4.0, n_per_cluster=5000, seed=1)
    assert m.informative_mask.sum() == 1
    diff = m.values[m.true_labels == 0, 0].mean() - m.values[m.true_labels == 1, 0].mean()
    assert diff == pytest.approx(4.0, abs=4 * np.sqrt(2 / 5000))


def test_fig3_shape():
    m = generate_pairwise_mixture(PairwiseMixtureSpec())
    assert m.shape == (1400, 861)
    assert m.informative_mask.sum() == 21
    assert m.metadata["S"] == 6.0
    assert np.bincount(m.true_labels).tolist() == [200] * 7
    np.testing.assert_allclose(m.values.std(axis=0, ddof=1), 1, rtol=1e-12)


def test_pair_map_lexicographic():
    assert pair_to_dimension(4) == {(0, 1): 0, (0, 2): 1, (0, 3): 2, (1, 2): 3, (1, 3): 4, (2, 3): 5}


# the 4 sigma / sqrt(n) band is about 2.8 standard errors of a difference of
# two means, so it is checked on a fixed set of seeds rather than searched
@pytest.mark.parametrize("k, seed, delta", [(k, s, d) for k in (2, 4, 6) for s in range(4) for d in (1.0, 6.0)])
def test_mean_differences(k, seed, delta):
    n = 300
    m = raw(k_true=k, d_total=k * (k - 1) // 2 + 3, separation=delta, sigma_in=0.7, n_per_cluster=n, seed=seed)
    assert m.informative_mask.sum() == k * (k - 1) // 2
    for (l, mm), d in pair_to_dimension(k).items():
        col = m.values[:, d]
        diff = col[m.true_labels == l].mean() - col[m.true_labels == mm].mean()
        assert abs(diff - delta) <= 4 * 0.7 / np.sqrt(n)
        # bystander clusters sit at zero
        for c in set(range(k)) - {l, mm}:
            assert abs(col[m.true_labels == c].mean()) <= 4 / np.sqrt(n)


def test_uninformative_block_uncorrelated():
    m = raw(k_true=3, d_total=23, n_per_cluster=400, seed=5)
    c = np.corrcoef(m.values[:, 3:], rowvar=False)
    off = c[~np.eye(c.shape[0], dtype=bool)]
    assert np.abs(off).max() <= 4 / np.sqrt(m.n_samples)


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_planted_noise_direction(theta):
    m = raw(k_true=3, d_total=53, n_per_cluster=400, noise_theta=theta, seed=2)
    r = np.array(m.metadata["r"])
    cov = np.cov(m.values[:, 3:], rowvar=False)
    top = np.linalg.eigvalsh(cov)[-1]
    assert top > 1 + theta * (r @ r) / 2


def test_standardized_by_default():
    m = generate_pairwise_mixture(PairwiseMixtureSpec(k_true=3, d_total=10, n_per_cluster=30))
    np.testing.assert_allclose(m.values.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(m.values.std(axis=0, ddof=1), 1, rtol=1e-12)


def test_generation_deterministic():
    spec = PairwiseMixtureSpec(k_true=3, d_total=10, n_per_cluster=20, seed=11)
    a, b = generate_pairwise_mixture(spec), generate_pairwise_mixture(spec)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.true_labels, b.true_labels)


@pytest.mark.parametrize("kw", [
    dict(k_true=1), dict(k_true=7, d_total=20), dict(separation=0.0), dict(sigma_in=-1.0),
    dict(noise_theta=-0.1), dict(k_true=3, d_total=5, cluster_sizes=(1, 2)),
])
def test_invalid_specs(kw):
    with pytest.raises(SpecInvalid):
        generate_pairwise_mixture(PairwiseMixtureSpec(**kw))


def test_single_axis_no_signal():
    m = generate_single_axis(4000, 0.0, 3, seed=1)
    assert auroc(m.values[:, 0] * np.where(m.true_labels == 0, 1, 1), m.true_labels == 0) == pytest.approx(0.5, abs=0.03)


def test_single_axis_bimodal():
    m = generate_single_axis(2000, 6.0, 2, seed=2)
    assert m.shape == (2000, 3)
    counts, edges = np.histogram(m.values[:, 0], bins=np.linspace(-6, 6, 13))
    centre = counts[5:7].sum()
    assert centre < 0.25 * counts[[2, 3, 8, 9]].sum()
    # noise axes stay unimodal around zero
    c2, _ = np.histogram(m.values[:, 1], bins=np.linspace(-6, 6, 13))
    assert c2[5:7].sum() == c2.max() + np.sort(c2)[-2]


def test_single_axis_two_points():
    m = generate_single_axis(2, 6.0, 1, seed=0)
    assert m.true_labels.tolist() == [0, 1]
    with pytest.raises(SpecInvalid):
        generate_single_axis(3, 1.0, 1, seed=0)


def test_split_sizes():
    assert split_sizes(10, 3) == (4, 3, 3)
    assert sum(split_sizes(5000, 7)) == 5000


def test_scaling_grid_cells():
    base = PairwiseMixtureSpec()
    (m,) = generate_scaling_grid(base, [2], [140])
    assert m.shape == (140, 42)
    # D = ratio * D_s; the 1400 x 861 benchmark has 840 uninformative columns
    fig3 = grid_spec(base, 40, 1400)
    assert (sum(fig3.sizes()), fig3.d_total, fig3.d_total - fig3.d_s) == (1400, 840, 819)
    big = grid_spec(base, 50, 10000)
    assert (sum(big.sizes()), big.d_total) == (10000, 1050)
    with pytest.raises(SpecInvalid):
        grid_spec(base, 2.5, 140)
    with pytest.raises(SpecInvalid):
        grid_spec(base, 0.5, 140)


def test_grid_order():
    cells = generate_scaling_grid(PairwiseMixtureSpec(k_true=3, d_total=3), [2, 3], [30, 60])
    assert [c.shape for c in cells] == [(30, 6), (60, 6), (30, 9), (60, 9)]
