import numpy as np
import pytest

from capseg import ScorerParams, laplacian_scores, save_ranking, select_features
from capseg.errors import InvalidParam, TooFewSamples

import oracles


def _two_clusters(rng, n_per=40, n_noise=10):
    """Two well-separated Gaussian blobs. Columns 0-1 indicate the cluster,
    the next n_noise columns are pure noise, the last is constant."""
    def indicator():
        return np.concatenate(
            [rng.normal(0.0, 0.5, n_per), rng.normal(8.0, 0.5, n_per)]
        )[:, None]

    noise = rng.standard_normal((2 * n_per, n_noise))
    const = np.full((2 * n_per, 1), 3.0)
    return np.hstack([indicator(), indicator(), noise, const])


class TestLaplacianScores:
    def test_cluster_indicator_scores_lowest(self, rng):
        x = _two_clusters(rng)
        scores = laplacian_scores(x, ScorerParams(k_neighbors=5, keep=2))
        assert np.argmin(scores) in (0, 1)
        # locality-preserving features sit far below every noise feature
        assert scores[:2].max() < 0.25 * scores[2:12].min()

    def test_noise_scores_high(self, rng):
        x = _two_clusters(rng)
        scores = laplacian_scores(x, ScorerParams(k_neighbors=5, keep=2))
        assert scores[2:12].min() > 0.4

    def test_constant_scores_infinite(self, rng):
        x = _two_clusters(rng)
        scores = laplacian_scores(x, ScorerParams(k_neighbors=5, keep=2))
        assert np.isinf(scores[-1])

    def test_too_few_samples(self, rng):
        with pytest.raises(TooFewSamples):
            laplacian_scores(rng.random((4, 3)), ScorerParams(k_neighbors=5, keep=1))

    def test_oracle_equivalence(self, rng):
        for trial in range(10):
            x = rng.standard_normal((20, 5))
            params = ScorerParams(k_neighbors=3, keep=2)
            got = laplacian_scores(x, params)
            ref = oracles.laplacian_scores_reference(x, 3)
            assert np.allclose(got, ref, rtol=1e-9, atol=1e-12)

    def test_affine_rescaling_invariance(self, rng):
        x = rng.standard_normal((30, 6))
        params = ScorerParams(k_neighbors=4, keep=3)
        base = laplacian_scores(x, params)
        x2 = x.copy()
        x2[:, 2] = 7.0 * x2[:, 2] + 3.0
        again = laplacian_scores(x2, params)
        assert np.allclose(base, again, rtol=1e-9, atol=1e-12)

    def test_explicit_heat_t_matches_oracle(self, rng):
        x = rng.standard_normal((15, 4))
        got = laplacian_scores(x, ScorerParams(k_neighbors=3, heat_t=2.5, keep=1))
        ref = oracles.laplacian_scores_reference(x, 3, heat_t=2.5)
        assert np.allclose(got, ref, rtol=1e-9, atol=1e-12)


class TestSelect:
    def test_identity_selection(self):
        ranking = select_features(np.arange(35, dtype=float), keep=35)
        assert ranking.selected.tolist() == list(range(35))

    def test_smallest_scores_win(self):
        ranking = select_features(np.array([3.0, 1.0, 2.0]), keep=2)
        assert ranking.selected.tolist() == [1, 2]

    def test_keep_zero_rejected(self):
        with pytest.raises(InvalidParam):
            select_features(np.array([1.0, 2.0]), keep=0)

    def test_stable_under_ties(self):
        scores = np.array([2.0, 1.0, 1.0, 1.0, 5.0])
        ranking = select_features(scores, keep=3)
        assert ranking.selected.tolist() == [1, 2, 3]

    def test_ranking_csv(self, tmp_path):
        ranking = select_features(np.array([3.0, 1.0, np.inf]), keep=1)
        save_ranking(tmp_path / "r.csv", ranking)
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "feature_index,score,selected"
        assert lines[2].startswith("1,") and lines[2].endswith(",1")
