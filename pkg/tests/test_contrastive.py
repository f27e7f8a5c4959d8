import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clangvqa import numkit as nk
from clangvqa.contrastive import (
    info_nce, info_nce_from_similarity, kl_match, kl_rows, similarity_distribution,
)
from clangvqa.errors import ContractError


def nce_oracle(sim, tau):
    n = len(sim)
    off = ~np.eye(n, dtype=bool)
    neg = np.exp(sim[off] / tau).sum()
    return np.mean([-math.log(math.exp(sim[i, i] / tau) / (math.exp(sim[i, i] / tau) + neg))
                    for i in range(n)])


class TestInfoNCE:
    @pytest.mark.parametrize("n", [2, 4, 8])
    @pytest.mark.parametrize("tau", [0.1, 1.0, 3.0])
    def test_constant_similarity(self, n, tau):
        value = info_nce_from_similarity(np.full((n, n), 0.37), tau).item()
        assert value == pytest.approx(math.log(1 + n * n - n), abs=1e-9)

    def test_two_pairs_is_log3(self):
        assert info_nce_from_similarity(np.zeros((2, 2)), 0.1).item() == pytest.approx(math.log(3), abs=1e-9)

    def test_single_pair(self, rng):
        assert info_nce(rng.normal(size=(1, 4)), rng.normal(size=(1, 4))).item() == 0.0

    def test_hand_value(self):
        assert info_nce_from_similarity(np.eye(2), 1.0).item() == pytest.approx(0.55144, abs=1e-5)

    def test_oracle(self, rng):
        Q, G = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        sim = nk.cosine_matrix(Q, G).data
        assert info_nce(Q, G, 0.1).item() == pytest.approx(nce_oracle(sim, 0.1), rel=1e-12)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_bad_temperature(self, tau):
        with pytest.raises(ContractError):
            info_nce_from_similarity(np.eye(2), tau)

    @given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
    def test_shift_invariance(self, seed, shift):
        sim = np.random.default_rng(seed).uniform(-1, 1, (4, 4))
        a = info_nce_from_similarity(sim, 0.5).item()
        b = info_nce_from_similarity(sim + shift, 0.5).item()
        assert a == pytest.approx(b, abs=1e-9)

    @given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.floats(0.01, 1.0))
    def test_monotone_in_positive(self, seed, i, bump):
        sim = np.random.default_rng(seed).uniform(-1, 1, (4, 4))
        raised = sim.copy()
        raised[i, i] += bump
        assert info_nce_from_similarity(raised, 0.1).item() < info_nce_from_similarity(sim, 0.1).item()

    def test_symmetric_variant_averages_directions(self, rng):
        Q, G = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        both = info_nce(Q, G, 0.1, symmetric=True).item()
        assert both == pytest.approx((info_nce(Q, G).item() + info_nce(G, Q).item()) / 2, rel=1e-12)


class TestKL:
    def test_identical_is_zero(self, rng):
        X = rng.normal(size=(5, 3))
        assert kl_match(X, X).item() == pytest.approx(0.0, abs=1e-12)

    def test_hand_row(self):
        value = kl_rows(np.array([[0.5, 0.5]]), np.array([[0.9, 0.1]])).item()
        assert value == pytest.approx(0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1), abs=1e-12)
        assert value == pytest.approx(0.51083, abs=1e-5)

    def test_nonnegative_on_random_batches(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 9))
            assert kl_match(rng.normal(size=(n, 4)), rng.normal(size=(n, 4))).item() >= 0

    @given(st.integers(0, 2**32 - 1))
    def test_zero_iff_equal_rows(self, seed):
        r = np.random.default_rng(seed)
        P = r.dirichlet(np.ones(4), size=3)
        assert kl_rows(P, P).item() == pytest.approx(0.0, abs=1e-9)
        Q = r.dirichlet(np.ones(4), size=3)
        if np.abs(P - Q).max() > 1e-3:
            assert kl_rows(P, Q).item() > 1e-9

    def test_distribution_rows(self, rng):
        P = similarity_distribution(rng.normal(size=(5, 3))).data
        np.testing.assert_array_equal(np.diag(P), np.zeros(5))
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)

    def test_needs_two_rows(self, rng):
        with pytest.raises(ContractError):
            kl_match(rng.normal(size=(1, 3)), rng.normal(size=(1, 3)))


def test_gradients():
    for seed in range(5):
        r = np.random.default_rng(seed)
        Q = nk.parameter(r.uniform(-1, 1, (4, 3)))
        G = nk.parameter(r.uniform(-1, 1, (4, 3)))
        assert nk.check_gradients(lambda: info_nce(Q, G, 0.1), [Q, G]) < 1e-4
        assert nk.check_gradients(lambda: kl_match(Q, G), [Q, G]) < 1e-4
