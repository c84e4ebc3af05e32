"""Local and global fusion operators."""

import numpy as np
import pytest

from helpers import REL_TOL, fd_max_rel_err

from tlp.blocks import ParamStore
from tlp.errors import ShapeMismatch
from tlp.fusion import GlobalFusion, LocalFusion
from tlp.tensor import Tensor


def make_lf(c=2, seed=3):
    store = ParamStore()
    return store, LocalFusion(store, "lf", c, seed)


def make_gf(c=2, heads=1, seed=4):
    store = ParamStore()
    return store, GlobalFusion(store, "gf", c, heads, seed)


class TestLocalFusion:
    def test_output_shape(self, rng):
        store, lf = make_lf(c=3)
        f1 = Tensor(rng.standard_normal((2, 3, 5, 5)).astype(np.float32))
        f2 = Tensor(rng.standard_normal((2, 3, 5, 5)).astype(np.float32))
        assert lf(f1, f2).shape == (2, 3, 5, 5)

    def test_identical_inputs_triple_concat(self, rng):
        """With f1 == f2 == f the conv sees (f, f, f): selecting any group
        with a unit kernel reproduces f."""
        store, lf = make_lf(c=2)
        w = np.zeros((2, 6, 1, 1), np.float32)
        for c in range(2):
            w[c, 4 + c, 0, 0] = 1.0  # third group = max(f1, f2)
        store["lf.conv.w"].data = w
        f = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        out = lf(Tensor(f), Tensor(f))
        assert np.allclose(out.data, f, atol=1e-6)

    def test_unit_weight_on_max_group(self, rng):
        store, lf = make_lf(c=2)
        w = np.zeros((2, 6, 1, 1), np.float32)
        for c in range(2):
            w[c, 4 + c, 0, 0] = 1.0
        store["lf.conv.w"].data = w
        f1 = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        f2 = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        out = lf(Tensor(f1), Tensor(f2))
        assert np.allclose(out.data, np.maximum(f1, f2), atol=1e-6)

    def test_swap_permutes_first_two_groups(self, rng):
        """Swapping inputs exactly permutes the (f1, f2) concat groups: with
        weights that read only group 1, the swapped call reads f2."""
        store, lf = make_lf(c=2)
        w = np.zeros((2, 6, 1, 1), np.float32)
        for c in range(2):
            w[c, c, 0, 0] = 1.0  # first group
        store["lf.conv.w"].data = w
        f1 = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
        f2 = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
        assert np.allclose(lf(Tensor(f1), Tensor(f2)).data, f1, atol=1e-6)
        assert np.allclose(lf(Tensor(f2), Tensor(f1)).data, f2, atol=1e-6)

    def test_shape_mismatch(self, rng):
        _, lf = make_lf()
        with pytest.raises(ShapeMismatch):
            lf(Tensor(np.zeros((1, 2, 4, 4), np.float32)), Tensor(np.zeros((1, 2, 5, 5), np.float32)))

    def test_gradients_match_fd_away_from_ties(self, rng):
        store, lf = make_lf(c=2)
        f1 = rng.standard_normal((1, 2, 4, 4))
        f2 = f1 + np.where(rng.standard_normal((1, 2, 4, 4)) > 0, 0.5, -0.5)
        err = fd_max_rel_err(lambda t: lf(t[0], t[1]), [f1, f2], stores=(store,))
        assert err < REL_TOL


class TestGlobalFusion:
    def test_single_token_degenerate_softmax(self, rng):
        """One channel per head: attention over a single key is 1, so each
        output equals its own branch's values."""
        store, gf = make_gf(c=1, heads=1)
        f1 = Tensor(rng.standard_normal((1, 1, 3, 3)).astype(np.float32))
        f2 = Tensor(rng.standard_normal((1, 1, 3, 3)).astype(np.float32))
        g1, g2 = gf(f1, f2)
        # V_i = (third output channel of the projection applied to f_i)
        w1 = store["gf.qkv1.w"].data
        w2 = store["gf.qkv2.w"].data
        v1 = f1.data * w1[2, 0, 0, 0]
        v2 = f2.data * w2[2, 0, 0, 0]
        assert np.allclose(g1.data, v1, atol=1e-6)
        assert np.allclose(g2.data, v2, atol=1e-6)

    def test_closed_form_two_token_attention(self):
        """Identity projections on a single pixel: logits are outer products,
        and a [ln2, 0] row gives weights [2/3, 1/3]."""
        store, gf = make_gf(c=2, heads=1)
        ident = np.zeros((6, 2, 1, 1), np.float32)
        for i in range(3):
            ident[2 * i + 0, 0, 0, 0] = 1.0
            ident[2 * i + 1, 1, 0, 0] = 1.0
        store["gf.qkv1.w"].data = ident.copy()
        store["gf.qkv2.w"].data = ident.copy()
        ln2 = float(np.log(2.0))
        f1 = np.array([1.0, 0.0], np.float32).reshape(1, 2, 1, 1)  # Q1 rows: [1], [0]
        f2 = np.array([ln2, 0.0], np.float32).reshape(1, 2, 1, 1)  # K2 = V2 = [ln2, 0]
        (g1, g2), (a21, a12) = gf(Tensor(f1), Tensor(f2), return_weights=True)
        # logits12 row 0 = Q1[0] * K2 / sqrt(1) = [ln2, 0] -> weights [2/3, 1/3]
        assert np.allclose(a12.data[0, 0, 0], [2 / 3, 1 / 3], atol=1e-6)
        expected_g2_ch0 = (2 / 3) * ln2 + (1 / 3) * 0.0
        assert np.allclose(g2.data[0, 0, 0, 0], expected_g2_ch0, atol=1e-6)
        # row for the zero query is uniform
        assert np.allclose(a12.data[0, 0, 1], [0.5, 0.5], atol=1e-6)

    def test_zero_v2_zeroes_g2_only(self, rng):
        store, gf = make_gf(c=2, heads=1)
        w2 = store["gf.qkv2.w"].data.copy()
        w2[4:6] = 0.0  # V rows of branch 2
        store["gf.qkv2.w"].data = w2
        f1 = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
        f2 = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
        g1, g2 = gf(f1, f2)
        assert np.allclose(g2.data, 0.0, atol=1e-7)
        assert not np.allclose(g1.data, 0.0, atol=1e-7)

    def test_attention_rows_sum_to_one(self, rng):
        store, gf = make_gf(c=4, heads=2)
        f1 = Tensor(rng.standard_normal((2, 4, 4, 4)).astype(np.float32))
        f2 = Tensor(rng.standard_normal((2, 4, 4, 4)).astype(np.float32))
        _, (a21, a12) = gf(f1, f2, return_weights=True)
        assert np.allclose(a12.data.sum(axis=3), 1.0, atol=1e-5)
        assert np.allclose(a21.data.sum(axis=3), 1.0, atol=1e-5)

    def test_swapping_inputs_and_params_swaps_outputs(self, rng):
        store, gf = make_gf(c=2, heads=1)
        f1 = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
        f2 = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
        g1, g2 = gf(f1, f2)
        w1 = store["gf.qkv1.w"].data.copy()
        w2 = store["gf.qkv2.w"].data.copy()
        store["gf.qkv1.w"].data = w2
        store["gf.qkv2.w"].data = w1
        s1, s2 = gf(f2, f1)
        assert np.array_equal(s1.data, g2.data)
        assert np.array_equal(s2.data, g1.data)

    def test_shape_mismatch(self, rng):
        _, gf = make_gf()
        with pytest.raises(ShapeMismatch):
            gf(Tensor(np.zeros((1, 2, 4, 4), np.float32)), Tensor(np.zeros((1, 2, 2, 2), np.float32)))

    def test_gradients_match_fd(self, rng):
        store, gf = make_gf(c=2, heads=1)
        f1 = rng.standard_normal((1, 2, 3, 3))
        f2 = rng.standard_normal((1, 2, 3, 3))
        err = fd_max_rel_err(lambda t: gf(t[0], t[1])[0] + gf(t[0], t[1])[1], [f1, f2], stores=(store,))
        assert err < REL_TOL
