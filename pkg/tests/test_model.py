"""Extrapolator tests: patch algebra, encoding tables, fusion, and gradients."""

import numpy as np
import pytest

from cextra import model as M
from cextra import tensor as T
from cextra.features import fit_zscore
from cextra.masking import make_mask_plan, plan_from_noise

from _gradcheck import check_grads


def tiny_config(**overrides):
    base = dict(
        n_rx=4, n_tx=8, patch_size=2, csi_channels=2, mp_channels=2,
        embed_dim=16, n_heads=2, encoder_depth=1, decoder_depth=1,
        decoder_dim=8, ffn_ratio=2, droppath_rate=0.0, fusion="mp_query",
    )
    base.update(overrides)
    return M.ExtrapolatorConfig(**base)


# -- positional encoding ------------------------------------------------


def test_positional_encoding_origin_row():
    table = M.positional_encoding_2d(3, 5, 16)
    assert table.shape == (15, 16)
    # sin(0) = 0, cos(0) = 1 at every frequency, both halves
    assert np.array_equal(table[0], np.tile([0.0, 1.0], 8))


def test_positional_encoding_hand_values():
    # dim 8 -> quarter 2, frequencies 10000^(2k/8): omega = [1, 10]
    table = M.positional_encoding_2d(3, 2, 8).reshape(3, 2, 8)
    row2 = table[2, 0]
    expected_row_half = [np.sin(2.0), np.cos(2.0), np.sin(0.2), np.cos(0.2)]
    assert np.allclose(row2[:4], expected_row_half, atol=1e-15)
    # column index 1 lands in the second half regardless of row
    col1 = table[0, 1]
    assert np.allclose(col1[4:], [np.sin(1.0), np.cos(1.0), np.sin(0.1), np.cos(0.1)],
                       atol=1e-15)


def test_positional_encoding_rows_pairwise_distinct():
    table = M.positional_encoding_2d(8, 4, 64)
    for i in range(len(table)):
        for j in range(i + 1, len(table)):
            assert np.abs(table[i] - table[j]).max() > 1e-6, (i, j)


def test_positional_encoding_dim_validation():
    with pytest.raises(ValueError):
        M.positional_encoding_2d(2, 2, 6)


# -- patch algebra ------------------------------------------------------


def test_patchify_unit_patch_is_channel_transpose():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 2, 4))
    tokens = M.patchify(T.Tensor(x), 1).data
    assert tokens.shape == (2, 8, 3)
    for m in range(2):
        for k in range(4):
            assert np.array_equal(tokens[:, m * 4 + k, :], x[:, :, m, k])


def test_patchify_layout_row_then_col_then_channel():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 4, 6))
    tokens = M.patchify(T.Tensor(x), 2).data
    assert tokens.shape == (1, 6, 8)
    # token 4 covers rows 2:4, cols 2:4 (grid position (1, 1) of a 2x3 grid)
    patch = tokens[0, 4].reshape(2, 2, 2)  # (p_row, p_col, channel)
    for i in range(2):
        for j in range(2):
            for c in range(2):
                assert patch[i, j, c] == x[0, c, 2 + i, 2 + j]


def test_patchify_roundtrip_bitwise():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 2, 4, 6))
    tokens = M.patchify(T.Tensor(x), 2)
    back = M.unpatchify(tokens, 2, 2, 4, 6)
    assert np.array_equal(back.data, x)


def test_patchify_rejects_ragged_grid():
    with pytest.raises(ValueError):
        M.patchify(T.Tensor(np.zeros((1, 2, 4, 6))), 4)
    with pytest.raises(ValueError):
        M.unpatchify(T.Tensor(np.zeros((1, 5, 8))), 2, 2, 4, 6)


# -- forward behaviour --------------------------------------------------


def test_forward_shape_and_eval_determinism():
    cfg = tiny_config()
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    x_csi = T.Tensor(rng.normal(size=(2, 2, 4, 8)))
    x_mp = T.Tensor(rng.normal(size=(2, 2, 4, 8)))
    plan = make_mask_plan(cfg.n_tokens, 0.5, np.random.default_rng(5), batch=2)
    with T.no_grad():
        a = model.forward(x_csi, x_mp, plan).data
        b = model.forward(x_csi, x_mp, plan).data
    assert a.shape == (2, 2, 4, 8)
    assert np.array_equal(a, b)


def test_single_visible_token_makes_mp_query_feature_blind():
    # with one visible token the fusion attention has a single key, so its
    # softmax weight is exactly 1 and the output comes from the value path
    # alone: mp_query then cannot depend on the feature branch at all.
    cfg = tiny_config()  # L = 8; ratio 0.9 -> keep max(floor(0.8), 1) = 1
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    x_csi = T.Tensor(rng.normal(size=(1, 2, 4, 8)))
    mp_a = T.Tensor(rng.normal(size=(1, 2, 4, 8)))
    mp_b = T.Tensor(rng.normal(size=(1, 2, 4, 8)))
    plan = make_mask_plan(cfg.n_tokens, 0.9, np.random.default_rng(8))
    assert plan.n_keep == 1
    with T.no_grad():
        out_a = model.forward(x_csi, mp_a, plan).data
        out_b = model.forward(x_csi, mp_b, plan).data
    assert np.array_equal(out_a, out_b)

    # the swapped direction reads its values from the feature branch
    swapped = M.ChannelExtrapolator(tiny_config(fusion="csi_query"),
                                    np.random.default_rng(6))
    with T.no_grad():
        sw_a = swapped.forward(x_csi, mp_a, plan).data
        sw_b = swapped.forward(x_csi, mp_b, plan).data
    assert not np.array_equal(sw_a, sw_b)


def test_fusion_direction_changes_output():
    rng_data = np.random.default_rng(9)
    x_csi = T.Tensor(rng_data.normal(size=(1, 2, 4, 8)))
    x_mp = T.Tensor(rng_data.normal(size=(1, 2, 4, 8)))
    plan = make_mask_plan(8, 0.5, np.random.default_rng(10))
    outs = {}
    for mode in ("mp_query", "csi_query"):
        model = M.ChannelExtrapolator(tiny_config(fusion=mode),
                                      np.random.default_rng(11))
        with T.no_grad():
            outs[mode] = model.forward(x_csi, x_mp, plan).data
    # same seed gives identical weights, so any difference is the wiring
    assert not np.allclose(outs["mp_query"], outs["csi_query"])


def test_fusion_none_runs_without_features():
    cfg = tiny_config(fusion="none")
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(12))
    x_csi = T.Tensor(np.random.default_rng(13).normal(size=(1, 2, 4, 8)))
    plan = make_mask_plan(cfg.n_tokens, 0.5, np.random.default_rng(14))
    with T.no_grad():
        out = model.forward(x_csi, None, plan)
    assert out.shape == (1, 2, 4, 8)
    assert not any(name.startswith(("mp_embed", "enc_mp", "fusion"))
                   for name, _ in model.parameters())


def test_forward_requires_features_when_fused():
    cfg = tiny_config()
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(15))
    x_csi = T.Tensor(np.zeros((1, 2, 4, 8)))
    plan = make_mask_plan(cfg.n_tokens, 0.5, np.random.default_rng(16))
    with pytest.raises(ValueError, match="x_mp"):
        model.forward(x_csi, None, plan)


def test_forward_input_validation():
    cfg = tiny_config(droppath_rate=0.1)
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(17))
    plan = make_mask_plan(cfg.n_tokens, 0.5, np.random.default_rng(18))
    good = T.Tensor(np.zeros((1, 2, 4, 8)))
    with pytest.raises(ValueError, match="grid"):
        model.forward(T.Tensor(np.zeros((1, 2, 8, 4))), good, plan)
    with pytest.raises(ValueError, match="rng"):
        model.forward(good, good, plan, training=True, rng=None)


def test_init_is_deterministic():
    a = M.ChannelExtrapolator(tiny_config(), np.random.default_rng(19))
    b = M.ChannelExtrapolator(tiny_config(), np.random.default_rng(19))
    for (na, ta), (nb, tb) in zip(a.parameters(), b.parameters()):
        assert na == nb
        assert np.array_equal(ta.data, tb.data)


# -- loss ----------------------------------------------------------------


def test_masked_mse_hand_value():
    # 1x2 grid of unit patches, 2 channels; only the second patch is hidden.
    h_true = T.Tensor(np.zeros((1, 2, 1, 2)))
    h_hat = np.zeros((1, 2, 1, 2))
    h_hat[0, :, 0, 0] = [1.0, 2.0]   # kept patch, must not contribute
    h_hat[0, :, 0, 1] = [3.0, 4.0]   # hidden patch: 9 + 16 = 25
    plan = plan_from_noise([[0.1, 0.9]], 0.5)
    assert plan.binary_mask.tolist() == [[0, 1]]
    loss = M.masked_mse(T.Tensor(h_hat), h_true, plan, patch_size=1)
    assert loss.item() == 25.0


def test_masked_mse_averages_over_batch():
    h_true = T.Tensor(np.zeros((2, 2, 1, 2)))
    h_hat = np.zeros((2, 2, 1, 2))
    h_hat[0, :, 0, 1] = [3.0, 4.0]   # hidden in sample 0 -> 25
    h_hat[1, :, 0, 0] = [5.0, 6.0]   # hidden in sample 1 -> 61
    h_hat[1, :, 0, 1] = [7.0, 8.0]   # kept in sample 1, ignored
    plan = plan_from_noise([[0.1, 0.9], [0.9, 0.1]], 0.5)
    loss = M.masked_mse(T.Tensor(h_hat), h_true, plan, patch_size=1)
    assert loss.item() == (25.0 + 61.0) / 2


def test_masked_mse_empty_mask_warns():
    plan = plan_from_noise([[0.2, 0.8]], 0.0)
    assert plan.n_masked == 0
    with pytest.warns(RuntimeWarning):
        loss = M.masked_mse(T.Tensor(np.ones((1, 2, 1, 2))),
                            T.Tensor(np.zeros((1, 2, 1, 2))), plan, 1)
    assert loss.item() == 0.0


def test_mask_token_learns_from_loss():
    cfg = tiny_config()
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(20))
    rng = np.random.default_rng(21)
    x_csi = T.Tensor(rng.normal(size=(1, 2, 4, 8)))
    x_mp = T.Tensor(rng.normal(size=(1, 2, 4, 8)))
    plan = make_mask_plan(cfg.n_tokens, 0.75, np.random.default_rng(22))
    out = model.forward(x_csi, x_mp, plan)
    T.backward(M.masked_mse(out, T.Tensor(np.zeros(out.shape)), plan, cfg.patch_size))
    assert model.mask_token.grad is not None
    assert np.abs(model.mask_token.grad).max() > 0


# -- mask geometry and inference wrapper ---------------------------------


def test_token_mask_to_cells_expands_patches():
    cfg = M.ExtrapolatorConfig(n_rx=2, n_tx=4, patch_size=2, embed_dim=8,
                               n_heads=2, decoder_dim=8)
    plan = plan_from_noise([[0.1, 0.9]], 0.5)
    cells = M.token_mask_to_cells(plan, cfg)
    assert np.array_equal(cells, [[[0, 0, 1, 1], [0, 0, 1, 1]]])


def test_extrapolate_pastes_known_patches_back():
    cfg = tiny_config()
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(23))
    rng = np.random.default_rng(24)
    csi = rng.normal(size=(2, 2, 4, 8)) * 3.0 + 1.0
    feats = rng.normal(size=(2, 2, 4, 8))
    plan = make_mask_plan(cfg.n_tokens, 0.5, np.random.default_rng(25), batch=2)
    out = M.extrapolate(model, csi, feats, plan, fit_zscore(csi), fit_zscore(feats))
    known = M.token_mask_to_cells(plan, cfg)[:, None, :, :] == 0
    assert np.array_equal(out[np.broadcast_to(known, out.shape)],
                          csi[np.broadcast_to(known, csi.shape)])
    raw = M.extrapolate(model, csi, feats, plan, fit_zscore(csi), fit_zscore(feats),
                        paste_back=False)
    assert not np.array_equal(raw, out)


# -- config validation ----------------------------------------------------


@pytest.mark.parametrize("bad", [
    dict(fusion="both"),
    dict(n_rx=5),                # not divisible by patch size
    dict(embed_dim=18),          # not divisible by 4
    dict(n_heads=3),             # 16 % 3 != 0
    dict(droppath_rate=1.0),
    dict(encoder_depth=0),
    dict(ffn_ratio=0),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        tiny_config(**bad)


# -- end-to-end gradients --------------------------------------------------


def test_end_to_end_gradients_match_finite_differences():
    cfg = tiny_config()
    model = M.ChannelExtrapolator(cfg, np.random.default_rng(26))
    rng = np.random.default_rng(27)
    x_csi = T.Tensor(rng.normal(size=(2, 2, 4, 8)))
    x_mp = T.Tensor(rng.normal(size=(2, 2, 4, 8)))
    h_true = T.Tensor(rng.normal(size=(2, 2, 4, 8)))
    plan = make_mask_plan(cfg.n_tokens, 0.5, np.random.default_rng(28), batch=2)

    def build_loss():
        out = model.forward(x_csi, x_mp, plan)
        return M.masked_mse(out, h_true, plan, cfg.patch_size)

    params = model.parameters()
    picked = [params[i][1] for i in
              np.random.default_rng(29).choice(len(params), size=20, replace=False)]
    worst = check_grads(build_loss, picked, n_probe=3, rel_tol=1e-3)
    assert worst < 1e-3
