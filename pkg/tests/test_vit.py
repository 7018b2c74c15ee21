import numpy as np
import pytest

from akd import tensor as T
from akd.errors import ConfigError
from akd.fdcheck import check_gradients
from akd.tensor import Tensor, backward, record_tape
from akd.vit import (ViTConfig, audit_shapes, block_forward, init_params,
                     msa_forward, patch_embed, patchify, vit_forward)


def tiny_cfg(**kw):
    base = dict(image_size=8, patch_size=4, layers=2, heads=2, head_dim=3,
                mlp_hidden=12, channels=1)
    base.update(kw)
    return ViTConfig(**base)


def test_config_rejects_bad_patch_size():
    with pytest.raises(ConfigError):
        ViTConfig(image_size=32, patch_size=5)


def test_token_count():
    cfg = ViTConfig(image_size=32, patch_size=8)
    assert cfg.n_patches == 16
    assert cfg.grid == (4, 4)


def test_patch_embed_zero_image_zero_weights():
    cfg = tiny_cfg()
    rng = np.random.default_rng(0)
    params = init_params(cfg, rng)
    params["patch_embed.weight"].data[:] = 0.0
    params["patch_embed.bias"].data[:] = 0.0
    z = patch_embed(np.zeros((1, 1, 8, 8)), params, cfg)
    expected = np.vstack([params["cls_token"].data,
                          np.zeros((cfg.n_patches, cfg.embed_dim))])
    expected = expected + params["pos_embed"].data
    assert np.allclose(z.data[0], expected)


def test_patch_permutation_permutes_rows():
    cfg = tiny_cfg()
    rng = np.random.default_rng(1)
    img = rng.uniform(-1, 1, (1, 1, 8, 8))
    patches = patchify(img, cfg)[0]
    # swap the two top patches in image space: columns 0-3 <-> 4-7 of rows 0-3
    swapped = img.copy()
    swapped[0, 0, :4, :4], swapped[0, 0, :4, 4:] = \
        img[0, 0, :4, 4:].copy(), img[0, 0, :4, :4].copy()
    patches_sw = patchify(swapped, cfg)[0]
    assert np.allclose(patches_sw[0], patches[1])
    assert np.allclose(patches_sw[1], patches[0])
    assert np.allclose(patches_sw[2:], patches[2:])


def test_zero_wq_gives_uniform_attention():
    cfg = tiny_cfg()
    rng = np.random.default_rng(2)
    params = init_params(cfg, rng)
    params["blocks.0.attn.wq"].data[:] = 0.0
    params["blocks.0.attn.bq"].data[:] = 0.0
    z = Tensor(rng.normal(0, 1, (1, cfg.n_patches + 1, cfg.embed_dim)))
    _, attn = msa_forward(z, params, "blocks.0.", cfg)
    n = cfg.n_patches + 1
    assert np.allclose(attn.data, 1.0 / n, atol=1e-12)


def test_attention_rows_sum_to_one_all_layers():
    cfg = tiny_cfg()
    rng = np.random.default_rng(3)
    params = init_params(cfg, rng)
    out = vit_forward(rng.uniform(-1, 1, (2, 1, 8, 8)), params, cfg,
                      record_full_maps=True)
    for attn in out.attention.full_maps:
        sums = attn.data.sum(axis=-1)
        assert np.abs(sums - 1).max() < 1e-6
        assert attn.data.min() >= 0


def test_single_token_attention_is_one():
    # degenerate single-token input through one attention layer
    cfg = tiny_cfg()
    rng = np.random.default_rng(4)
    params = init_params(cfg, rng)
    z = Tensor(rng.normal(0, 1, (1, 1, cfg.embed_dim)))
    _, attn = msa_forward(z, params, "blocks.0.", cfg)
    assert np.allclose(attn.data, 1.0)


def test_residual_identity_with_zero_mlp():
    cfg = tiny_cfg()
    rng = np.random.default_rng(5)
    params = init_params(cfg, rng)
    for nm in ("mlp.w2", "mlp.b2"):
        params[f"blocks.0.{nm}"].data[:] = 0.0
    for nm in ("attn.proj_w", "attn.proj_b"):
        params[f"blocks.0.{nm}"].data[:] = 0.0
    z = Tensor(rng.normal(0, 1, (1, cfg.n_patches + 1, cfg.embed_dim)))
    z_next, _ = block_forward(z, params, 0, cfg)
    assert np.allclose(z_next.data, z.data, atol=1e-12)


def test_block_forms_differ_on_random_input():
    rng = np.random.default_rng(6)
    img = rng.uniform(-1, 1, (1, 1, 8, 8))
    outs = {}
    for form in ("mlp_ln", "pre_ln"):
        cfg = tiny_cfg(block_form=form)
        params = init_params(cfg, np.random.default_rng(7))
        outs[form] = vit_forward(img, params, cfg).class_token.data
    assert not np.allclose(outs["mlp_ln"], outs["pre_ln"])


@pytest.mark.parametrize("form", ["mlp_ln", "pre_ln"])
def test_block_forward_gradcheck(form):
    cfg = tiny_cfg(block_form=form, layers=1)
    rng = np.random.default_rng(8)
    params = init_params(cfg, rng)
    z = Tensor(rng.normal(0, 1, (1, cfg.n_patches + 1, cfg.embed_dim)),
               requires_grad=True)

    def build():
        z_next, attn = block_forward(z, params, 0, cfg)
        return T.add(T.tsum(T.mul(z_next, z_next)), T.tsum(T.mul(attn, attn)))

    leaves = [z] + [params[k] for k in
                    ("blocks.0.attn.wq", "blocks.0.attn.wv",
                     "blocks.0.mlp.w1", "blocks.0.ln2.gamma")]
    check_gradients(build, leaves, h=1e-3, rtol=1e-4)


def test_vit_forward_deterministic():
    cfg = tiny_cfg()
    rng = np.random.default_rng(9)
    params = init_params(cfg, rng)
    img = rng.uniform(-1, 1, (2, 1, 8, 8))
    a = vit_forward(img, params, cfg)
    b = vit_forward(img, params, cfg)
    assert np.array_equal(a.class_token.data, b.class_token.data)


def test_class_row_matches_full_map():
    cfg = tiny_cfg()
    rng = np.random.default_rng(10)
    params = init_params(cfg, rng)
    img = rng.uniform(-1, 1, (1, 1, 8, 8))
    lite = vit_forward(img, params, cfg, record_full_maps=False)
    full = vit_forward(img, params, cfg, record_full_maps=True)
    for row, fmap in zip(lite.attention.class_rows, full.attention.full_maps):
        assert np.allclose(row.data, fmap.data[:, :, 0, :])


def test_shape_audit_names_offenders():
    cfg = tiny_cfg()
    params = init_params(cfg, np.random.default_rng(11))
    params["blocks.0.attn.wq"] = Tensor(np.zeros((2, 2)))
    del params["final_ln.gamma"]
    with pytest.raises(ConfigError) as e:
        audit_shapes(params, cfg)
    msg = str(e.value)
    assert "blocks.0.attn.wq" in msg and "final_ln.gamma" in msg


def test_fixed_sincos_pos_embed_runs():
    cfg = tiny_cfg(pos_embed="fixed_sincos")
    params = init_params(cfg, np.random.default_rng(12))
    out = vit_forward(np.zeros((1, 1, 8, 8)), params, cfg)
    assert out.class_token.shape == (1, cfg.embed_dim)


def test_encoder_gradient_wrt_parameters():
    cfg = tiny_cfg(layers=1)
    rng = np.random.default_rng(13)
    params = init_params(cfg, rng)
    img = rng.uniform(-1, 1, (1, 1, 8, 8))

    probe = rng.normal(0, 1, (cfg.embed_dim,))

    def build():
        out = vit_forward(img, params, cfg)
        return T.tmean(T.mul(out.class_token, Tensor(probe)))

    leaves = [params["cls_token"], params["pos_embed"],
              params["patch_embed.weight"], params["blocks.0.attn.wk"]]
    check_gradients(build, leaves, h=1e-3, rtol=1e-4)
