"""Vision-transformer encoder.

Forward pass over a stack of multi-head self-attention blocks, returning
the class-token embedding, the patch-token embeddings and the class-token
attention rows of every layer/head.

Two block wirings are supported:
  * mlp_ln (default): z_l = MLP(LN(msa(z_{l-1}) + z_{l-1})) + z_{l-1},
    with the attention computed directly on z_{l-1};
  * pre_ln: the conventional pre-norm block (LN before the attention and
    before the MLP, two residual additions).
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor


@dataclass
class ViTConfig:
    image_size: int = 32
    patch_size: int = 8
    layers: int = 6
    heads: int = 4
    head_dim: int = 16
    mlp_hidden: int = 0  # 0 -> 4 * embed_dim
    block_form: str = "mlp_ln"
    pos_embed: str = "learnable"
    channels: int = 3

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by "
                f"patch_size {self.patch_size}")
        if self.block_form not in ("mlp_ln", "pre_ln"):
            raise ConfigError(f"unknown block_form {self.block_form!r}")
        if self.pos_embed not in ("learnable", "fixed_sincos"):
            raise ConfigError(f"unknown pos_embed {self.pos_embed!r}")
        if self.mlp_hidden == 0:
            self.mlp_hidden = 4 * self.embed_dim
        if self.mlp_hidden % self.embed_dim != 0:
            raise ConfigError("mlp_hidden must be a multiple of embed_dim")

    @property
    def embed_dim(self):
        return self.heads * self.head_dim

    @property
    def grid(self):
        g = self.image_size // self.patch_size
        return (g, g)

    @property
    def n_patches(self):
        g = self.image_size // self.patch_size
        return g * g

    def to_dict(self):
        return {
            "image_size": self.image_size, "patch_size": self.patch_size,
            "layers": self.layers, "heads": self.heads,
            "head_dim": self.head_dim, "mlp_hidden": self.mlp_hidden,
            "block_form": self.block_form, "pos_embed": self.pos_embed,
            "channels": self.channels,
        }


_BLOCK_FORMS = ("mlp_ln", "pre_ln")
_POS_EMBEDS = ("learnable", "fixed_sincos")


def config_meta(cfg):
    """Scalar encoding of a ViTConfig for embedding in checkpoints."""
    return {
        "cfg.image_size": cfg.image_size, "cfg.patch_size": cfg.patch_size,
        "cfg.layers": cfg.layers, "cfg.heads": cfg.heads,
        "cfg.head_dim": cfg.head_dim, "cfg.mlp_hidden": cfg.mlp_hidden,
        "cfg.block_form": _BLOCK_FORMS.index(cfg.block_form),
        "cfg.pos_embed": _POS_EMBEDS.index(cfg.pos_embed),
        "cfg.channels": cfg.channels,
    }


def config_from_meta(tensors):
    """Rebuild a ViTConfig from checkpoint meta scalars."""
    def get(key):
        return int(round(float(tensors[f"meta.cfg.{key}"])))
    return ViTConfig(
        image_size=get("image_size"), patch_size=get("patch_size"),
        layers=get("layers"), heads=get("heads"), head_dim=get("head_dim"),
        mlp_hidden=get("mlp_hidden"),
        block_form=_BLOCK_FORMS[get("block_form")],
        pos_embed=_POS_EMBEDS[get("pos_embed")],
        channels=get("channels"))


def expected_shapes(cfg):
    """Name -> shape for every learnable tensor of the encoder."""
    d = cfg.embed_dim
    n = cfg.n_patches
    pdim = cfg.patch_size * cfg.patch_size * cfg.channels
    shapes = {
        "patch_embed.weight": (pdim, d),
        "patch_embed.bias": (d,),
        "cls_token": (1, d),
        "final_ln.gamma": (d,),
        "final_ln.beta": (d,),
    }
    if cfg.pos_embed == "learnable":
        shapes["pos_embed"] = (n + 1, d)
    for l in range(cfg.layers):
        p = f"blocks.{l}."
        for nm in ("wq", "wk", "wv", "proj_w"):
            shapes[p + "attn." + nm] = (d, d)
        for nm in ("bq", "bk", "bv", "proj_b"):
            shapes[p + "attn." + nm] = (d,)
        if cfg.block_form == "pre_ln":
            shapes[p + "ln1.gamma"] = (d,)
            shapes[p + "ln1.beta"] = (d,)
        shapes[p + "ln2.gamma"] = (d,)
        shapes[p + "ln2.beta"] = (d,)
        shapes[p + "mlp.w1"] = (d, cfg.mlp_hidden)
        shapes[p + "mlp.b1"] = (cfg.mlp_hidden,)
        shapes[p + "mlp.w2"] = (cfg.mlp_hidden, d)
        shapes[p + "mlp.b2"] = (d,)
    return shapes


def sincos_pos_embed(n_tokens, dim):
    """Fixed 1-D sinusoidal position table over token index."""
    pos = np.arange(n_tokens)[:, None]
    i = np.arange(dim // 2)[None, :]
    angles = pos / np.power(10000.0, 2 * i / dim)
    table = np.zeros((n_tokens, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def init_params(cfg, rng, dtype=np.float64, trainable=True):
    """Random initialization; returns name -> Tensor."""
    params = {}
    for name, shape in expected_shapes(cfg).items():
        if name.endswith(".gamma"):
            arr = np.ones(shape)
        elif name.endswith((".beta", ".bias", ".b1", ".b2", ".bq", ".bk",
                            ".bv", ".proj_b")):
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        params[name] = Tensor(arr.astype(dtype), requires_grad=trainable)
    return params


def audit_shapes(params, cfg):
    """Raise ConfigError listing every tensor whose shape is wrong."""
    exp = expected_shapes(cfg)
    bad = []
    for name, shape in exp.items():
        if name not in params:
            bad.append(f"{name}: missing (expected {shape})")
        elif tuple(params[name].shape) != shape:
            bad.append(f"{name}: got {tuple(params[name].shape)}, "
                       f"expected {shape}")
    for name in params:
        if name not in exp:
            bad.append(f"{name}: unexpected")
    if bad:
        raise ConfigError("parameter shape audit failed:\n  " + "\n  ".join(bad))


@dataclass
class AttentionRecord:
    """Class-token attention rows, one entry per layer."""
    class_rows: list          # per layer: Tensor (B, H, N+1)
    grid: tuple               # (w, h) patch grid
    full_maps: list = None    # per layer: Tensor (B, H, N+1, N+1) if requested


@dataclass
class EncoderOutput:
    class_token: Tensor       # (B, D)
    patch_tokens: Tensor      # (B, N, D)
    attention: AttentionRecord


def patchify(images, cfg):
    """(B, C, H, W) uint/float array -> (B, N, P*P*C) float array.

    Patch n = r * grid_w + c holds the pixels of patch (r, c) flattened
    channel-first.
    """
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    b, c, h, w = images.shape
    if (c, h, w) != (cfg.channels, cfg.image_size, cfg.image_size):
        raise ConfigError(
            f"image dims {(c, h, w)} do not match config "
            f"{(cfg.channels, cfg.image_size, cfg.image_size)}")
    p = cfg.patch_size
    g = cfg.image_size // p
    x = images.reshape(b, c, g, p, g, p)
    x = x.transpose(0, 2, 4, 1, 3, 5)  # b, gr, gc, c, p, p
    return x.reshape(b, g * g, c * p * p)


def patch_embed(images, params, cfg):
    """Token embeddings z0: class token + projected patches + positions."""
    patches = patchify(images, cfg)
    b = patches.shape[0]
    n = cfg.n_patches
    d = cfg.embed_dim
    x = T.matmul(Tensor(patches), params["patch_embed.weight"])
    x = T.add(x, params["patch_embed.bias"])
    cls = T.broadcast_to(T.reshape(params["cls_token"], (1, 1, d)), (b, 1, d))
    z = T.concat([cls, x], axis=1)
    if cfg.pos_embed == "learnable":
        z = T.add(z, params["pos_embed"])
    else:
        z = T.add(z, Tensor(sincos_pos_embed(n + 1, d).astype(z.dtype)))
    return z


def _ln_affine(x, params, prefix):
    xhat = T.layer_norm(x)
    return T.add(T.mul(xhat, params[prefix + ".gamma"]), params[prefix + ".beta"])


def msa_forward(z, params, prefix, cfg):
    """Multi-head self-attention. Returns (output tokens, attention maps).

    Attention maps are the post-softmax (B, H, T, T) probabilities.
    """
    b, t, d = z.shape
    hd = cfg.head_dim

    def heads(x):
        return T.transpose(T.reshape(x, (b, t, cfg.heads, hd)), 1, 2)

    q = heads(T.add(T.matmul(z, params[prefix + "attn.wq"]), params[prefix + "attn.bq"]))
    k = heads(T.add(T.matmul(z, params[prefix + "attn.wk"]), params[prefix + "attn.bk"]))
    v = heads(T.add(T.matmul(z, params[prefix + "attn.wv"]), params[prefix + "attn.bv"]))
    logits = T.scale(T.matmul(q, T.transpose(k, 2, 3)), 1.0 / np.sqrt(hd))
    attn = T.softmax(logits, axis=-1)
    y = T.matmul(attn, v)                       # (b, h, t, hd)
    y = T.reshape(T.transpose(y, 1, 2), (b, t, d))
    out = T.add(T.matmul(y, params[prefix + "attn.proj_w"]),
                params[prefix + "attn.proj_b"])
    return out, attn


def _mlp(x, params, prefix):
    h = T.gelu(T.add(T.matmul(x, params[prefix + "mlp.w1"]), params[prefix + "mlp.b1"]))
    return T.add(T.matmul(h, params[prefix + "mlp.w2"]), params[prefix + "mlp.b2"])


def block_forward(z, params, layer, cfg):
    """One transformer block; returns (tokens, attention maps)."""
    prefix = f"blocks.{layer}."
    if cfg.block_form == "mlp_ln":
        y, attn = msa_forward(z, params, prefix, cfg)
        u = T.add(y, z)
        z_next = T.add(_mlp(_ln_affine(u, params, prefix + "ln2"), params, prefix), z)
    else:  # pre_ln
        y, attn = msa_forward(_ln_affine(z, params, prefix + "ln1"), params, prefix, cfg)
        u = T.add(z, y)
        z_next = T.add(u, _mlp(_ln_affine(u, params, prefix + "ln2"), params, prefix))
    return z_next, attn


def vit_forward(images, params, cfg, record_full_maps=False):
    """Full encoder pass. images: (B, C, H, W) or (C, H, W)."""
    audit_shapes(params, cfg)
    z = patch_embed(images, params, cfg)
    class_rows = []
    full_maps = [] if record_full_maps else None
    for layer in range(cfg.layers):
        z, attn = block_forward(z, params, layer, cfg)
        class_rows.append(T.select(attn, 2, 0))  # (B, H, N+1)
        if record_full_maps:
            full_maps.append(attn)
    z = _ln_affine(z, params, "final_ln")
    cls = T.select(z, 1, 0)
    patches = T.slice_axis(z, 1, 1, cfg.n_patches)
    record = AttentionRecord(class_rows=class_rows, grid=cfg.grid,
                             full_maps=full_maps)
    return EncoderOutput(class_token=cls, patch_tokens=patches, attention=record)
