"""Synthetic shape-classification dataset and its raw binary format.

Eight classes of parametric geometric figures (bars, cross, disk,
checkerboard, diagonal stripe, ring, frame) drawn with a random tint,
position and scale over a noise background. Deterministic per seed;
splits are class-balanced.

Raw file layout (little-endian): magic b"AKDD", u32 count, u32 C, u32 H,
u32 W; then per sample one label byte followed by C*H*W uint8 pixels.
"""

import struct

import numpy as np

from .errors import CheckpointError, ConfigError

MAGIC = b"AKDD"
N_CLASSES = 8
CLASS_NAMES = ("h_bar", "v_bar", "cross", "disk",
               "checker", "diag", "ring", "frame")


def _draw_shape(label, size, rng):
    """Binary mask of one shape instance at random position/scale."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = rng.uniform(0.3, 0.7) * size
    cy = rng.uniform(0.3, 0.7) * size
    s = rng.uniform(0.25, 0.45) * size  # half-extent
    thick = max(1.5, 0.18 * s)
    dx, dy = xx - cx, yy - cy
    r = np.sqrt(dx * dx + dy * dy)
    if label == 0:    # horizontal bar
        mask = (np.abs(dy) < thick) & (np.abs(dx) < s)
    elif label == 1:  # vertical bar
        mask = (np.abs(dx) < thick) & (np.abs(dy) < s)
    elif label == 2:  # cross
        mask = ((np.abs(dy) < thick) | (np.abs(dx) < thick)) & (r < s)
    elif label == 3:  # disk
        mask = r < 0.8 * s
    elif label == 4:  # checkerboard
        cell = max(2, int(0.5 * s))
        mask = (((xx // cell) + (yy // cell)) % 2 == 0) & (np.abs(dx) < s) & (np.abs(dy) < s)
    elif label == 5:  # diagonal stripe
        mask = (np.abs(dx - dy) < 1.6 * thick) & (r < 1.3 * s)
    elif label == 6:  # ring
        mask = (r > 0.55 * s) & (r < 0.85 * s)
    elif label == 7:  # square frame
        inside = (np.abs(dx) < s) & (np.abs(dy) < s)
        inner = (np.abs(dx) < s - 2 * thick) & (np.abs(dy) < s - 2 * thick)
        mask = inside & ~inner
    else:
        raise ConfigError(f"label {label} out of range")
    return mask


def generate(seed, count, size=32, channels=3, classes=N_CLASSES):
    """Class-balanced synthetic dataset: (images uint8 (B,C,H,W), labels)."""
    if count % classes != 0:
        raise ConfigError(f"count {count} not divisible by {classes} classes")
    rng = np.random.default_rng(seed)
    per = count // classes
    labels = np.repeat(np.arange(classes), per).astype(np.uint8)
    rng.shuffle(labels)
    images = np.empty((count, channels, size, size), dtype=np.uint8)
    for i, label in enumerate(labels):
        noise = rng.uniform(0.0, 0.35, (channels, size, size))
        tint = rng.uniform(0.6, 1.0, channels)
        mask = _draw_shape(int(label), size, rng)
        img = noise
        img = np.where(mask[None], tint[:, None, None], img)
        images[i] = (img * 255).astype(np.uint8)
    return images, labels


def write_raw(path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    b, c, h, w = images.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", b, c, h, w))
        for img, label in zip(images, labels):
            f.write(bytes([int(label)]))
            f.write(img.tobytes())


def read_raw(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad dataset magic in {path}")
    count, c, h, w = struct.unpack("<IIII", raw[4:20])
    sample = 1 + c * h * w
    if len(raw) != 20 + count * sample:
        raise CheckpointError(
            f"dataset size mismatch: expected {20 + count * sample} bytes, "
            f"got {len(raw)}")
    images = np.empty((count, c, h, w), dtype=np.uint8)
    labels = np.empty(count, dtype=np.uint8)
    off = 20
    for i in range(count):
        labels[i] = raw[off]
        images[i] = np.frombuffer(
            raw, dtype=np.uint8, count=c * h * w, offset=off + 1).reshape(c, h, w)
        off += sample
    return images, labels


def to_float(images, dtype=np.float32):
    """uint8 pixels -> centered floats in [-1, 1]."""
    return ((np.asarray(images, dtype=dtype) / 255.0) - 0.5) * 2.0


def augment(images, rng, pad=3):
    """Random shift (reflect-padded crop) + horizontal flip, per sample."""
    images = np.asarray(images)
    b, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                    mode="reflect")
    out = np.empty_like(images)
    offs = rng.integers(0, 2 * pad + 1, size=(b, 2))
    flips = rng.random(b) < 0.5
    for i in range(b):
        oy, ox = offs[i]
        crop = padded[i, :, oy:oy + h, ox:ox + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
