"""Image tensors, IDX dataset ingestion, noise, and CSV persistence.

Images are float64 numpy arrays of shape (C, H, W) with intensities in
[0, 1]. All stochastic operations take an explicit integer seed; there is
no hidden global randomness anywhere in the package.
"""

import struct
from dataclasses import dataclass

import numpy as np

from dss.errors import FormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# float format used for every CSV the package writes; round-trips float64 exactly
FLOAT_FMT = "%.17g"


@dataclass
class LabeledExample:
    image: np.ndarray  # (C, H, W)
    label: int


@dataclass
class ExampleTriplet:
    clean: LabeledExample
    noisy: np.ndarray
    adversarial: np.ndarray
    attack_name: str
    epsilon: float


def validate_image(x, name="image"):
    """Check the (C, H, W) shape and the [0, 1] range; returns x."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"{name} must have shape (C, H, W), got {x.shape}")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError(f"{name} has intensities outside [0, 1]")
    return x


def _read_be32(f, path):
    data = f.read(4)
    if len(data) != 4:
        raise FormatError(f"{path}: truncated header")
    return struct.unpack(">I", data)[0]


def load_idx_images(path):
    """Load an IDX image file into a list of (1, H, W) float64 arrays in [0, 1]."""
    with open(path, "rb") as f:
        magic = _read_be32(f, path)
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(
                f"{path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        count = _read_be32(f, path)
        rows = _read_be32(f, path)
        cols = _read_be32(f, path)
        payload = f.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
    scaled = data.astype(np.float64) / 255.0
    return [scaled[i][np.newaxis, :, :] for i in range(count)]


def load_idx_labels(path):
    """Load an IDX label file into a list of ints."""
    with open(path, "rb") as f:
        magic = _read_be32(f, path)
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(
                f"{path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        count = _read_be32(f, path)
        payload = f.read()
    if len(payload) != count:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {count}")
    return [int(b) for b in payload]


def write_idx_images(path, images):
    """Write (C=1, H, W) unit-interval images as an IDX image file (bytes 0..255)."""
    images = [np.asarray(im) for im in images]
    h, w = images[0].shape[-2:]
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(images), h, w))
        for im in images:
            f.write(np.round(im.reshape(h, w) * 255.0).astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    """Write integer labels as an IDX label file."""
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        f.write(bytes(int(v) for v in labels))


def clip_unit(x):
    """Clamp every element to [0, 1]; idempotent."""
    return np.clip(x, 0.0, 1.0)


def uniform_noise(x, epsilon, seed):
    """x plus per-element uniform noise on [-epsilon, epsilon], clipped to [0, 1]."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    rng = np.random.default_rng(seed)
    delta = rng.uniform(-epsilon, epsilon, size=x.shape)
    return clip_unit(x + delta)


def save_images_csv(path, images):
    """Persist images as flattened CSV rows under a '# shape=C,H,W' header."""
    images = [np.asarray(im) for im in images]
    c, h, w = images[0].shape
    with open(path, "w") as f:
        f.write(f"# shape={c},{h},{w}\n")
        for im in images:
            f.write(",".join(FLOAT_FMT % v for v in im.ravel()) + "\n")


def load_images_csv(path):
    """Inverse of save_images_csv; returns a list of (C, H, W) arrays."""
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("# shape="):
            raise FormatError(f"{path}: missing '# shape=C,H,W' header, got {header!r}")
        try:
            c, h, w = (int(v) for v in header[len("# shape="):].split(","))
        except ValueError as exc:
            raise FormatError(f"{path}: unparseable shape header {header!r}") from exc
        images = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = np.array([float(v) for v in line.split(",")])
            if row.size != c * h * w:
                raise FormatError(
                    f"{path}: row of {row.size} values, expected {c * h * w}")
            images.append(row.reshape(c, h, w))
    return images
