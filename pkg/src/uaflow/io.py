"""Reading and writing dictionaries, feature fields, images and figures.

Dictionaries and feature fields use a small versioned text format::

    uaflow-dictionary 1
    manifold so3
    shape 8 3 3
    meta channels=1
    <one line per point, row-major, 17 significant digits>

17 significant digits make the roundtrip exact for doubles.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .data import FeatureField, LabelDictionary
from .exceptions import ConfigError

FORMAT_VERSION = 1

# sixteen well separated colors, indexed by label id
PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (255, 225, 25),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (128, 0, 0), (128, 128, 0), (0, 0, 128),
], dtype=np.uint8)


def _fmt(x):
    return format(float(x), ".17g")


def _meta_line(meta):
    items = []
    for k, v in sorted(meta.items()):
        if isinstance(v, (int, float, str, bool, np.integer, np.floating)):
            items.append(f"{k}={v}")
    return "meta " + " ".join(items) if items else None


def _parse_meta(text):
    meta = {}
    for item in text.split():
        k, _, v = item.partition("=")
        for conv in (int, float):
            try:
                meta[k] = conv(v)
                break
            except ValueError:
                continue
        else:
            meta[k] = v
    return meta


def _write_points(path, kind, manifold, points, extra_header=(), meta=None):
    points = np.asarray(points, dtype=float)
    lines = [f"uaflow-{kind} {FORMAT_VERSION}", f"manifold {manifold}"]
    lines.extend(extra_header)
    lines.append("shape " + " ".join(str(n) for n in points.shape))
    m = _meta_line(meta or {})
    if m:
        lines.append(m)
    flat = points.reshape(points.shape[0], -1)
    lines.extend(" ".join(_fmt(x) for x in row) for row in flat)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_points(path, kind):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    if not lines or lines[0].split()[0] != f"uaflow-{kind}":
        raise ConfigError(f"{path}: not a uaflow {kind} file")
    version = int(lines[0].split()[1])
    if version > FORMAT_VERSION:
        raise ConfigError(f"{path}: format version {version} is newer than supported")
    header, body = {}, []
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if not body and key in ("manifold", "shape", "grid", "meta"):
            header[key] = rest
        else:
            body.append(ln)
    shape = tuple(int(n) for n in header["shape"].split())
    points = np.array([[float(x) for x in ln.split()] for ln in body]).reshape(shape)
    return header, points


def write_dictionary(path, labels: LabelDictionary, meta=None):
    _write_points(path, "dictionary", labels.manifold, labels.labels, meta=meta)


def read_dictionary(path):
    header, points = _read_points(path, "dictionary")
    return LabelDictionary(points, header["manifold"])


def write_field(path, field: FeatureField):
    _write_points(path, "field", field.manifold, field.points,
                  [f"grid {field.height} {field.width}"], field.meta)


def read_field(path):
    header, points = _read_points(path, "field")
    h, w = (int(n) for n in header["grid"].split())
    meta = _parse_meta(header.get("meta", ""))
    return FeatureField(points, header["manifold"], h, w, meta)


def read_image(path):
    """8- or 16-bit PNG as floats in [0, 1]; shape (H, W) or (H, W, 3)."""
    try:
        img = Image.open(path)
        img.load()
    except OSError as err:
        raise ConfigError(f"cannot read image {path}: {err}") from err
    if img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=float) / 65535.0
    elif img.mode in ("L", "RGB"):
        arr = np.asarray(img, dtype=float) / 255.0
    else:
        arr = np.asarray(img.convert("RGB"), dtype=float) / 255.0
    return arr


def write_image(path, u, bits=8):
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    if bits == 16:
        if u.ndim != 2:
            raise ConfigError("16-bit output only for grayscale images")
        Image.fromarray(np.round(u * 65535).astype(np.uint16)).save(path)
    else:
        Image.fromarray(np.round(u * 255).astype(np.uint8)).save(path)


def false_color(labeling, height, width):
    lab = np.asarray(labeling).reshape(height, width)
    return PALETTE[lab % len(PALETTE)]


def write_labeling(path, labeling, height, width):
    """Indexed PNG whose pixel values are the label ids, shown in :data:`PALETTE`."""
    lab = np.asarray(labeling).reshape(height, width)
    if lab.min() < 0 or lab.max() > 255:
        raise ConfigError("indexed PNG holds label ids 0..255 only")
    img = Image.fromarray(lab.astype(np.uint8), mode="P")
    pal = np.tile(PALETTE, (16, 1))
    img.putpalette(pal.ravel().tolist())
    img.save(path)


def read_labeling(path):
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        raise ConfigError(f"{path}: expected an indexed or grayscale label image")
    return np.asarray(img).astype(int)


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def write_histogram(path, mass, threshold=0.01, title=None):
    """Bar chart of the assignment mass share per label, bars in label colors."""
    plt = _figure()
    mass = np.asarray(mass, dtype=float)
    fig, ax = plt.subplots(figsize=(4, 2.5), dpi=100)
    colors = PALETTE[np.arange(mass.size) % len(PALETTE)] / 255.0
    ax.bar(np.arange(mass.size), mass, color=colors, edgecolor="k", linewidth=0.5)
    ax.axhline(threshold, color="0.4", linestyle=":", linewidth=0.8)
    ax.set_xticks(np.arange(mass.size))
    ax.set_xlabel("label")
    ax.set_ylabel("mass share")
    ax.set_ylim(0, max(1e-3, mass.max()) * 1.1)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_trihedra(path, frames):
    """One glyph per rotation: its column axes drawn in an oblique projection."""
    plt = _figure()
    frames = np.asarray(frames, dtype=float)
    n = frames.shape[0]
    fig, axes = plt.subplots(1, n, figsize=(1.2 * n, 1.3), dpi=100, squeeze=False)
    # fixed oblique view: project (x, y, z) onto the image plane
    view = np.array([[1.0, -0.35, 0.0], [0.0, -0.35, 1.0]])
    axis_colors = ("tab:red", "tab:green", "tab:blue")
    for j, ax in enumerate(axes[0]):
        ax.set_facecolor(PALETTE[j % len(PALETTE)] / 255.0)
        for k in range(3):
            tip = view @ frames[j][:, k]
            ax.plot([0, tip[0]], [0, tip[1]], color=axis_colors[k], linewidth=2)
        ax.set_xlim(-1.2, 1.2)
        ax.set_ylim(-1.2, 1.2)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(str(j), fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_lines(path, records):
    """Line-oriented text records: one ``key=value ...`` line per record."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(" ".join(f"{k}={_fmt(v) if isinstance(v, float) else v}"
                              for k, v in rec.items()) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
