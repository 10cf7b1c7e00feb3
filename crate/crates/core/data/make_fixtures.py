"""Regenerates the bundled data fixtures.

- iris.csv: copy of the Iris table shipped with scikit-learn.
- mnist5k-{images-idx3,labels-idx1}-ubyte.gz: the 5000-image MNIST subset
  shipped with mlxtend (mlxtend/data/data/mnist_5k.csv.gz), re-encoded as IDX
  with classes interleaved round-robin.
- letters-{images-idx3,labels-idx1}-ubyte.gz: synthetic handwritten-style
  capital letters rendered from DejaVu fonts in MNIST geometry (20x20 glyph
  box, centre of mass at the 28x28 centre). Labels 1..26 as in EMNIST letters.
  Used as the out-of-distribution set when EMNIST is not available.

Usage: python3 make_fixtures.py <path-to-mlxtend-wheel>
"""
import gzip
import io
import os
import struct
import sys
import zipfile

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

HERE = os.path.dirname(os.path.abspath(__file__))


def write_idx_images(path, images):
    n, h, w = images.shape
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def iris():
    import sklearn.datasets
    src = os.path.join(os.path.dirname(sklearn.datasets.__file__), "data", "iris.csv")
    rows = open(src).read().strip().split("\n")[1:]
    with open(os.path.join(HERE, "iris.csv"), "w") as f:
        f.write("sepal_length,sepal_width,petal_length,petal_width,species\n")
        for r in rows:
            f.write(r.strip() + "\n")


def interleave_classes(images, labels):
    """Round-robin over classes, so every prefix is close to class-balanced."""
    rank = np.zeros(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rank[idx] = np.arange(len(idx))
    order = np.lexsort((labels, rank))
    return images[order], labels[order]


def mnist(wheel):
    z = zipfile.ZipFile(wheel)
    raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    data = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = data[:, :-1].reshape(-1, 28, 28)
    labels = data[:, -1]
    images, labels = interleave_classes(images, labels)
    write_idx_images(os.path.join(HERE, "mnist5k-images-idx3-ubyte.gz"), images)
    write_idx_labels(os.path.join(HERE, "mnist5k-labels-idx1-ubyte.gz"), labels)


def center_of_mass_place(glyph):
    canvas = np.zeros((28, 28), dtype=np.float64)
    ys, xs = np.nonzero(glyph > 0)
    total = glyph.sum()
    cy = (glyph.sum(axis=1) * np.arange(glyph.shape[0])).sum() / total
    cx = (glyph.sum(axis=0) * np.arange(glyph.shape[1])).sum() / total
    oy = int(round(14 - cy))
    ox = int(round(14 - cx))
    for y in range(glyph.shape[0]):
        for x in range(glyph.shape[1]):
            ty, tx = y + oy, x + ox
            if 0 <= ty < 28 and 0 <= tx < 28:
                canvas[ty, tx] = glyph[y, x]
    return canvas


def letters(count_per_letter=80, seed=7):
    rng = np.random.default_rng(seed)
    font_dir = "/usr/share/fonts/truetype/dejavu"
    fonts = sorted(
        os.path.join(font_dir, f) for f in os.listdir(font_dir) if f.endswith(".ttf")
    )
    images, labels = [], []
    for rep in range(count_per_letter):
        for k in range(26):
            ch = chr(ord("A") + k)
            if rng.random() < 0.5:
                ch = ch.lower()
            font = ImageFont.truetype(fonts[rng.integers(len(fonts))], 72)
            img = Image.new("L", (128, 128), 0)
            d = ImageDraw.Draw(img)
            d.text((28, 12), ch, fill=255, font=font,
                   stroke_width=int(rng.integers(0, 4)), stroke_fill=255)
            img = img.rotate(rng.uniform(-15, 15), resample=Image.BILINEAR)
            img = img.transform(img.size, Image.AFFINE,
                                (1, rng.uniform(-0.25, 0.25), 0, 0, 1, 0),
                                resample=Image.BILINEAR)
            box = img.getbbox()
            img = img.crop(box)
            w, h = img.size
            s = 20.0 / max(w, h)
            img = img.resize((max(1, int(round(w * s))), max(1, int(round(h * s)))),
                             Image.LANCZOS)
            img = img.filter(ImageFilter.GaussianBlur(rng.uniform(0.0, 0.6)))
            glyph = np.asarray(img, dtype=np.float64)
            canvas = center_of_mass_place(glyph)
            canvas = np.clip(canvas * 255.0 / max(canvas.max(), 1.0), 0, 255)
            images.append(canvas.round().astype(np.uint8))
            labels.append(k + 1)
    perm = rng.permutation(len(images))
    images = np.stack(images)[perm]
    labels = np.asarray(labels)[perm]
    write_idx_images(os.path.join(HERE, "letters-images-idx3-ubyte.gz"), images)
    write_idx_labels(os.path.join(HERE, "letters-labels-idx1-ubyte.gz"), labels)


if __name__ == "__main__":
    iris()
    mnist(sys.argv[1])
    letters()
