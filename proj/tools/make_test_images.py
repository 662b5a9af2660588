"""Writes the natural-image fixtures under tests/data/natural as binary PPMs.

Training crops and held-out crops come from disjoint source photographs
(scikit-image and scikit-learn sample data).
"""
import pathlib

import numpy as np
import skimage.data
from sklearn.datasets import load_sample_image

ROOT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "natural"


def write_ppm(path, rgb):
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def crops(image, size, count, margin=0.15):
    """`count` crops spread over the central (1 - 2*margin) part of the image."""
    h, w, _ = image.shape
    y0, y1 = int(h * margin), int(h * (1 - margin)) - size
    x0, x1 = int(w * margin), int(w * (1 - margin)) - size
    cols = int(np.ceil(np.sqrt(count)))
    rows = int(np.ceil(count / cols))
    out = []
    for i in range(count):
        r, c = divmod(i, cols)
        y = y0 + (y1 - y0) * r // max(rows - 1, 1)
        x = x0 + (x1 - x0) * c // max(cols - 1, 1)
        out.append(image[y:y + size, x:x + size, :3])
    return out


def main():
    train = {
        "astronaut": skimage.data.astronaut(),
        "rocket": skimage.data.rocket(),
        "ihc": skimage.data.immunohistochemistry(),
        "motorcycle": skimage.data.stereo_motorcycle()[0],
        "china": load_sample_image("china.jpg"),
        "retina": skimage.data.retina()[300:1100, 300:1100],
    }
    test = {
        "chelsea": (skimage.data.chelsea(), 3, 0.1),
        "coffee": (skimage.data.coffee(), 3, 0.1),
        "flower": (load_sample_image("flower.jpg")[120:360, 180:480], 2, 0.0),
    }
    for sub in ("train", "test"):
        (ROOT / sub).mkdir(parents=True, exist_ok=True)
    for name, img in train.items():
        for i, c in enumerate(crops(img, 160, 4)):
            write_ppm(ROOT / "train" / f"{name}_{i}.ppm", c)
    for name, (img, n, margin) in test.items():
        for i, c in enumerate(crops(img, 128, n, margin)):
            write_ppm(ROOT / "test" / f"{name}_{i}.ppm", c)


if __name__ == "__main__":
    main()
