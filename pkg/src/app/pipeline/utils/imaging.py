from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .error_handler import FileFormatError, handle_error_helper

# palette index -> RGB used for ground-truth label PNGs
LABEL_PALETTE = {
    0: (0, 0, 0),
    1: (0, 160, 0),
    2: (0, 0, 255),
    3: (255, 0, 0),
    4: (255, 255, 255),
}


def _open(path: str | Path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        handle_error_helper(FileFormatError, f"Image {path} not found")
    try:
        image = Image.open(path)
        image.load()
        return image
    except (UnidentifiedImageError, OSError) as e:
        handle_error_helper(FileFormatError, f"Cannot decode {path}: {e}")


def read_gray(path: str | Path) -> np.ndarray:
    """8-bit grayscale image (PGM or any Pillow format)."""
    return np.asarray(_open(path).convert("L"), dtype=np.uint8)


def read_color(path: str | Path) -> np.ndarray:
    """RGB image as an (H, W, 3) uint8 array (PPM, PNG, ...)."""
    return np.asarray(_open(path).convert("RGB"), dtype=np.uint8)


def read_label_map(path: str | Path) -> np.ndarray:
    """Indexed PNG ground truth; values are palette indices."""
    image = _open(path)
    if image.mode not in ("P", "L"):
        handle_error_helper(
            FileFormatError,
            f"Label image {path} must be indexed, got mode {image.mode}",
        )
    return np.asarray(image, dtype=np.uint8)


def save_gray(array: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
    return path


def save_color(array: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
    return path


def save_label_map(labels: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = Image.fromarray(np.asarray(labels, dtype=np.uint8))
    palette = []
    for index in range(256):
        palette.extend(LABEL_PALETTE.get(index, (0, 0, 0)))
    image.putpalette(palette)
    image.save(path)
    return path
