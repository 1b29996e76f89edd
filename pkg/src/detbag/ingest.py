"""Dataset I/O: COCO-subset annotation JSON and binary PPM (P6) images.

Only the fields listed on the record types are read; unknown JSON fields
are ignored. PPM is the single native raster format; convert other corpora
with any standard tool (e.g. ImageMagick's `convert img.jpg img.ppm`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from detbag.geometry import Box


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class AnnotationRec:
    id: int
    image_id: int
    bbox: tuple[float, float, float, float]  # x, y, w, h
    category_id: int

    def to_box(self) -> Box:
        x, y, w, h = self.bbox
        return Box(x, y, x + w, y + h)


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class DatasetIndex:
    images: tuple[ImageInfo, ...]
    annotations: tuple[AnnotationRec, ...]
    categories: tuple[Category, ...]

    def image_by_id(self, image_id: int) -> ImageInfo:
        return {im.id: im for im in self.images}[image_id]

    def boxes_for_image(self, image_id: int) -> list[tuple[Box, int]]:
        return [(a.to_box(), a.category_id) for a in self.annotations
                if a.image_id == image_id]

    def truths_by_image(self) -> dict[int, list[tuple[Box, int]]]:
        """Per-image labeled boxes for every image, including empty ones."""
        out: dict[int, list[tuple[Box, int]]] = {im.id: [] for im in self.images}
        for a in self.annotations:
            out[a.image_id].append((a.to_box(), a.category_id))
        return out

    def to_dict(self) -> dict:
        return {
            "images": [{"id": im.id, "file_name": im.file_name,
                        "width": im.width, "height": im.height}
                       for im in self.images],
            "annotations": [{"id": a.id, "image_id": a.image_id,
                             "bbox": list(a.bbox), "category_id": a.category_id}
                            for a in self.annotations],
            "categories": [{"id": c.id, "name": c.name} for c in self.categories],
        }


def _field(record: dict, key: str, what: str):
    if key not in record:
        raise ValueError(f"{what} is missing field {key!r}: {record}")
    return record[key]


def load_annotations(path) -> DatasetIndex:
    """Parse a COCO-subset annotation file and verify referential integrity.

    Raises ValueError naming the offending record on malformed structure,
    dangling ids, or negative sizes.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON: {exc}") from exc
    return parse_annotations(data)


def parse_annotations(data: dict) -> DatasetIndex:
    for key in ("images", "annotations", "categories"):
        if not isinstance(data.get(key), list):
            raise ValueError(f"annotation JSON needs a top-level {key!r} array")

    images = []
    for rec in data["images"]:
        im = ImageInfo(int(_field(rec, "id", "image")),
                       str(_field(rec, "file_name", "image")),
                       int(_field(rec, "width", "image")),
                       int(_field(rec, "height", "image")))
        if im.width <= 0 or im.height <= 0:
            raise ValueError(f"image {im.id} has non-positive size "
                             f"{im.width}x{im.height}")
        images.append(im)
    categories = [Category(int(_field(rec, "id", "category")),
                           str(_field(rec, "name", "category")))
                  for rec in data["categories"]]
    image_ids = {im.id for im in images}
    category_ids = {c.id for c in categories}

    annotations = []
    for rec in data["annotations"]:
        ann_id = int(_field(rec, "id", "annotation"))
        bbox = _field(rec, "bbox", "annotation")
        if len(bbox) != 4:
            raise ValueError(f"annotation {ann_id} bbox must be [x, y, w, h]: {bbox}")
        ann = AnnotationRec(ann_id, int(_field(rec, "image_id", "annotation")),
                            tuple(float(v) for v in bbox),
                            int(_field(rec, "category_id", "annotation")))
        if ann.image_id not in image_ids:
            raise ValueError(
                f"annotation {ann.id} references missing image {ann.image_id}")
        if ann.category_id not in category_ids:
            raise ValueError(
                f"annotation {ann.id} references missing category {ann.category_id}")
        if ann.bbox[2] < 0 or ann.bbox[3] < 0:
            raise ValueError(f"annotation {ann.id} has negative bbox size: {ann.bbox}")
        annotations.append(ann)
    return DatasetIndex(tuple(images), tuple(annotations), tuple(categories))


def save_annotations(index: DatasetIndex, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(index.to_dict(), fh, indent=1)


def load_image(path) -> np.ndarray:
    """Read a binary PPM (P6) into an (H, W, 3) float array in [0, 1]."""
    raw = Path(path).read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(raw):
            if raw[pos:pos + 1].isspace():
                pos += 1
            elif raw[pos:pos + 1] == b"#":
                while pos < len(raw) and raw[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        return raw[start:pos]

    magic = token()
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {magic!r}, expected P6)")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise ValueError(f"{path}: bad PPM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: non-positive dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 8-bit)")
    pos += 1  # single whitespace byte after maxval
    payload = raw[pos:pos + width * height * 3]
    if len(payload) != width * height * 3:
        raise ValueError(f"{path}: truncated pixel payload "
                         f"({len(payload)} of {width * height * 3} bytes)")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(float) / maxval


def save_image(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) float array in [0, 1] as binary PPM, maxval 255."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3): {img.shape}")
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
