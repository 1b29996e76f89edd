import json

import numpy as np

from detbag.ingest import save_image


def write_dataset(root, boxes_per_image, image_size=(64, 64), with_images=False,
                  categories=(1,), rng=None):
    """Write a COCO-subset dataset; boxes_per_image is a list (one entry per
    image) of [x, y, w, h] bbox lists. Returns the annotations path."""
    w, h = image_size
    images, annotations = [], []
    ann_id = 1
    for img_id, bboxes in enumerate(boxes_per_image, start=1):
        name = f"img_{img_id:04d}.ppm"
        images.append({"id": img_id, "file_name": name, "width": w, "height": h})
        for i, bbox in enumerate(bboxes):
            annotations.append({"id": ann_id, "image_id": img_id,
                                "bbox": list(bbox),
                                "category_id": categories[i % len(categories)]})
            ann_id += 1
        if with_images:
            gen = rng if rng is not None else np.random.default_rng(img_id)
            save_image(gen.random((h, w, 3)), root / name)
    payload = {"images": images, "annotations": annotations,
               "categories": [{"id": c, "name": f"class{c}"} for c in categories]}
    path = root / "annotations.json"
    path.write_text(json.dumps(payload))
    return path


def write_detections(root, records, name="detections.json"):
    path = root / name
    path.write_text(json.dumps(records))
    return path
