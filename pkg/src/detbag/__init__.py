"""detbag: training freebies and post-processing specials for one-stage detectors.

Pure-numpy building blocks: IoU-family box metrics and losses with analytic
gradients, NMS variants, detection-aware augmentation, head decoding, anchor
optimization, training schedules, genetic hyperparameter search, and
COCO-style AP evaluation.
"""

from detbag.geometry import Box, CenterBox, ciou, diou, giou, iou
from detbag.losses import box_loss, label_smooth
from detbag.nms import Detection, diou_nms, greedy_nms, soft_nms

__all__ = ["Box", "CenterBox", "iou", "giou", "diou", "ciou",
           "box_loss", "label_smooth",
           "Detection", "greedy_nms", "soft_nms", "diou_nms"]
