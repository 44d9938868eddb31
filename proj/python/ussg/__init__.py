"""Python access to the ussg scene-graph engine."""
import json

from . import _ussg
from ._ussg import (
    UssgError,
    augment_flip,
    canonical_dataset,
    iou,
    lcs_length,
    meteor,
    rouge_l,
    tokenize,
)

__all__ = [
    "UssgError",
    "Scanner",
    "augment_flip",
    "canonical_dataset",
    "cross_section",
    "evaluate",
    "iou",
    "lcs_length",
    "meteor",
    "oracle_guidance",
    "rouge_l",
    "tokenize",
]


def evaluate(pred_text, gt_text):
    return json.loads(_ussg.evaluate(pred_text, gt_text))


def cross_section(z, u, side="left"):
    """Noise-free frame at the pose, as a one-image dataset dict."""
    return json.loads(_ussg.cross_section(z, u, side))


def oracle_guidance(z, u, side, target):
    return json.loads(_ussg.oracle_guidance(z, u, side, target))


class Scanner:
    """In-process scan service; frames and query audits come back as dicts."""

    def __init__(self, config=None):
        self._impl = _ussg._Scanner(json.dumps(config) if config else "")

    def create(self, z=0.5, u=0.0, side="left"):
        return self._impl.create(z, u, side)

    def move(self, session, dz=0.0, du=0.0, toggle_side=False, direction="", steps=1):
        return json.loads(self._impl.move(session, dz, du, toggle_side, direction, steps))

    def frame(self, session):
        return json.loads(self._impl.frame(session))

    def query(self, session, query, task="summarize", allow_unknown_movement=False):
        return json.loads(self._impl.query(session, task, query, allow_unknown_movement))

    def close(self, session):
        return self._impl.close(session)
