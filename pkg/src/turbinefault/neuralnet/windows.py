from __future__ import annotations

import numpy as np

from ..dataio import SPLIT_TAGS, LabeledDataset
from ..exceptions import WindowTooLong
from .model import ArchKind


def make_windows(dataset: LabeledDataset, window: int, kind, split: str | None = None):
    """Sliding windows in time order, one split at a time.

    Each split's rows are ordered by ``chronological_index`` and windows
    slide over that sequence, so no window mixes split tags. Feature kinds
    get ``(m, window, 9)`` feature windows labelled with the fault label of
    their last step (``m = n_split - window + 1``). NAR gets ``(m, window)``
    windows of past labels and the label of the step that follows
    (``m = n_split - window``).

    Returns ``{tag: (X, y)}``, or just ``(X, y)`` when ``split`` is given.
    """
    kind = ArchKind(kind)
    if window < 1:
        raise WindowTooLong(f"window must be >= 1, got {window}")
    tags = SPLIT_TAGS if split is None else (split,)
    lag = 1 if kind.uses_labels else 0
    out = {}
    for tag in tags:
        idx = np.flatnonzero(dataset.split_tag == tag)
        idx = idx[np.argsort(dataset.chronological_index[idx], kind="stable")]
        m = len(idx) - window + 1 - lag
        if m <= 0:
            if split is not None:
                raise WindowTooLong(
                    f"{tag} split has {len(idx)} rows, too few for window {window}")
            width = () if kind.uses_labels else (dataset.features.shape[1],)
            out[tag] = (np.empty((0, window) + width), np.empty(0))
            continue
        starts = np.arange(m)[:, None] + np.arange(window)[None, :]
        if kind.uses_labels:
            X = dataset.fault_label[idx][starts].astype(float)
            y = dataset.fault_label[idx][starts[:, -1] + 1].astype(float)
        else:
            X = dataset.features[idx][starts]
            y = dataset.fault_label[idx][starts[:, -1]].astype(float)
        out[tag] = (X, y)
    if split is None and all(len(v[1]) == 0 for v in out.values()):
        raise WindowTooLong(f"no split is long enough for window {window}")
    return out if split is None else out[split]
