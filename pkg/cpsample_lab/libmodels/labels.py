"""Random binary labels for the memorizing classifier."""

from dataclasses import dataclass

import numpy as np

from cpsample_lab.common import LabelException


@dataclass(frozen=True)
class LabelSet:
    labels: np.ndarray
    seed: int

    def __len__(self):
        return len(self.labels)


def assign_random_labels(n, seed):
    """i.i.d. Bernoulli(0.5) labels, reproducible from seed."""
    if n < 1:
        raise LabelException(f"need at least one item to label, got n={n}")
    labels = np.random.default_rng(seed).integers(0, 2, size=n).astype(np.uint8)
    labels.flags.writeable = False
    return LabelSet(labels, seed)
