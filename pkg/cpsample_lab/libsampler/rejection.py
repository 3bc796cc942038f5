"""Rejection-sampling baseline: redraw unguided samples until they leave every delta-ball."""

import logging

import numpy as np

from cpsample_lab.common import MaxTriesExhaustedException
from cpsample_lab.libaudit import nearest_distance
from cpsample_lab.libsampler import ddim
from cpsample_lab.libtensor import Tensor, as_array

log = logging.getLogger(__name__)


def rejection_sample(
    denoiser,
    schedule,
    train,
    delta,
    metric="l2",
    max_tries=100,
    n=1,
    seed=0,
    cfg=None,
    feature_fn=None,
    **kwargs,
):
    """Returns (samples, tries_used) where tries_used counts every candidate drawn.

    Slot i's first candidate is the unguided DDIM sample i for `seed`; later attempts use the
    stream (seed, i, attempt). A candidate is rejected when its nearest training point is
    within `delta` under `metric` ('l2', or 'cosine' distance in feature space).
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if max_tries < 1 or n < 1:
        raise ValueError("max_tries and n must be >= 1")
    train = np.asarray(as_array(train))
    sampler = ddim.Sampler(denoiser, schedule, cfg, **kwargs)
    accepted = {}
    pending = list(range(n))
    tries_used = 0
    for attempt in range(max_tries):
        if not pending:
            break
        keys = [(seed, i) if attempt == 0 else (seed, i, attempt) for i in pending]
        candidates = sampler.run(keys, seed, train.shape[1]).samples.data
        far = nearest_distance(candidates, train, metric, feature_fn) > delta
        tries_used += len(pending)
        for slot, row, ok in zip(pending, candidates, far):
            if ok:
                accepted[slot] = row
        pending = [i for i in pending if i not in accepted]
        log.debug("rejection attempt %d: %d slots still pending", attempt, len(pending))

    done = sorted(accepted)
    partial = np.array([accepted[i] for i in done]).reshape(len(done), train.shape[1])
    if pending:
        raise MaxTriesExhaustedException(
            f"{len(pending)} of {n} slots still inside the delta-ball after {max_tries} tries",
            Tensor(partial),
            tries_used,
        )
    log.info("rejection sampling: acceptance rate %.3f (%d tries)", n / tries_used, tries_used)
    return Tensor(partial), tries_used
