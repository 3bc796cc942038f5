"""Sampler base class for cpsample_lab. Unguided, CPSample and guided samplers inherit this.

The base class owns the reverse-time loop; subclasses only decide what noise prediction to use at
each visited step by overriding `eps_hat`. Every sample has its own counter-based random stream
keyed by (seed, sample index), and samples are processed in fixed-size chunks, so the output
does not depend on how many threads run the chunks.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import petl as etl
import tqdm

from cpsample_lab.common import GuidanceException, NonFiniteException
from cpsample_lab.libdiffusion import ddim_timesteps, ddim_update, ddpm_update
from cpsample_lab.libtensor import Tensor, as_array

log = logging.getLogger(__name__)

TRACE_HEADER = ("sample_id", "step", "t", "p1", "triggered")


@dataclass(frozen=True)
class GuidanceConfig:
    alpha: float = 0.1
    scale: float = 1.0
    tau: float = 0.001
    stride: int = 1
    record_trace: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if self.scale < 0:
            raise ValueError(f"guidance scale must be >= 0, got {self.scale}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass
class SampleRun:
    samples: Tensor
    seed: int
    sampler: str
    steps: list
    trigger_counts: np.ndarray
    # rows of TRACE_HEADER, only when cfg.record_trace
    trace: list = field(default=None)

    def trace_table(self):
        if self.trace is None:
            raise ValueError("no trace was recorded for this run (set record_trace)")
        return etl.wrap([TRACE_HEADER, *self.trace])

    def write_trace(self, path):
        etl.tocsv(self.trace_table(), path)

    def trace_of(self, sample_id):
        """p1 over the visited steps for one sample."""
        return [row[3] for row in self.trace if row[0] == sample_id]

    @property
    def trigger_rate(self):
        total = len(self.samples) * len(self.steps)
        return float(self.trigger_counts.sum()) / total if total else 0.0


def sample_rng(*key):
    """Philox stream keyed by (seed, sample index[, attempt])."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


class Sampler:
    SAMPLER_NAME = "NOT SET"
    CHUNK_SIZE = 64

    def __init__(self, denoiser, schedule, cfg=None, classifier=None, threads=1, progress=False):
        self.denoiser = denoiser
        self.schedule = schedule
        self.cfg = cfg or GuidanceConfig()
        self.classifier = classifier
        self.threads = max(1, int(threads))
        self.progress = progress
        self.ancestral = False
        self.custom_init()

    def custom_init(self):
        """For overriding"""
        pass

    def eps_hat(self, x, t):
        """Noise prediction for a chunk at timestep t. Returns (eps, p1, triggered).

        p1 and triggered are per-row arrays, or None when the sampler has no classifier.
        """
        raise NotImplementedError("eps_hat() must be implemented by a subclass")

    def timesteps(self):
        return ddim_timesteps(self.schedule.T, 1 if self.ancestral else self.cfg.stride)

    def generate(self, n, seed, dim=None):
        if n < 1:
            raise ValueError(f"need at least one sample, got n={n}")
        return self.run([(seed, i) for i in range(n)], seed, dim)

    def run(self, keys, seed, dim=None):
        """Sample one trajectory per key. The second key element is the reported sample id."""
        dim = dim or getattr(self.denoiser, "data_dim", None)
        if dim is None:
            raise ValueError("sample dimension is unknown; pass dim")
        steps = self.timesteps()
        chunks = [keys[i : i + self.CHUNK_SIZE] for i in range(0, len(keys), self.CHUNK_SIZE)]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            jobs = pool.map(lambda chunk: self._run_chunk(chunk, dim, steps), chunks)
            results = list(
                tqdm.tqdm(
                    jobs,
                    total=len(chunks),
                    desc=f"sample {self.SAMPLER_NAME}",
                    disable=not self.progress,
                    leave=False,
                )
            )

        samples = np.concatenate([r[0] for r in results])
        counts = np.sum([r[1] for r in results], axis=0)
        trace = [row for r in results for row in r[2]] if self.cfg.record_trace else None
        run = SampleRun(Tensor(samples), seed, self.SAMPLER_NAME, steps, counts, trace)
        log.info(
            "%s: %d samples, %d steps, trigger rate %.3f",
            self.SAMPLER_NAME,
            len(samples),
            len(steps),
            run.trigger_rate,
        )
        return run

    def _run_chunk(self, keys, dim, steps):
        ids = [k[1] for k in keys]
        rngs = [sample_rng(*k) for k in keys]
        x = np.stack([r.standard_normal(dim) for r in rngs])
        counts = np.zeros(len(steps), dtype=np.int64)
        trace = []
        ab = self.schedule.alpha_bar
        for step, (t, t_prev) in enumerate(steps):
            try:
                eps, p1, triggered = self.eps_hat(x, t)
            except GuidanceException as e:
                row = ids[e.sample_index] if e.sample_index is not None else None
                message = f"{e} (sample {row}, step {step}, t={t})"
                raise GuidanceException(message, row, step) from e
            if triggered is not None:
                counts[step] = int(np.sum(triggered))
            if self.cfg.record_trace and p1 is not None:
                flags = triggered if triggered is not None else np.zeros(len(ids), dtype=bool)
                trace.extend(
                    (i, step, t, float(p), int(f)) for i, p, f in zip(ids, p1, flags)
                )
            if self.ancestral:
                if t > 1:
                    z = np.stack([r.standard_normal(dim) for r in rngs])
                else:
                    z = np.zeros_like(x)
                x = ddpm_update(eps, x, t, z, self.schedule)
            else:
                x = ddim_update(eps, x, ab[t], ab[t_prev])
        if not np.all(np.isfinite(x)):
            raise NonFiniteException(f"{self.SAMPLER_NAME}: non-finite sample in chunk {ids[0]}..")
        return x, counts, trace


def check_rows(x):
    x = as_array(x)
    if x.ndim != 2:
        raise ValueError(f"expected an [n, d] batch, got shape {list(x.shape)}")
    return x
