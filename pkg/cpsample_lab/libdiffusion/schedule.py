"""Noise schedules for the forward and reverse diffusion processes."""

import logging
from dataclasses import dataclass

import numpy as np

from cpsample_lab.common import ScheduleException

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step quantities, stored with a t=0 slot so arrays index directly by t.

    beta[0] = 0, alpha[0] = 1, alpha_bar[0] = 1 (clean data), sigma[0] = sigma[1] = 0.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        b = self.beta[1:]
        if len(self.beta) != self.T + 1:
            raise ScheduleException("beta must have T+1 entries (slot 0 is t=0)")
        if not (np.all(b > 0) and np.all(b < 1) and np.all(np.diff(b) >= 0)):
            raise ScheduleException("need 0 < beta_1 <= ... <= beta_T < 1")
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise ScheduleException("alpha_bar must be strictly decreasing")

    def check_t(self, t, lowest=1):
        if not lowest <= t <= self.T:
            raise ScheduleException(f"t={t} outside [{lowest}, {self.T}]")

    @property
    def terminal_ok(self):
        """x_T is close to a standard normal."""
        return self.alpha_bar[self.T] < 0.01


def build_schedule(betas):
    """Derive all schedule arrays from beta_1..beta_T."""
    betas = np.asarray(betas, dtype=np.float64)
    T = len(betas)
    beta = np.concatenate([[0.0], betas])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.zeros(T + 1)
    sigma[2:] = np.sqrt(beta[2:] * (1.0 - alpha_bar[1:-1]) / (1.0 - alpha_bar[2:]))
    for arr in (beta, alpha, alpha_bar, sigma):
        arr.flags.writeable = False
    schedule = NoiseSchedule(T, beta, alpha, alpha_bar, sigma)
    if not schedule.terminal_ok:
        log.warning(
            "alpha_bar_T = %.4g >= 0.01: x_T is not close to N(0, I) for T=%d", alpha_bar[T], T
        )
    return schedule


def linear_schedule(T=200, beta_min=1e-4, beta_max=0.02):
    if T < 2:
        raise ScheduleException(f"T must be >= 2, got {T}")
    if not 0 < beta_min <= beta_max < 1:
        raise ScheduleException(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    return build_schedule(np.linspace(beta_min, beta_max, T))


def ddim_timesteps(T, stride):
    """(t, t_prev) pairs visited by a strided DDIM pass: T, T-stride, ... then down to 0."""
    if stride < 1:
        raise ScheduleException("stride must be >= 1")
    ts = list(range(T, 0, -stride))
    return list(zip(ts, ts[1:] + [0]))
