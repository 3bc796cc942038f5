from cpsample_lab.libdiffusion.process import (
    corrupt,
    ddim_step,
    ddim_update,
    ddpm_step,
    ddpm_update,
    forward_sample,
    score_matching_graph,
    score_matching_loss,
)
from cpsample_lab.libdiffusion.schedule import (
    NoiseSchedule,
    build_schedule,
    ddim_timesteps,
    linear_schedule,
)

__all__ = [
    "NoiseSchedule",
    "build_schedule",
    "corrupt",
    "ddim_step",
    "ddim_timesteps",
    "ddim_update",
    "ddpm_step",
    "ddpm_update",
    "forward_sample",
    "linear_schedule",
    "score_matching_graph",
    "score_matching_loss",
]
