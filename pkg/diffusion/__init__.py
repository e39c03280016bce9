"""
Noise schedules and forward/reverse diffusion processes.
"""
from .schedule import (NoiseSchedule, build_cosine, build_linear, build_quadratic, build_schedule,
                       posterior_coeffs, transition_coeffs)
from .sampler import (ForecastSamples, forward_corrupt, forward_corrupt_batch, reverse_step, strided_step,
                      select_steps, sample, sample_batch, sample_windows, run_chains)

__all__ = ['NoiseSchedule', 'build_cosine', 'build_linear', 'build_quadratic', 'build_schedule',
           'posterior_coeffs', 'transition_coeffs', 'ForecastSamples', 'forward_corrupt',
           'forward_corrupt_batch', 'reverse_step', 'strided_step', 'select_steps', 'sample',
           'sample_batch', 'sample_windows', 'run_chains']
