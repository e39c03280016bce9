"""
Ensembling of probabilistic draws and forecast metrics.
"""
from .ensemble import (ConcentrationCheck, check_concentration_bound, concentration_bound, group_sizes,
                       mean_ensemble, mom, mom_grid, single_draw)
from .metrics import (EvalReport, crps, crps_grid, crps_sum, evaluate_samples, mae, mse, normalized_crps,
                      sample_variance)

__all__ = ['ConcentrationCheck', 'check_concentration_bound', 'concentration_bound', 'group_sizes',
           'mean_ensemble', 'mom', 'mom_grid', 'single_draw', 'EvalReport', 'crps', 'crps_grid', 'crps_sum',
           'evaluate_samples', 'mae', 'mse', 'normalized_crps', 'sample_variance']
