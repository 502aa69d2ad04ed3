"""Numerical laboratory for the mixed fractional Brownian motion model.

Exact simulation of sigma*B^H + sqrt(eps)*B, the frequency-domain information
matrix and boundary-value functions, the weakly singular integral equation of
the innovation representation, likelihood backends with LAN diagnostics, and
the rate-optimal wavelet energy estimators of (H, sigma^2).
"""

from .model import (Theta, SamplePath, a_constant, kernel_K, spectral_density,
                    fbm_covariance, fgn_autocovariance, mixed_covariance_matrix,
                    simulate_mixed_fbm, simulate_mixed_family, replicate_seed)
from .spectral import (QuadConfig, FisherMatrix, RateSchedule, grad_log_spectrum,
                       fisher_information, lambda_plus, lambda_z, alpha,
                       x_canonical, h_function, rate_schedule, log_shear,
                       small_noise_m, nu_matrix)
from .fredholm import (GridSolution, PQSolution, solve_g, laplace_g, scaling_check,
                       pde_identity_check, AuxOperator, operator_A_apply, solve_pq,
                       contraction_factor, probe_t_min)
from .likelihood import (LogLikResult, MleResult, innovation_rho, loglik_innovation,
                         discrete_fisher_information,
                         loglik_discrete_exact, mle, empirical_information,
                         lan_experiment)
from .wavelets import (Wavelet, EstimateReport, daubechies2, c_constant, noisy_coeff,
                       energy_level, estimate_H_level, select_level, estimate_joint,
                       estimate_single)
from .config import ExperimentConfig, load_config
from .experiments import RateFit, fit_rate, run_experiment

__version__ = "0.1.0"
