"""Distributed function-on-scalar quantile regression.

Per-location check-loss fits, a coupling-Gaussian covariance across the
grid, coefficient-function estimation by interpolation or Gaussian-process
regression, simultaneous bands with SimBaS scores, and a simulation lab.
"""

from .band_estimators import (CurveEstimate, extract_contrast, linear_interpolate,
                              presmooth_dataset, spline_interpolate)
from .bayes_gp import (GpHyper, GpPosterior, credible_band, fit_hyper,
                       marginal_loglik, posterior, se_kernel)
from .coupling_cov import (CouplingCovariance, assemble_sigma, cross_moment,
                           j_inverse, wavelet_smooth)
from .dataset import (Contrast, DataValidationError, FunctionalDataset,
                      SamplingGrid, load_dataset, save_dataset, summarize)
from .inference import (FOLD_THRESHOLD, BandResult, critical_value, flag_locations,
                        simbas, simultaneous_band)
from .qr_pointwise import (PointwiseFit, SolverConfig, SolverError, al_posterior_cov,
                           check_loss, fit_all_locations, fit_location, psi)
from .simlab import (SimScenario, StudyReport, TruthFunctions, binary_scenario,
                     continuous_scenario, gen_binary, gen_continuous, metrics,
                     run_study, true_quantile_curve)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
