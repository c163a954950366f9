"""targex: targeted harmonic exploration with guaranteed excitation, plus
gain-scheduled state feedback with robust quadratic performance."""

__version__ = "0.1.0"

from .bounds import (BoundConstants, ScenarioConfig, UncertaintySamples,
                     gamma_v1_scenario, gamma_v_lmi, gamma_y_lmi, l1_analytic,
                     l1_scenario, noise_line_radius, scenario_constants,
                     scenario_sample_count)
from .estimation import (Dataset, GaussianPrior, UncertaintyEllipsoid,
                         chi2_critical, credibility_region, map_estimate,
                         posterior_shape, prior_from_data, project_parameters)
from .model import (PerformanceIndex, SystemModel, Trajectory,
                    default_performance_index, empirical_l2_gain,
                    model_from_theta, performance_output, simulate, substream,
                    unvec_theta)
from .spectral import (ExplorationPlan, FrequencyGrid, TransferData,
                       convex_relaxed_bound, excitation_lower_bound,
                       generate_input, information_matrix, line_matrix,
                       spectral_line, transfer_matrices)
from .synthesis import (DualDesign, GainScheduledController, closed_loop_hinf,
                        energy_bound_lmi, exploration_lmi, extract_controller,
                        gain_scheduling_lmi, h_infinity_baseline,
                        solve_dual_problem, solve_exploration_problem)

__all__ = [name for name in dir() if not name.startswith("_")]
