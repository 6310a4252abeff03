"""Variable selection by l1-penalized local linear fits, followed by local
polynomial estimation on the selected coordinates."""

__version__ = "0.1.0"

from .design import (Dataset, LocalizedDesign, ProblemConstants, TruthSpec,
                     build_localized_design, bias_vector, omega01_indicator,
                     psi_matrix)
from .kernels import (KernelSpec, ball_uniform_kernel, gaussian_trunc_kernel,
                      get_kernel, moment_matrix, uniform_kernel,
                      validate_estimation_kernel)
from .lasso import LassoProblem, LassoSolution, brute_force_oracle, check_kkt, solve
from .lpe import LpeConfig, PolyFit, estimate_f, fit_local_polynomial, two_stage_estimate
from .selection import (SelectionConfig, SelectionOutcome, choose_parameters,
                        select, select_plain, select_translated)
from .simulation import (ExperimentSummary, FunctionSpec, GeneratorSpec,
                         compliance_report, generate, run_rate_experiment,
                         run_selection_experiment)
