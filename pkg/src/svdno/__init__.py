"""Low-rank neural operator with a learnable truncated-SVD kernel, desk-scale
PDE dataset generators, and a training/evaluation harness."""

from .autodiff import Tensor, constant, parameter, finite_difference_check
from .estimator import SvdNoRegressor
from .grids import Grid, make_augmented_coordinates
from .model import (SingularNetConfig, SvdNeuralOperator, SvdNoConfig,
                    apply_dense_kernel, apply_factorized_kernel, apply_mercer_kernel)
from .objectives import (beta_variability, gram_matrix, l_inf_error,
                         mean_l2_relative_error, orthogonality_loss, total_loss,
                         trapezoidal_weights)
from .solvers import PdeSpec
from .data import Dataset, build_dataset, read_dataset, write_dataset
from .training import Adam, RunConfig, evaluate_checkpoint, run_ablation, train

__version__ = "0.1.0"
