"""scikit-learn style facade so the operator composes with the wider ecosystem.

X rows are flattened input fields, y rows are flattened solutions (time-major,
matching the dataset payload layout)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .grids import Grid
from .model import SingularNetConfig, SvdNeuralOperator, SvdNoConfig
from .training import fit_model, target_matrix

__all__ = ["SvdNoRegressor"]


class SvdNoRegressor(BaseEstimator, RegressorMixin):
    """Operator-learning regressor with a learnable truncated-SVD kernel.

    Parameters mirror the model and training configuration; `grid=None` infers
    a 1D unit grid from the number of input columns.
    """

    def __init__(self, rank=4, lifting_dim=16, blocks=4, net_kind="sine_mlp",
                 net_layers=3, hidden_dim=64, kernel_kind="svd", shared_basis=True,
                 basis_dim=None, epochs=50, batch_size=16, lr=1e-3,
                 ortho_weight=1.0, validation_fraction=0.1, random_state=0,
                 grid=None):
        self.rank = rank
        self.lifting_dim = lifting_dim
        self.blocks = blocks
        self.net_kind = net_kind
        self.net_layers = net_layers
        self.hidden_dim = hidden_dim
        self.kernel_kind = kernel_kind
        self.shared_basis = shared_basis
        self.basis_dim = basis_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.ortho_weight = ortho_weight
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.grid = grid

    def _model_config(self):
        return SvdNoConfig(
            rank=self.rank, lifting_dim=self.lifting_dim, blocks=self.blocks,
            singular_net=SingularNetConfig(kind=self.net_kind,
                                           num_layers=self.net_layers,
                                           hidden_dim=self.hidden_dim),
            kernel_kind=self.kernel_kind, shared_basis=self.shared_basis,
            basis_dim=self.basis_dim)

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        grid = self.grid if self.grid is not None else Grid((X.shape[1],))
        n = grid.num_points
        if X.shape[1] % n != 0 or y.shape[1] % n != 0:
            raise ValueError(f"X ({X.shape[1]}) and y ({y.shape[1]}) columns must be "
                             f"multiples of the {n} grid points")
        d_a = X.shape[1] // n
        out_channels = y.shape[1] // n
        self.model_ = SvdNeuralOperator(self._model_config(), grid, d_a=d_a,
                                        out_channels=out_channels,
                                        seed=self.random_state)
        pairs = [(X[i], target_matrix(y[i].reshape(out_channels, n), n))
                 for i in range(X.shape[0])]
        rng = np.random.default_rng(self.random_state)
        order = rng.permutation(len(pairs))
        n_val = max(1, int(round(self.validation_fraction * len(pairs))))
        if len(pairs) > 1:
            val_idx, train_idx = order[:n_val], order[n_val:]
        else:
            val_idx = train_idx = order
        result = fit_model(self.model_,
                           [pairs[i] for i in train_idx],
                           [pairs[i] for i in val_idx],
                           self.epochs, batch_size=self.batch_size, lr=self.lr,
                           ortho_weight=self.ortho_weight, seed=self.random_state)
        self.model_.load_state_dict(result.best_state)
        self.history_ = result.metrics
        self.n_features_in_ = X.shape[1]
        self.grid_ = grid
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        preds = []
        for row in X:
            u_hat = self.model_.predict(row)       # (n, out_channels)
            preds.append(u_hat.T.reshape(-1))      # back to time-major flattening
        return np.stack(preds)
