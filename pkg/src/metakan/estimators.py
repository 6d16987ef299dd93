"""scikit-learn compatible regressors around :mod:`metakan.network` and :mod:`metakan.train`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .network import KanNetwork, MetaKanNetwork, count_params, make_kind, materialize, model_name
from .train import TrainConfig, train


class _KANBase(RegressorMixin, BaseEstimator):
    def _kind(self):
        return make_kind(self.basis, self.grid_size, self.spline_order, self.n_centers,
                         domain=self.domain)

    def _widths(self, n_in: int, n_out: int) -> tuple[int, ...]:
        return (n_in, *map(int, self.hidden_widths), n_out)

    def _seed(self) -> int:
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        return int(check_random_state(self.random_state).randint(0, 2**31 - 1))

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self._y_1d = y.ndim == 1
        Y = y[:, None] if self._y_1d else y
        self.n_outputs_ = Y.shape[1]
        seed = self._seed()
        self.network_ = self._build(self._widths(X.shape[1], Y.shape[1]), seed)
        _, trace = train(self.network_, X, Y, self._config(seed))
        self.loss_curve_ = np.array([row.loss for row in trace])
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        y = self.network_(X)
        return y[:, 0] if self._y_1d else y

    @property
    def n_params_(self):
        """``ParamCount(formula, exact)`` of the fitted network."""
        check_is_fitted(self, "network_")
        net = self.network_
        return count_params(model_name(net), net.shape, self.grid_size, self.spline_order,
                            net.kind.dim if self.basis == "rbf" else None,
                            getattr(self, "d_hidden", 0), getattr(self, "n_clusters", 1),
                            getattr(self, "prompt_dim", 1))


class KANRegressor(_KANBase):
    """Plain KAN regressor.

    ``hidden_widths`` lists the inner layer widths; input and output widths
    come from the data at ``fit`` time.
    """

    def __init__(self, hidden_widths=(5,), basis="bspline", grid_size=5, spline_order=3,
                 n_centers=None, domain=(-1.0, 1.0), steps=1000, batch_size=256, lr=1e-3,
                 weight_decay=0.0, lr_schedule="constant", random_state=0):
        self.hidden_widths = hidden_widths
        self.basis = basis
        self.grid_size = grid_size
        self.spline_order = spline_order
        self.n_centers = n_centers
        self.domain = domain
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.lr_schedule = lr_schedule
        self.random_state = random_state

    def _build(self, widths, seed):
        return KanNetwork.init(widths, self._kind(), seed=seed)

    def _config(self, seed):
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, seed=seed, lr_kan=self.lr,
                           weight_decay=self.weight_decay, lr_schedule=self.lr_schedule)


class MetaKANRegressor(_KANBase):
    """KAN whose edge weights are generated by per-cluster meta-learners from learnable prompts."""

    def __init__(self, hidden_widths=(5,), basis="bspline", grid_size=5, spline_order=3,
                 n_centers=None, domain=(-1.0, 1.0), d_hidden=32, n_clusters=1, prompt_dim=1,
                 steps=1000, batch_size=256, lr_meta=1e-3, lr_prompts=1e-2, weight_decay=0.0,
                 lr_schedule="constant", random_state=0):
        self.hidden_widths = hidden_widths
        self.basis = basis
        self.grid_size = grid_size
        self.spline_order = spline_order
        self.n_centers = n_centers
        self.domain = domain
        self.d_hidden = d_hidden
        self.n_clusters = n_clusters
        self.prompt_dim = prompt_dim
        self.steps = steps
        self.batch_size = batch_size
        self.lr_meta = lr_meta
        self.lr_prompts = lr_prompts
        self.weight_decay = weight_decay
        self.lr_schedule = lr_schedule
        self.random_state = random_state

    def _build(self, widths, seed):
        return MetaKanNetwork.init(widths, self._kind(), d_hidden=self.d_hidden,
                                   C=self.n_clusters, prompt_dim=self.prompt_dim, seed=seed)

    def _config(self, seed):
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, seed=seed,
                           lr_meta=self.lr_meta, lr_prompts=self.lr_prompts,
                           weight_decay=self.weight_decay, lr_schedule=self.lr_schedule)

    def materialize(self) -> KanNetwork:
        check_is_fitted(self, "network_")
        return materialize(self.network_)
