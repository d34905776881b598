"""scikit-learn style wrapper around the USMO trainer."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset
from .exceptions import InputError
from .initializer import initial_state
from .kernel import KernelSpec
from .solver import Hyperparams, run


class USMOClassifier(ClassifierMixin, BaseEstimator):
    """Positive-unlabeled kernel classifier trained with USMO.

    ``fit(X, s)`` takes PU indicators: ``s == 1`` marks a labeled positive,
    any other value an unlabeled sample. ``predict`` returns labels in
    ``{-1, +1}``.

    Parameters
    ----------
    pi : float
        Class prior of the positive class in the unlabeled pool.
    lam : float
        Regularization weight.
    tau : float
        Optimality tolerance.
    kernel : {"gaussian", "linear"}
    scale : float
        Gaussian kernel width.
    init : {"ranked", "uniform"}
    max_full_scans : int
    cache_rows : int or None
        Pin the kernel row cache size; None sizes it from the non-bound set.
    """

    def __init__(self, pi=0.5, lam=0.01, tau=1e-3, kernel="gaussian", scale=1.0,
                 init="ranked", max_full_scans=1000, cache_rows=None):
        self.pi = pi
        self.lam = lam
        self.tau = tau
        self.kernel = kernel
        self.scale = scale
        self.init = init
        self.max_full_scans = max_full_scans
        self.cache_rows = cache_rows

    def _hyperparams(self):
        kernel = KernelSpec.linear() if self.kernel == "linear" else KernelSpec(self.kernel, float(self.scale))
        return Hyperparams(pi=float(self.pi), lam=float(self.lam), tau=float(self.tau), kernel=kernel,
                           max_full_scans=int(self.max_full_scans), cache_rows=self.cache_rows)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64, y_numeric=True)
        h = self._hyperparams()
        labeled = y == 1
        if not labeled.any():
            raise InputError("no labeled positives (s == 1) in the training data")
        if labeled.all():
            raise InputError("no unlabeled samples in the training data")
        ds = Dataset(X[labeled], X[~labeled])
        self.model_, self.trace_ = run(ds, h, initial_state(ds, h, mode=self.init))
        self.classes_ = np.array([-1, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.model_.decision_function(X)

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0.0, 1, -1)
