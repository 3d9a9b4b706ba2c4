"""scikit-learn style front end.

The matchings behave like clusterers: ``fit(X, degrees)`` builds the graph,
``labels_`` holds connected-component ids, and ``fit_predict`` returns them.

>>> import numpy as np
>>> X = np.array([[0.0], [1.0], [3.0]])
>>> StableMultiMatching(side=4.0, periodic=False).fit(X, [2, 2, 2]).edges_.tolist()
[[0, 1], [1, 2], [0, 2]]
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .analysis import components
from .errors import ContractError
from .geometry import BoxSpec, PointSet
from .matching import ForbiddenPairs, stable_multi_match, stable_multi_match_rounds
from .process import MarkedPointSet
from .schemes import connectivity_scheme, finite_component_scheme, infinite_path_scheme


def check_points(X, side=None, periodic=True) -> PointSet:
    """Validate a coordinate array and wrap it in a :class:`PointSet`.

    Without ``side`` the box is the smallest one starting at the origin that
    contains ``X``. Periodic boxes reduce coordinates modulo ``side``.
    """
    X = check_array(X, dtype=np.float64, ensure_min_samples=0, ensure_2d=True)
    d = X.shape[1]
    if side is None:
        if periodic:
            raise ContractError("a periodic box needs an explicit side")
        side = float(np.nextafter(X.max(), np.inf)) if X.size else 1.0
        side = max(side, np.finfo(float).tiny)
    box = BoxSpec(d, side, periodic)
    if periodic:
        X = np.mod(X, side)
        X[X >= side] = 0.0
    return PointSet(box, X)


def check_degrees(degrees, n_samples: int) -> np.ndarray:
    if degrees is None:
        return np.ones(n_samples, dtype=np.int64)
    deg = np.asarray(degrees)
    if deg.ndim == 0:
        return np.full(n_samples, int(deg), dtype=np.int64)
    deg = column_or_1d(deg)
    if deg.shape[0] != n_samples:
        raise ValueError(f"got {deg.shape[0]} degrees for {n_samples} samples")
    if not np.all(np.equal(np.mod(deg, 1), 0)):
        raise ValueError("degrees must be integers")
    return deg.astype(np.int64)


class _GraphMatching(ClusterMixin, BaseEstimator):
    def _match(self, marked):
        raise NotImplementedError

    def _marked(self, X, degrees):
        pts = check_points(X, self.side, self.periodic)
        return MarkedPointSet(pts, check_degrees(degrees, len(pts)))

    def fit(self, X, degrees=None):
        """Match the stubs of the points in ``X``.

        ``degrees`` gives the stub count per row (a scalar applies to all
        rows; ``None`` means one stub each).
        """
        marked = self._marked(X, degrees)
        result = self._match(marked)
        self.result_ = result
        self.matching_ = result.matching
        self.edges_ = np.stack([result.matching.i, result.matching.j], axis=1)
        self.edge_lengths_ = result.matching.length
        self.leftover_stubs_ = result.leftover_stubs
        report = components(len(marked), result.matching)
        self.labels_ = report.component_of
        self.n_components_ = report.component_count
        self.n_features_in_ = marked.box.dimension
        return self

    def fit_predict(self, X, degrees=None):
        return self.fit(X, degrees).labels_

    def leftover_fraction(self) -> float:
        check_is_fitted(self, "result_")
        return self.result_.leftover_fraction


class StableMultiMatching(_GraphMatching):
    """Stable multi-matching by the heap kernel, or by rounds with ``method="rounds"``.

    ``forbidden`` is an iterable of index pairs that may not be linked.
    """

    def __init__(self, side=None, periodic=True, forbidden=None, method="greedy"):
        self.side = side
        self.periodic = periodic
        self.forbidden = forbidden
        self.method = method

    def _match(self, marked):
        forbidden = ForbiddenPairs(self.forbidden) if self.forbidden is not None else None
        if self.method == "greedy":
            return stable_multi_match(marked, forbidden)
        if self.method == "rounds":
            return stable_multi_match_rounds(marked, forbidden)
        raise ValueError(f"unknown method {self.method!r}")


class FiniteComponentMatching(_GraphMatching):
    """Complete graphs on groups of ``n + 1`` points of each degree ``n``."""

    def __init__(self, side=None, periodic=True):
        self.side = side
        self.periodic = periodic

    def _match(self, marked):
        return finite_component_scheme(marked)


class InfinitePathMatching(_GraphMatching):
    """Cone-forest paths through degree >= 2 points plus stable matching of the rest."""

    def __init__(self, side=None, periodic=False):
        self.side = side
        self.periodic = periodic

    def _match(self, marked):
        return infinite_path_scheme(marked)


class ConnectivityMatching(_GraphMatching):
    """Path scheme with degree-1 points hung on spare stubs; needs mean degree >= 2."""

    def __init__(self, side=None, periodic=False):
        self.side = side
        self.periodic = periodic

    def _match(self, marked):
        return connectivity_scheme(marked)
