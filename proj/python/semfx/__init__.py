"""Semiparametric GLM fits with marginal and quantile effects."""

import json

import numpy as np

from ._core import SemfxError, default_tau_grid, preset_names, run_cli
from . import _core

__all__ = ["SemfxError", "default_tau_grid", "effects", "fit", "preset_names", "run_cli", "simulate"]


def _prepare(x, y, names, support, discrete, knots, quad_nodes, tol, max_iter):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).ravel()
    opts = _core.Options()
    opts.support = None if support is None else (float(support[0]), float(support[1]))
    opts.discrete = bool(discrete)
    opts.knots = int(knots)
    opts.quad_nodes = int(quad_nodes)
    opts.tol = float(tol)
    opts.max_iter = int(max_iter)
    return x, y, list(names or []), opts


def fit(x, y, names=None, *, support=None, discrete=False, knots=-1, quad_nodes=-1, tol=1e-6, max_iter=200):
    """Fit the model; returns coefficients with standard errors, carrier coefficients and fit statistics."""
    return _core.fit(*_prepare(x, y, names, support, discrete, knots, quad_nodes, tol, max_iter))


def effects(x, y, names=None, tau=None, *, support=None, discrete=False, knots=-1, quad_nodes=-1,
            tol=1e-6, max_iter=200):
    """Marginal effects and, for continuous responses, quantile effects at each tau."""
    args = _prepare(x, y, names, support, discrete, knots, quad_nodes, tol, max_iter)
    return _core.effects(*args, tau=None if tau is None else [float(t) for t in np.atleast_1d(tau)])


def simulate(scenario, replicates=None, n=None, seed=None, tau=None, methods=("aMLE", "MLE"),
             workers=0, keep_estimates=False):
    """Run a Monte Carlo scenario (preset name or JSON file) and return the parsed report."""
    text = _core.simulate(scenario, replicates, n, seed, None if tau is None else list(tau), list(methods),
                          workers, keep_estimates)
    return json.loads(text)
