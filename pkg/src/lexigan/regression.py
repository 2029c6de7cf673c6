"""Multinomial and binary logistic regression with AIC, fitted from scratch.

The solver is deterministic full-batch gradient descent with a
backtracking (Armijo) line search, run until the gradient max-norm
drops below 1e-8 or 1e5 iterations pass. Categorical predictors use
treatment coding: an intercept plus one dummy column per non-reference
level, so the parameter count k is (K-1)*M for K outcome classes and M
design columns, and AIC = 2k - 2*logL exactly.

On completely separated data the likelihood has no finite maximizer;
the fit is returned with converged=False and a diverging-coefficient
note once every observation is classified correctly and coefficients
keep growing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

GRAD_TOL = 1e-8
MAX_ITER = 100_000
_DIVERGE_COEF = 30.0


@dataclass
class RegressionFit:
    kind: str                 # "multinomial" | "binary"
    coef: np.ndarray          # multinomial: [K-1, M]; binary: [M]
    log_likelihood: float
    k: int
    aic: float
    converged: bool
    iterations: int
    note: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "coef": self.coef.tolist(),
            "log_likelihood": self.log_likelihood,
            "k": self.k,
            "aic": self.aic,
            "converged": self.converged,
            "iterations": self.iterations,
            "note": self.note,
        })


def _design_from_levels(levels: np.ndarray) -> np.ndarray:
    """Intercept plus treatment-coded dummies for levels 1..M-1."""
    levels = np.asarray(levels, dtype=np.int64)
    m = int(levels.max()) + 1 if levels.size else 1
    X = np.zeros((levels.shape[0], m))
    X[:, 0] = 1.0
    for lv in range(1, m):
        X[:, lv] = levels == lv
    return X


def _descend(nll_grad, w0: np.ndarray):
    """Gradient descent with backtracking line search on a flat parameter vector."""
    w = w0.copy()
    nll, grad = nll_grad(w)
    step = 1.0
    iters = 0
    note = ""
    converged = False
    while iters < MAX_ITER:
        gmax = np.abs(grad).max() if grad.size else 0.0
        if gmax < GRAD_TOL:
            converged = True
            break
        if np.abs(w).max() > _DIVERGE_COEF and _all_correct(nll_grad, w):
            note = "complete separation suspected: coefficients diverging"
            break
        gnorm2 = float(grad @ grad)
        step = min(step * 2.0, 1e6)
        while True:
            w_new = w - step * grad
            nll_new, grad_new = nll_grad(w_new)
            if nll_new <= nll - 1e-4 * step * gnorm2 or step < 1e-18:
                break
            step *= 0.5
        w, nll, grad = w_new, nll_new, grad_new
        iters += 1
    return w, -nll, converged, iters, note


def _all_correct(nll_grad, w) -> bool:
    return getattr(nll_grad, "accuracy", lambda w: 0.0)(w) >= 1.0


def fit_multinomial(outcomes, predictor_levels=None) -> RegressionFit:
    """Softmax regression of class labels on a categorical predictor.

    `predictor_levels=None` fits the empty (intercept-only) model. Class 0
    is the reference: its coefficient row is fixed at zero.
    """
    y = np.asarray(outcomes, dtype=np.int64)
    if y.size == 0:
        raise ValidationError("fit_multinomial: no outcomes")
    K = int(y.max()) + 1
    if K < 2:
        raise ValidationError("fit_multinomial: need >= 2 outcome classes")
    if predictor_levels is None:
        X = np.ones((y.shape[0], 1))
    else:
        X = _design_from_levels(predictor_levels)
    n, M = X.shape
    onehot = np.zeros((n, K))
    onehot[np.arange(n), y] = 1.0

    def nll_grad(wflat):
        B = wflat.reshape(K - 1, M)
        logits = np.concatenate([np.zeros((n, 1)), X @ B.T], axis=1)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        nll = -float((onehot * logp).sum())
        p = np.exp(logp)
        gB = (p - onehot)[:, 1:].T @ X
        return nll, gB.reshape(-1)

    def accuracy(wflat):
        B = wflat.reshape(K - 1, M)
        logits = np.concatenate([np.zeros((n, 1)), X @ B.T], axis=1)
        return float(np.mean(np.argmax(logits, axis=1) == y))

    nll_grad.accuracy = accuracy
    w, logL, converged, iters, note = _descend(nll_grad, np.zeros((K - 1) * M))
    k = (K - 1) * M
    return RegressionFit(kind="multinomial", coef=w.reshape(K - 1, M),
                         log_likelihood=logL, k=k, aic=2 * k - 2 * logL,
                         converged=converged, iterations=iters, note=note)


def fit_binary(outcomes, predictors=None) -> RegressionFit:
    """Logistic regression of a {0,1} outcome on a feature matrix (plus intercept)."""
    y = np.asarray(outcomes, dtype=np.float64)
    if y.size == 0:
        raise ValidationError("fit_binary: no outcomes")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("fit_binary: outcomes must be binary {0,1}")
    n = y.shape[0]
    if predictors is None:
        X = np.ones((n, 1))
    else:
        P = np.asarray(predictors, dtype=np.float64)
        if P.ndim == 1:
            P = P[:, None]
        X = np.concatenate([np.ones((n, 1)), P], axis=1)
    M = X.shape[1]

    def nll_grad(w):
        l = X @ w
        # softplus(l) - l*y summed, stabilized
        nll = float(np.sum(np.maximum(l, 0) - l * y + np.log1p(np.exp(-np.abs(l)))))
        p = np.empty_like(l)
        pos = l >= 0
        p[pos] = 1.0 / (1.0 + np.exp(-l[pos]))
        e = np.exp(l[~pos])
        p[~pos] = e / (1.0 + e)
        return nll, X.T @ (p - y)

    def accuracy(w):
        return float(np.mean(((X @ w) > 0) == (y > 0.5)))

    nll_grad.accuracy = accuracy
    w, logL, converged, iters, note = _descend(nll_grad, np.zeros(M))
    return RegressionFit(kind="binary", coef=w, log_likelihood=logL, k=M,
                         aic=2 * M - 2 * logL, converged=converged,
                         iterations=iters, note=note)
