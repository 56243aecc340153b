"""Penalized regression-spline smoothing of net benefit on parameters.

For each treatment the net-benefit column is regressed on the chosen
parameter columns with a cubic B-spline basis (breakpoints at empirical
quantiles, 10 per dimension), additive across dimensions.  For subsets of
up to three parameters, pairwise tensor-product interactions on a reduced
basis are added; larger subsets stay additive.  The roughness penalty is
the exact integrated squared second derivative, whose null space contains
all linear functions, and a single smoothing parameter is chosen by
generalized cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor, cho_solve

from .psa import ParamSubset, PsaSample

__all__ = ["gam_fit", "gam_fit_detail", "MAX_GAM_DIMENSIONS"]

MAX_GAM_DIMENSIONS = 5

_N_BREAKPOINTS = 10
_N_BREAKPOINTS_TENSOR = 5
_DEGREE = 3
# Tiny ridge on tensor-interaction coefficients: their penalty null space
# (bilinear functions) overlaps the main effects, and without it the
# normal equations can be singular.
_TENSOR_RIDGE = 1e-6

_GAUSS_NODES = np.array([-1.0, 1.0]) / math.sqrt(3.0)


def _quantile_breakpoints(x: np.ndarray, n_breakpoints: int) -> np.ndarray:
    bp = np.unique(np.quantile(x, np.linspace(0.0, 1.0, n_breakpoints)))
    if bp.size < 2:
        raise ValueError(
            "parameter column is constant; the spline design is rank-deficient"
        )
    return bp


@dataclass(frozen=True)
class _Basis:
    knots: np.ndarray
    n_funcs: int

    @classmethod
    def from_data(cls, x: np.ndarray, n_breakpoints: int) -> "_Basis":
        bp = _quantile_breakpoints(x, n_breakpoints)
        knots = np.concatenate([[bp[0]] * _DEGREE, bp, [bp[-1]] * _DEGREE])
        return cls(knots=knots, n_funcs=len(knots) - _DEGREE - 1)

    def design(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.knots[_DEGREE], self.knots[-_DEGREE - 1]
        return BSpline.design_matrix(
            np.clip(x, lo, hi), self.knots, _DEGREE
        ).toarray()

    def curvature_penalty(self) -> np.ndarray:
        """Gram matrix of basis second derivatives.

        The second derivative of a cubic B-spline is piecewise linear, so a
        two-point Gauss rule per breakpoint interval integrates the products
        exactly.  Linear functions lie in the null space.
        """
        bp = self.knots[_DEGREE : len(self.knots) - _DEGREE]
        spl2 = BSpline(self.knots, np.eye(self.n_funcs), _DEGREE).derivative(2)
        pen = np.zeros((self.n_funcs, self.n_funcs))
        for a, b in zip(bp[:-1], bp[1:]):
            if b <= a:
                continue
            half = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            nodes = mid + half * _GAUSS_NODES
            vals = spl2(nodes)
            pen += half * (vals.T @ vals)
        return pen


def _normalized(pen: np.ndarray) -> np.ndarray:
    scale = np.trace(pen) / pen.shape[0]
    return pen / scale if scale > 0 else pen


def _sum_to_zero(block: np.ndarray, penalty: np.ndarray):
    """Reparameterize a smooth block so its fitted values sum to zero.

    B-spline bases contain the constant function (partition of unity), so a
    raw block is exactly collinear with the intercept AND that direction is
    penalty-free: the normal equations would be singular at every smoothing
    level.  Projecting the coefficients onto the complement of the
    sum-of-fitted-values direction removes the redundancy while keeping
    (centered) linear functions representable and penalty-free.
    """
    d = block.sum(axis=0)
    q = np.linalg.qr(d[:, None], mode="complete")[0]
    z = q[:, 1:]
    return block @ z, z.T @ penalty @ z


def _build_design(phi: np.ndarray, interactions: bool):
    """Design matrix and matching block-diagonal penalty.

    Column 0 is the intercept; every smooth block is constrained to
    zero-sum fitted values so the constant lives only in the intercept.
    """
    n_rows, n_dims = phi.shape
    columns = [np.ones((n_rows, 1))]
    penalties = [np.zeros((1, 1))]

    for d in range(n_dims):
        basis = _Basis.from_data(phi[:, d], _N_BREAKPOINTS)
        block, pen = _sum_to_zero(
            basis.design(phi[:, d]), _normalized(basis.curvature_penalty())
        )
        columns.append(block)
        penalties.append(pen)

    if interactions and n_dims >= 2:
        for i in range(n_dims):
            for j in range(i + 1, n_dims):
                bi = _Basis.from_data(phi[:, i], _N_BREAKPOINTS_TENSOR)
                bj = _Basis.from_data(phi[:, j], _N_BREAKPOINTS_TENSOR)
                left = bi.design(phi[:, i])
                right = bj.design(phi[:, j])
                left = left - left.mean(axis=0)
                right = right - right.mean(axis=0)
                block = np.einsum("si,sj->sij", left, right).reshape(n_rows, -1)
                columns.append(block - block.mean(axis=0))
                pi = _normalized(bi.curvature_penalty())
                pj = _normalized(bj.curvature_penalty())
                pen = np.kron(pi, np.eye(bj.n_funcs)) + np.kron(np.eye(bi.n_funcs), pj)
                penalties.append(pen + _TENSOR_RIDGE * np.eye(pen.shape[0]))

    design = np.hstack(columns)
    n_cols = design.shape[1]
    penalty = np.zeros((n_cols, n_cols))
    at = 0
    for block_pen in penalties:
        w = block_pen.shape[0]
        penalty[at : at + w, at : at + w] = block_pen
        at += w
    return design, penalty


def _gcv_score(lam, xtx, penalty, xty, yty, n_rows):
    try:
        chol = cho_factor(xtx + lam * penalty, lower=True)
    except np.linalg.LinAlgError:
        return np.inf, None, np.nan
    beta = cho_solve(chol, xty)
    edf = float(np.trace(cho_solve(chol, xtx)))
    rss = max(float(yty - 2.0 * beta @ xty + beta @ (xtx @ beta)), 0.0)
    denom = n_rows - edf
    if denom <= 0:
        return np.inf, beta, edf
    return n_rows * rss / denom**2, beta, edf


def _select_lambda(xtx, penalty, xty, yty, n_rows):
    base = np.trace(xtx) / max(np.trace(penalty), 1e-300)
    grid = base * np.logspace(-8.0, 8.0, 33)
    scores = [_gcv_score(lam, xtx, penalty, xty, yty, n_rows)[0] for lam in grid]
    best = int(np.argmin(scores))
    if not np.isfinite(scores[best]):
        raise ValueError("penalized design is rank-deficient for every smoothing level")

    lo = math.log(grid[max(best - 1, 0)])
    hi = math.log(grid[min(best + 1, len(grid) - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _gcv_score(math.exp(c), xtx, penalty, xty, yty, n_rows)[0]
    fd = _gcv_score(math.exp(d), xtx, penalty, xty, yty, n_rows)[0]
    for _ in range(20):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _gcv_score(math.exp(c), xtx, penalty, xty, yty, n_rows)[0]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _gcv_score(math.exp(d), xtx, penalty, xty, yty, n_rows)[0]
    lam = math.exp(0.5 * (a + b))
    score, beta, edf = _gcv_score(lam, xtx, penalty, xty, yty, n_rows)
    if not np.isfinite(score) or beta is None:
        lam = grid[best]
        score, beta, edf = _gcv_score(lam, xtx, penalty, xty, yty, n_rows)
    return lam, score, beta, edf


def _default_interactions(n_dims: int) -> bool:
    return 2 <= n_dims <= 3


def gam_fit_detail(
    sample: PsaSample,
    subset: ParamSubset,
    t: int,
    interactions: bool | None = None,
) -> tuple[np.ndarray, dict]:
    """Fitted conditional-mean column plus fit diagnostics.

    ``interactions=None`` applies the default rule (pairwise tensor terms
    for 2-3 parameters, additive otherwise); pass True/False to override.
    """
    subset.validate_against(sample.n_params)
    if len(subset.indices) > MAX_GAM_DIMENSIONS:
        raise ValueError(
            f"spline regression is unstable beyond {MAX_GAM_DIMENSIONS} parameters; "
            f"got {len(subset.indices)}"
        )
    if not 0 <= t < sample.n_treatments:
        raise ValueError(f"treatment index {t} out of range (T={sample.n_treatments})")

    phi = sample.params[:, list(subset.indices)]
    sd = phi.std(axis=0)
    if np.any(sd == 0):
        bad = [sample.param_names[subset.indices[i]] for i in np.where(sd == 0)[0]]
        raise ValueError(
            f"constant parameter column(s) {bad}: the spline design is rank-deficient"
        )
    phi = (phi - phi.mean(axis=0)) / sd

    if interactions is None:
        interactions = _default_interactions(phi.shape[1])
    design, penalty = _build_design(phi, interactions)

    y = sample.nb[:, t]
    y_mean = float(y.mean())
    yc = y - y_mean
    xtx = design.T @ design
    xty = design.T @ yc
    yty = float(yc @ yc)
    n_rows = sample.n_sims

    lam, gcv, beta, edf = _select_lambda(xtx, penalty, xty, yty, n_rows)
    fitted = design @ beta + y_mean
    rss = max(float(yty - 2.0 * beta @ xty + beta @ (xtx @ beta)), 0.0)
    residual_var = rss / max(n_rows - edf, 1.0)

    info = {
        "lambda": float(lam),
        "gcv": float(gcv),
        "edf": float(edf),
        "n_columns": int(design.shape[1]),
        "interactions": bool(interactions),
        "residual_var": float(residual_var),
    }
    return fitted, info


def gam_fit(
    sample: PsaSample,
    subset: ParamSubset,
    t: int,
    interactions: bool | None = None,
) -> np.ndarray:
    """Spline-smoothed conditional mean of one net-benefit column,
    evaluated at the observed parameter values."""
    fitted, _ = gam_fit_detail(sample, subset, t, interactions=interactions)
    return fitted
