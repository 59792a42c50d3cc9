"""Weighted local polynomial least squares, the local instrumented solve, and
residualisation.

All three operations share the same ingredients: one-sided kernel weights and
the bandwidth-scaled polynomial basis. Linear systems are small and dense
((p+1) or (2+q) dimensional) and are solved by a pivoted direct factorisation;
singularity is detected through the reciprocal condition number of the moment
matrices rather than through solver failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSupport, WeakInstrument
from .kernels import ScaledBasis, SidedWeights

#: Reciprocal condition number below which the weighted Gram matrix is
#: treated as singular.
GRAM_RCOND_MIN = 1e-12

#: Reciprocal condition number below which the instrumented cross-moment
#: (the Schur complement of the joint system) signals a weak placebo proxy.
SCHUR_RCOND_MIN = 1e-10


def reciprocal_condition(m: np.ndarray) -> float:
    """Reciprocal 2-norm condition number of a small dense matrix."""
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def _schur_rcond(schur: np.ndarray, cross_raw: np.ndarray) -> float:
    """Scale-aware reciprocal condition of the instrumented cross-moment.

    The smallest singular value of the Schur complement is measured against
    the larger of its own top singular value and that of the unresidualised
    cross-moment, so a uniformly collapsed complement (including the 1x1
    case, whose plain condition number is always 1) is still detected.
    """
    s = np.linalg.svd(np.asarray(schur, dtype=float), compute_uv=False)
    raw = np.linalg.svd(np.asarray(cross_raw, dtype=float), compute_uv=False)
    scale = max(float(s[0]), float(raw[0]))
    if scale == 0.0:
        return 0.0
    return float(s[-1] / scale)


@dataclass(frozen=True)
class LocalFit:
    """One-sided weighted polynomial fit in the scaled basis.

    ``coef_scaled`` holds ``(intercept, h * slope, ..., h^p * p-th coefficient)``:
    entry 0 is the fitted value at the cutoff and entry j is the j-th
    raw-coordinate coefficient multiplied by ``h^j``.

    ``gram`` is the scaled moment matrix ``(1/(n h)) R' K R`` of the fit; it is
    symmetric positive definite whenever the fit succeeds.
    """

    side: str
    degree: int
    coef_scaled: np.ndarray
    gram: np.ndarray
    gram_rcond: float
    n_effective: int

    @property
    def intercept(self) -> float:
        return float(self.coef_scaled[0])


@dataclass(frozen=True)
class IvFit:
    """One-sided local instrumented solve.

    ``alpha0`` is the running-variable-only intercept at the cutoff,
    ``alpha1_scaled`` the slope coefficient multiplied by the bandwidth, and
    ``gamma`` the coefficients on the placebo outcome columns.
    """

    side: str
    alpha0: float
    alpha1_scaled: float
    gamma: np.ndarray
    system_rcond: float
    schur_rcond: float
    n_effective: int


def _check_alignment(weights: SidedWeights, basis: ScaledBasis) -> None:
    if weights.weights.shape[0] != basis.rows.shape[0]:
        raise ValueError("weights and basis were built from different samples")
    if weights.bandwidth != basis.bandwidth or weights.cutoff != basis.cutoff:
        raise ValueError("weights and basis use different bandwidth or cutoff")


def _require_distinct_support(weights: SidedWeights, basis: ScaledBasis, needed: int) -> None:
    pos = weights.positive
    distinct = np.unique(basis.rows[pos, 1]).size if pos.any() else 0
    if distinct < needed:
        raise SingularSupport(
            f"{distinct} distinct running-variable values with positive weight on "
            f"the {weights.side} side; need at least {needed}"
        )


def local_poly_fit(s: np.ndarray, weights: SidedWeights, basis: ScaledBasis) -> LocalFit:
    """Weighted least squares of ``s`` on the scaled polynomial basis.

    Solves ``(R' K R) c = R' K s`` for the scaled coefficient vector ``c``,
    where ``K`` is the diagonal of one-sided kernel weights. The fit
    reproduces any polynomial of degree <= basis.degree exactly through the
    positively weighted points.

    Raises
    ------
    SingularSupport
        If fewer than ``degree + 1`` distinct running-variable values carry
        positive weight, or if the Gram matrix is numerically singular
        (reciprocal condition below ``GRAM_RCOND_MIN``).
    """
    _check_alignment(weights, basis)
    s = np.asarray(s, dtype=float)
    _require_distinct_support(weights, basis, basis.degree + 1)
    w = weights.weights
    rw = basis.rows * w[:, None]
    gram_raw = rw.T @ basis.rows
    rcond = reciprocal_condition(gram_raw)
    if rcond < GRAM_RCOND_MIN:
        raise SingularSupport(
            f"singular local design on the {weights.side} side (rcond={rcond:.3e})"
        )
    coef = np.linalg.solve(gram_raw, rw.T @ s)
    n = w.shape[0]
    return LocalFit(
        side=weights.side,
        degree=basis.degree,
        coef_scaled=coef,
        gram=gram_raw / (n * weights.bandwidth),
        gram_rcond=rcond,
        n_effective=weights.n_positive,
    )


def local_iv_fit(
    y: np.ndarray,
    W: np.ndarray,
    Z: np.ndarray,
    weights: SidedWeights,
    basis: ScaledBasis,
) -> IvFit:
    """Solve the one-sided instrumented moment condition.

    Stacks the scaled linear basis with the placebo treatments as instruments
    for the placebo outcomes and solves the exactly identified system

        [R'KR  R'KW] [alpha_scaled]   [R'Ky]
        [Z'KR  Z'KW] [gamma       ] = [Z'Ky].

    Requires ``dim(Z) == dim(W)`` (the exactly identified case) and a degree-1
    basis.

    Raises
    ------
    SingularSupport
        If the running-variable block is singular or the side has fewer
        positively weighted points than unknowns.
    WeakInstrument
        If the Schur complement ``Z'K(I - R(R'KR)^{-1}R'K)W`` has scale-aware
        reciprocal condition below ``SCHUR_RCOND_MIN``; the placebo treatment
        is then too weak a proxy to support the adjustment.
    """
    _check_alignment(weights, basis)
    if basis.degree != 1:
        raise ValueError("the instrumented solve uses a degree-1 basis")
    y = np.asarray(y, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if W.shape[0] != y.shape[0]:
        W = W.T
    if Z.shape[0] != y.shape[0]:
        Z = Z.T
    q = W.shape[1]
    if q < 1:
        raise ValueError("at least one placebo outcome column is required")
    if Z.shape != W.shape:
        raise ValueError("placebo treatments and outcomes must have matching shape")
    if weights.n_positive < 2 + q:
        raise SingularSupport(
            f"{weights.n_positive} observations with positive weight on the "
            f"{weights.side} side; the instrumented solve needs at least {2 + q}"
        )
    _require_distinct_support(weights, basis, 2)

    w = weights.weights
    rw = basis.rows * w[:, None]
    zw = Z * w[:, None]
    a = rw.T @ basis.rows  # R'KR, 2x2
    b = rw.T @ W  # R'KW, 2xq
    c = zw.T @ basis.rows  # Z'KR, qx2
    dm = zw.T @ W  # Z'KW, qxq
    if reciprocal_condition(a) < GRAM_RCOND_MIN:
        raise SingularSupport(
            f"singular local design on the {weights.side} side of the instrumented solve"
        )
    schur = dm - c @ np.linalg.solve(a, b)
    schur_rcond = _schur_rcond(schur, dm)
    if schur_rcond < SCHUR_RCOND_MIN:
        raise WeakInstrument(
            f"weak placebo proxy on the {weights.side} side "
            f"(Schur complement rcond={schur_rcond:.3e})"
        )
    system = np.block([[a, b], [c, dm]])
    rhs = np.concatenate([rw.T @ y, zw.T @ y])
    nu = np.linalg.solve(system, rhs)
    return IvFit(
        side=weights.side,
        alpha0=float(nu[0]),
        alpha1_scaled=float(nu[1]),
        gamma=nu[2:].copy(),
        system_rcond=reciprocal_condition(system),
        schur_rcond=schur_rcond,
        n_effective=weights.n_positive,
    )


def residualize(s: np.ndarray, weights: SidedWeights, basis: ScaledBasis) -> np.ndarray:
    """Residuals of ``s`` from the one-sided local linear fit.

    Entries with zero weight are returned as exact zeros; use
    ``weights.positive`` to tell flagged zeros from genuine zero residuals.
    The returned vector is weight-orthogonal to the basis columns:
    ``sum_i w_i * rows_i * resid_i == 0`` up to rounding.
    """
    fit = local_poly_fit(s, weights, basis)
    fitted = basis.rows @ fit.coef_scaled
    return np.where(weights.positive, np.asarray(s, dtype=float) - fitted, 0.0)
