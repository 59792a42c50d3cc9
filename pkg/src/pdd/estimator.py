"""Placebo-adjusted discontinuity estimators (sharp and fuzzy).

The point estimate is assembled two ways and the results are compared:

* decomposition form: the plain local linear discontinuity of the outcome
  minus the placebo-outcome discontinuity weighted by the left-side
  instrumented coefficients,
  ``tau_pdd = tau_rdd_y - tau_rdd_w @ gamma_minus``;
* instrumented form: difference of the right-limit intercept and the adjusted
  left-limit counterfactual, both anchored on the right-limit placebo mean,
  ``tau_pdd = alpha_plus_0 + beta_plus_w0 @ gamma_plus
  - alpha_minus_0 - beta_plus_w0 @ gamma_minus``.

The two are algebraically identical; disagreement beyond tolerance raises
EquivalenceBreach and means a numerical problem, not a data property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EquivalenceBreach, WeakFirstStage
from .io import Sample
from .kernels import KernelSpec, ScaledBasis, SidedWeights, scaled_basis, sided_weights
from .local_fit import local_iv_fit, local_poly_fit

#: Relative tolerance (with a unit floor) for the two computation paths.
EQUIVALENCE_RTOL = 1e-8

#: Smallest treatment discontinuity accepted as a fuzzy-design denominator.
FIRST_STAGE_MIN = 1e-6


@dataclass(frozen=True)
class DiscontinuityEstimate:
    """Point estimates and per-side ingredients of one run.

    ``tau_pdd`` is the placebo-adjusted discontinuity; ``tau_pdd_iv_form`` is
    the same number computed through the instrumented form and is retained as
    a diagnostic. ``tau_pdd_alt`` is the secondary two-adjustment variant
    anchored on the marginal placebo mean; it carries no inference.
    ``fuzzy_estimate`` and ``tau_rdd_a`` are populated by fuzzy runs only.
    """

    tau_rdd_y: float
    tau_rdd_w: np.ndarray
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    tau_pdd: float
    tau_pdd_iv_form: float
    tau_pdd_alt: float
    beta_plus_y0: float
    beta_minus_y0: float
    beta_plus_w0: np.ndarray
    beta_minus_w0: np.ndarray
    alpha_plus_0: float
    alpha_minus_0: float
    n_left: int
    n_right: int
    schur_rcond_left: float
    schur_rcond_right: float
    tau_rdd_a: float | None = None
    fuzzy_estimate: float | None = None

    @property
    def q(self) -> int:
        return int(self.tau_rdd_w.shape[0])

    @property
    def estimate(self) -> float:
        """Headline estimate: the fuzzy ratio when present, else tau_pdd."""
        return self.fuzzy_estimate if self.fuzzy_estimate is not None else self.tau_pdd


def _sides(
    d: np.ndarray, cutoff: float, h: float, kernel: KernelSpec
) -> tuple[SidedWeights, SidedWeights, ScaledBasis]:
    basis = scaled_basis(d, cutoff, h, degree=1)
    w_minus = sided_weights(d, cutoff, h, "left", kernel, min_positive=2)
    w_plus = sided_weights(d, cutoff, h, "right", kernel, min_positive=2)
    return w_minus, w_plus, basis


def rdd_discontinuity(
    s: np.ndarray, d: np.ndarray, cutoff: float, h: float, kernel: KernelSpec
) -> float:
    """Plain local linear discontinuity of ``s`` at the cutoff."""
    w_minus, w_plus, basis = _sides(np.asarray(d, dtype=float), cutoff, h, kernel)
    above = local_poly_fit(s, w_plus, basis)
    below = local_poly_fit(s, w_minus, basis)
    return above.intercept - below.intercept


def _relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def estimate_sharp(
    sample: Sample, cutoff: float, h: float, kernel: KernelSpec
) -> DiscontinuityEstimate:
    """Placebo-adjusted discontinuity for a sharp design.

    Runs the per-outcome local linear fits and the per-side instrumented
    solves, assembles ``tau_pdd`` through both the decomposition form and the
    instrumented form, and verifies that they agree.
    """
    if sample.q < 1:
        raise ValueError("placebo outcome and treatment columns are required")
    d = np.asarray(sample.d, dtype=float)
    w_minus, w_plus, basis = _sides(d, cutoff, h, kernel)

    fit_y_plus = local_poly_fit(sample.y, w_plus, basis)
    fit_y_minus = local_poly_fit(sample.y, w_minus, basis)
    beta_plus_w0 = np.array(
        [local_poly_fit(sample.W[:, j], w_plus, basis).intercept for j in range(sample.q)]
    )
    beta_minus_w0 = np.array(
        [local_poly_fit(sample.W[:, j], w_minus, basis).intercept for j in range(sample.q)]
    )

    iv_plus = local_iv_fit(sample.y, sample.W, sample.Z, w_plus, basis)
    iv_minus = local_iv_fit(sample.y, sample.W, sample.Z, w_minus, basis)

    tau_rdd_y = fit_y_plus.intercept - fit_y_minus.intercept
    tau_rdd_w = beta_plus_w0 - beta_minus_w0
    tau_dec = tau_rdd_y - float(tau_rdd_w @ iv_minus.gamma)
    tau_iv = (
        iv_plus.alpha0
        + float(beta_plus_w0 @ iv_plus.gamma)
        - iv_minus.alpha0
        - float(beta_plus_w0 @ iv_minus.gamma)
    )
    if _relative_gap(tau_dec, tau_iv) > EQUIVALENCE_RTOL:
        raise EquivalenceBreach(
            f"decomposition form {tau_dec!r} and instrumented form {tau_iv!r} "
            f"disagree beyond {EQUIVALENCE_RTOL:g}"
        )

    w_mean = sample.W.mean(axis=0)
    tau_alt = (
        tau_rdd_y
        + float((w_mean - beta_plus_w0) @ iv_plus.gamma)
        - float((w_mean - beta_minus_w0) @ iv_minus.gamma)
    )

    return DiscontinuityEstimate(
        tau_rdd_y=tau_rdd_y,
        tau_rdd_w=tau_rdd_w,
        gamma_minus=iv_minus.gamma,
        gamma_plus=iv_plus.gamma,
        tau_pdd=tau_dec,
        tau_pdd_iv_form=tau_iv,
        tau_pdd_alt=tau_alt,
        beta_plus_y0=fit_y_plus.intercept,
        beta_minus_y0=fit_y_minus.intercept,
        beta_plus_w0=beta_plus_w0,
        beta_minus_w0=beta_minus_w0,
        alpha_plus_0=iv_plus.alpha0,
        alpha_minus_0=iv_minus.alpha0,
        n_left=w_minus.n_positive,
        n_right=w_plus.n_positive,
        schur_rcond_left=iv_minus.schur_rcond,
        schur_rcond_right=iv_plus.schur_rcond,
    )


def estimate_fuzzy(
    sample: Sample, cutoff: float, h: float, kernel: KernelSpec
) -> DiscontinuityEstimate:
    """Fuzzy-design estimate: the sharp numerator over the treatment jump."""
    if sample.a is None:
        raise ValueError("fuzzy estimation requires a treatment column")
    point = estimate_sharp(sample, cutoff, h, kernel)
    tau_a = rdd_discontinuity(sample.a, sample.d, cutoff, h, kernel)
    if abs(tau_a) <= FIRST_STAGE_MIN:
        raise WeakFirstStage(
            f"treatment discontinuity {tau_a:.3e} is too small to divide by"
        )
    return DiscontinuityEstimate(
        tau_rdd_y=point.tau_rdd_y,
        tau_rdd_w=point.tau_rdd_w,
        gamma_minus=point.gamma_minus,
        gamma_plus=point.gamma_plus,
        tau_pdd=point.tau_pdd,
        tau_pdd_iv_form=point.tau_pdd_iv_form,
        tau_pdd_alt=point.tau_pdd_alt,
        beta_plus_y0=point.beta_plus_y0,
        beta_minus_y0=point.beta_minus_y0,
        beta_plus_w0=point.beta_plus_w0,
        beta_minus_w0=point.beta_minus_w0,
        alpha_plus_0=point.alpha_plus_0,
        alpha_minus_0=point.alpha_minus_0,
        n_left=point.n_left,
        n_right=point.n_right,
        schur_rcond_left=point.schur_rcond_left,
        schur_rcond_right=point.schur_rcond_right,
        tau_rdd_a=tau_a,
        fuzzy_estimate=point.tau_pdd / tau_a,
    )
