"""Kernel functions, one-sided locality weights, and the scaled polynomial basis.

Weights keep the literal 1/h factor and are never renormalised; the moment
matrices built downstream are defined in terms of these raw weights, and every
estimator output is invariant to rescaling all weights by a positive constant.

The cutoff point itself belongs to the right side: right-side weights use
``d >= cutoff`` and left-side weights use ``d < cutoff``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSupport

KERNEL_KINDS = ("window", "triangle", "gaussian")

#: Relative weight below which an observation does not count as effective
#: support. Only binding for the gaussian kernel, whose weights never reach
#: exactly zero.
EFFECTIVE_SUPPORT_RTOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """A kernel selected by name.

    ``scale`` is the gaussian width parameter; it is ignored by the compact
    window and triangle kernels.
    """

    kind: str = "triangle"
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNEL_KINDS}")
        if not self.scale > 0:
            raise ValueError("kernel scale must be positive")


def kernel_value(kernel: KernelSpec, u):
    """Evaluate the kernel at nonnegative argument ``u`` (scalar or array).

    window:   1 on [0, 1], 0 beyond.
    triangle: 1 - u on [0, 1], 0 beyond.
    gaussian: exp(-u^2 / (2*scale)) / sqrt(2*pi*scale), positive everywhere.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0):
        raise ValueError("kernel argument must be nonnegative")
    if kernel.kind == "window":
        out = (arr <= 1.0).astype(float)
    elif kernel.kind == "triangle":
        out = np.where(arr <= 1.0, 1.0 - arr, 0.0)
    else:
        out = np.exp(-(arr * arr) / (2.0 * kernel.scale)) / np.sqrt(2.0 * np.pi * kernel.scale)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SidedWeights:
    """Kernel weights restricted to one side of the cutoff.

    ``weights[i] = (1/h) * 1{side condition} * K(|d_i - cutoff| / h)``.

    ``n_positive`` counts strictly positive weights; ``n_effective`` counts
    weights above ``EFFECTIVE_SUPPORT_RTOL`` times the largest weight, which
    differs from ``n_positive`` only for the gaussian kernel.
    """

    side: str
    cutoff: float
    bandwidth: float
    weights: np.ndarray
    n_positive: int
    n_effective: int

    @property
    def positive(self) -> np.ndarray:
        return self.weights > 0.0


def sided_weights(
    d: np.ndarray,
    cutoff: float,
    h: float,
    side: str,
    kernel: KernelSpec,
    min_positive: int | None = None,
) -> SidedWeights:
    """Build one-sided kernel weights at bandwidth ``h``.

    Raises SingularSupport when fewer than ``min_positive`` observations get a
    strictly positive weight (the bandwidth is too small for the side).
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    d = np.asarray(d, dtype=float)
    if d.size == 0:
        raise ValueError("running variable is empty")
    on_side = d >= cutoff if side == "right" else d < cutoff
    w = np.zeros(d.shape, dtype=float)
    if on_side.any():
        u = np.abs(d[on_side] - cutoff) / h
        w[on_side] = kernel_value(kernel, u) / h
    n_positive = int(np.count_nonzero(w > 0.0))
    w_max = w.max() if n_positive else 0.0
    n_effective = int(np.count_nonzero(w > EFFECTIVE_SUPPORT_RTOL * w_max)) if n_positive else 0
    if min_positive is not None and n_positive < min_positive:
        raise SingularSupport(
            f"{n_positive} observations with positive weight on the {side} side "
            f"(need at least {min_positive}); bandwidth {h} is too small"
        )
    return SidedWeights(
        side=side,
        cutoff=float(cutoff),
        bandwidth=float(h),
        weights=w,
        n_positive=n_positive,
        n_effective=n_effective,
    )


@dataclass(frozen=True)
class ScaledBasis:
    """Polynomial design rows in the bandwidth-scaled coordinate.

    Row i is ``(1, u_i, ..., u_i^degree)`` with ``u_i = (d_i - cutoff) / h``.
    The scaling matrix ``diag(1, h, ..., h^degree)`` maps scaled coefficients
    back to raw-coordinate polynomial coefficients.
    """

    degree: int
    cutoff: float
    bandwidth: float
    rows: np.ndarray

    @property
    def scaling(self) -> np.ndarray:
        return np.diag(self.bandwidth ** np.arange(self.degree + 1, dtype=float))


def scaled_basis(d: np.ndarray, cutoff: float, h: float, degree: int) -> ScaledBasis:
    """Build the scaled polynomial basis of the given degree (1 or 2)."""
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    d = np.asarray(d, dtype=float)
    u = (d - cutoff) / h
    rows = np.column_stack([u**j for j in range(degree + 1)])
    return ScaledBasis(degree=degree, cutoff=float(cutoff), bandwidth=float(h), rows=rows)
