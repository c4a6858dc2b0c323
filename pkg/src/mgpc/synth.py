"""Synthetic ground truth: Gaussian random fields thresholded to labels.

Also provides the calibrated corruption model standing in for a coarse
low-fidelity simulator: the high-fidelity field is perturbed by a second
seeded random field whose amplitude is tuned until the area-weighted
label agreement hits a target.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import CalibrationError
from .kernel import KernelParams, spectral_weights
from .laplace import SpectralBasis

_LOGGER = logging.getLogger(__name__)


def sample_prior_field(basis: SpectralBasis, params: KernelParams,
                       seed: int = 0) -> np.ndarray:
    """Draw one zero-mean random field with the spectral Matern covariance.

    f(x) = (eta / sqrt(C)) * sum_i w_i (kappa^2 + lambda_i)^(-nu/2 - d/4)
    psi_i(x) with w_i ~ N(0, 1); repeated draws reproduce the kernel in
    expectation and the area-averaged variance equals eta^2.
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(basis.n_eig)
    s = spectral_weights(basis.eigenvalues, params)
    c = float(s @ basis.diag_weight())
    coeffs = np.sqrt(s) * w
    return (params.eta / np.sqrt(c)) * (coeffs @ basis.eigenvectors)


def field_to_labels(field) -> np.ndarray:
    """Round sigma(f) to the nearest integer; the 0.5 tie rounds up.

    Equivalent to label = 1 iff f >= 0.
    """
    return (np.asarray(field) >= 0.0).astype(np.int64)


def make_low_fidelity(high_field, basis: SpectralBasis,
                      ell_noise: float = 0.2, agreement_target: float = 0.85,
                      seed: int = 0, tolerance: float = 0.02,
                      nu: float = 1.5,
                      kappa_convention: str = "paper-eq6") -> np.ndarray:
    """Corrupted labels whose agreement with the high labels is calibrated.

    The perturbation is ``amplitude * g`` with g a unit-amplitude prior
    field at length-scale ``ell_noise``; per vertex the label flips at
    most once as the amplitude grows, so the area-weighted agreement is
    non-increasing and a bisection lands within ``tolerance`` of the
    target (or raises CalibrationError when unreachable).
    """
    if not 0.0 < agreement_target <= 1.0:
        raise CalibrationError(
            f"agreement target {agreement_target} outside (0, 1]"
        )
    high_field = np.asarray(high_field, dtype=np.float64)
    high_labels = field_to_labels(high_field)
    areas = basis.mass_diagonal
    total = areas.sum()

    noise = sample_prior_field(
        basis,
        KernelParams(eta=1.0, ell=ell_noise, nu=nu,
                     kappa_convention=kappa_convention),
        seed=seed,
    )

    def agreement(amplitude: float) -> float:
        low = field_to_labels(high_field + amplitude * noise)
        return float(areas[low == high_labels].sum() / total)

    if agreement_target + tolerance >= 1.0:
        return high_labels.copy()

    hi = 1.0
    for _ in range(60):
        if agreement(hi) <= agreement_target:
            break
        hi *= 2.0
    else:
        raise CalibrationError(
            f"agreement target {agreement_target} unreachable: "
            f"floor is {agreement(hi):.3f}"
        )

    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if agreement(mid) > agreement_target:
            lo = mid
        else:
            hi = mid

    best = min((lo, hi), key=lambda a: abs(agreement(a) - agreement_target))
    achieved = agreement(best)
    if abs(achieved - agreement_target) > tolerance:
        raise CalibrationError(
            f"calibration landed at agreement {achieved:.3f}, target "
            f"{agreement_target} +- {tolerance} (mesh too coarse?)"
        )
    _LOGGER.debug("low-fidelity noise amplitude %.4g, agreement %.4f",
                  best, achieved)
    return field_to_labels(high_field + best * noise)
