"""R-transforms of channel Gramian spectra and the derivative combinations
used by the large-system fixed point.

Only the Marchenko-Pastur ensemble ships with a closed form; other
unitarily-invariant ensembles can be plugged in through the RTransform
interface (analytic evaluate/derivative pair).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable


class NonPositiveAlphaError(ValueError):
    """Load factor must be positive."""


class InvalidStateError(ValueError):
    """A fixed-point state left the physically valid region."""


@dataclass(frozen=True)
class RTransform:
    """R-transform of a Gramian eigenvalue law, evaluated at -chi.

    evaluate(chi) returns R(-chi); derivative(chi) its chi-derivative.
    Both are analytic expressions per ensemble; finite differences are used
    only as a test oracle, because the fixed-point solver differentiates
    through these terms and needs smoothness.
    """

    evaluate: Callable[[float], float] = field(repr=False)
    derivative: Callable[[float], float] = field(repr=False)
    load: float = 1.0
    label: str = "custom"


def marcenko_pastur(alpha: float) -> RTransform:
    """R-transform of the Gramian of a k x n i.i.d. matrix with entry
    variance 1/n, at load alpha = k/n: R(w) = alpha / (1 - w), hence
    evaluate(chi) = alpha / (1 + chi)."""
    if alpha <= 0:
        raise NonPositiveAlphaError(f"load alpha must be positive, got {alpha}")

    def evaluate(chi: float) -> float:
        return alpha / (1.0 + chi)

    def derivative(chi: float) -> float:
        return -alpha / (1.0 + chi) ** 2

    return RTransform(evaluate=evaluate, derivative=derivative, load=alpha,
                      label=f"marcenko-pastur(alpha={alpha:g})")


def lambda_rs(rt: RTransform, chi: float, p: float, lambda_s: float) -> float:
    """Variance of the decoupled Gaussian input:

        [R(-chi)]^-2 * d/dchi[(lambda_s chi - p) R(-chi)]

    expanded by the product rule. For Marchenko-Pastur this collapses to
    (lambda_s + p) / alpha independently of chi.
    """
    r = rt.evaluate(chi)
    if r <= 0:
        raise InvalidStateError(f"R(-chi) = {r} is not positive at chi={chi}")
    value = (lambda_s * r + (lambda_s * chi - p) * rt.derivative(chi)) / (r * r)
    if value <= 0:
        raise InvalidStateError(
            f"decoupled variance {value} non-positive at chi={chi}, p={p}")
    return value


def asymptotic_distortion(rt: RTransform, chi: float, p: float,
                          lambda_s: float, alpha: float) -> float:
    """Large-system per-user distortion:

        lambda_s + alpha^-1 * d/dchi[(p - lambda_s chi) chi R(-chi)]

    expanded analytically. For Marchenko-Pastur this collapses to
    (lambda_s + p) / (1 + chi)^2. Tiny negative round-off is clamped to 0.
    """
    r = rt.evaluate(chi)
    dr = rt.derivative(chi)
    value = lambda_s + ((p - 2.0 * lambda_s * chi) * r
                        + (p - lambda_s * chi) * chi * dr) / alpha
    if value < -1e-9:
        raise InvalidStateError(f"distortion {value} negative at chi={chi}, p={p}")
    return max(value, 0.0)
