import math
from typing import Any, Dict, Sequence, Tuple

from .analysis import SchemeParams
from .simulator import BatchStats, dkw_threshold, empirical_cdf_compare

SIGMA_LIMIT = 3.0


def check_point(analytic_mean: float, simulated_mean: float, ci95: float,
                other_ci95: float = 0.0) -> Tuple[bool, str]:
    """Check one analytic/simulated pair against the sigma limit on the wider CI.

    Symmetric in its two sources: swapping them (and their CIs) gives the same verdict.
    """
    width = max(ci95, other_ci95)
    deviation = abs(simulated_mean - analytic_mean)
    limit = SIGMA_LIMIT * width
    if deviation > limit + 1e-9:
        return False, f"deviation {deviation:.4f} exceeds {SIGMA_LIMIT:g}*ci95 = {limit:.4f}"
    return True, f"deviation {deviation:.4f} within {SIGMA_LIMIT:g}*ci95 = {limit:.4f}"


def check_cdf(batch: BatchStats, params: SchemeParams, alpha: float = 0.01) -> Tuple[bool, str, Dict[str, Any]]:
    """Empirical CDF of T against the analytic p_t under the DKW threshold."""
    deviation = empirical_cdf_compare(batch, params)
    threshold = dkw_threshold(batch.trials, alpha)
    metrics = {"deviation": deviation, "threshold": threshold, "trials": batch.trials}
    if deviation >= threshold:
        return False, f"CDF deviation {deviation:.5f} >= DKW threshold {threshold:.5f}", metrics
    return True, f"CDF deviation {deviation:.5f} < DKW threshold {threshold:.5f}", metrics


def grade_comparison(pairs: Sequence[Tuple[Any, Any]]) -> Tuple[bool, str, Dict[str, Any]]:
    """Grade (analytic_row, simulated_row) pairs; both rows expose mean_T and ci95.

    Returns (passed, message, metrics) where metrics lists flagged points.
    """
    flagged = []
    worst = 0.0
    for analytic, simulated in pairs:
        ok, message = check_point(analytic.mean_T, simulated.mean_T, simulated.ci95, analytic.ci95)
        width = max(simulated.ci95, analytic.ci95)
        if width > 0:
            worst = max(worst, abs(simulated.mean_T - analytic.mean_T) / width)
        if not ok:
            flagged.append({"scheme": simulated.scheme, "g": simulated.g, "reason": message})
    metrics = {"points": len(pairs), "flagged": flagged,
               "worst_ci95_multiple": worst if math.isfinite(worst) else None}
    if flagged:
        return False, f"{len(flagged)} of {len(pairs)} point(s) outside {SIGMA_LIMIT:g}*ci95", metrics
    return True, "All checks passed!", metrics
