import numpy as np


def nmse_db(estimates, truths) -> float:
    """10 log10(sum ||H_est - H||^2 / sum ||H||^2) over the whole set.

    Returns ``-inf`` for an exact match.
    """
    est = np.asarray(estimates)
    ref = np.asarray(truths)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    if ref.size == 0:
        raise ValueError("empty evaluation set")
    num = float(np.sum(np.abs(est - ref) ** 2))
    den = float(np.sum(np.abs(ref) ** 2))
    if den == 0.0:
        raise ValueError("reference channels have zero energy")
    if num == 0.0:
        return float("-inf")
    return 10.0 * np.log10(num / den)
