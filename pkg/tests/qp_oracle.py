"""Independent dense-QP oracle for the SVM dual (projected gradient).

Solves max sum(a) - 1/2 a'Qa s.t. 0 <= a <= C, y'a = 0 by projected
gradient with step 1/lambda_max(Q); the projection onto the box
intersected with the hyperplane is computed by bisection on the
hyperplane multiplier. Deliberately shares no code with the SMO path.
"""

import numpy as np


def project_box_hyperplane(v, y, C):
    """Euclidean projection of v onto {0 <= a <= C, y'a = 0}."""

    def residual(lam):
        return float(np.sum(y * np.clip(v - lam * y, 0.0, C)))

    lo, hi = -(np.abs(v).max() + C + 1.0), (np.abs(v).max() + C + 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * y, 0.0, C)


def solve_dual(K, y, C, iters=200000):
    """Returns (alpha, dual objective) at a tightly converged point."""
    y = np.asarray(y, dtype=np.float64)
    Q = K * np.outer(y, y)
    step = 1.0 / max(float(np.linalg.eigvalsh(Q).max()), 1e-12)
    alpha = project_box_hyperplane(np.zeros(len(y)), y, C)
    for _ in range(iters):
        grad = Q @ alpha - 1.0
        new = project_box_hyperplane(alpha - step * grad, y, C)
        if np.abs(new - alpha).max() < 1e-14:
            alpha = new
            break
        alpha = new
    objective = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
    return alpha, objective
