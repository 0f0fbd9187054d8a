"""Dense symmetric linear algebra, rank statistics, and weighted regression.

Everything here is a pure function of its arguments. Matrices are plain
float64 numpy arrays in row-major order; "symmetric" always means
max |A_ij - A_ji| <= 1e-12 * max|A|.

The eigensolver is a cyclic Jacobi sweep (upper triangle, row-major order),
adequate for the small dense symmetric matrices this package produces
(d <= 4096). numpy is used for array storage and vectorized row/column
updates only; no external eigensolver is called.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, ValidationError

SYM_RTOL = 1e-12
MAX_EIGEN_DIM = 4096


def as_matrix(a, name="matrix"):
    """Coerce to a 2-D float64 array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def check_symmetric(a, name="matrix"):
    """Validate the symmetry contract and return the (coerced) matrix."""
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale > 0 and np.max(np.abs(m - m.T)) > SYM_RTOL * scale:
        raise ValidationError(f"{name} is not symmetric within {SYM_RTOL}*max|A|")
    return m


def covariance(samples):
    """Mean-centered sample covariance with divisor N (population convention).

    samples: N x d array, N >= 2. Returns a symmetric d x d matrix.
    """
    z = as_matrix(samples, "samples")
    n = z.shape[0]
    if n < 2:
        raise DimensionError(f"covariance needs at least 2 samples, got {n}")
    zc = z - z.mean(axis=0)
    c = (zc.T @ zc) / n
    return (c + c.T) / 2.0


@dataclass
class SpectrumResult:
    """Full spectrum of a symmetric matrix.

    eigenvalues: sorted non-increasing.
    eigenvectors: unit-norm columns aligned with eigenvalues.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eigen(matrix, tol=SYM_RTOL, max_sweeps=60):
    """Diagonalize a symmetric matrix by cyclic Jacobi rotations.

    Sweeps the strict upper triangle until off(A) <= tol * ||A||_F.
    Returns SpectrumResult with eigenvalues sorted descending and matching
    unit eigenvector columns. Residual ||A v - lambda v|| stays below
    ~1e-8 * ||A|| per pair for well-scaled inputs.
    """
    a = check_symmetric(matrix).copy()
    n = a.shape[0]
    if n > MAX_EIGEN_DIM:
        raise ValidationError(f"sym_eigen limited to d <= {MAX_EIGEN_DIM}, got {n}")
    v = np.eye(n)
    norm = np.sqrt(np.sum(a * a))
    if n == 1 or norm == 0.0:
        w = np.diag(a).copy()
        order = np.argsort(w)[::-1]
        return SpectrumResult(w[order], v[:, order])
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w)[::-1]
    return SpectrumResult(w[order], v[:, order])


def _ranks(values):
    # average ranks for ties, 1-based
    v = np.asarray(values, dtype=float)
    n = v.size
    order = np.argsort(v, kind="stable")
    ranks = np.empty(n)
    sv = v[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(xs, ys):
    """Plain Pearson correlation; raises on a constant input sequence."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("pearson needs two equal-length 1-D sequences")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("correlation undefined for a constant sequence")
    return float(np.sum(xc * yc) / (sx * sy))


def spearman(xs, ys):
    """Spearman rank correlation with average ranks for ties.

    Both sequences must have length >= 3; a constant sequence makes the
    correlation undefined and raises DegenerateInputError.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise DimensionError("spearman needs two equal-length 1-D sequences")
    if x.size < 3:
        raise DimensionError(f"spearman needs length >= 3, got {x.size}")
    return pearson(_ranks(x), _ranks(y))


def weighted_linfit(xs, ys, weights):
    """Weighted least squares line fit.

    Minimizes sum_i w_i (y_i - a - b x_i)^2 and returns
    (intercept a, slope b, chi_squared) with chi_squared the minimized
    weighted residual sum. Weights must be positive; all-identical xs are a
    singular design.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (x.shape == y.shape == w.shape) or x.ndim != 1:
        raise DimensionError("weighted_linfit needs three equal-length 1-D sequences")
    if x.size < 3:
        raise DimensionError(f"weighted_linfit needs length >= 3, got {x.size}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be positive and finite")
    s = w.sum()
    sx = np.sum(w * x)
    sy = np.sum(w * y)
    sxx = np.sum(w * x * x)
    sxy = np.sum(w * x * y)
    det = s * sxx - sx * sx
    scale = s * sxx if s * sxx > 0 else 1.0
    if abs(det) <= 1e-14 * scale:
        raise DegenerateInputError("singular design: xs carry no spread")
    b = (s * sxy - sx * sy) / det
    a = (sy - b * sx) / s
    r = y - a - b * x
    chi2 = float(np.sum(w * r * r))
    return float(a), float(b), chi2


@dataclass
class FitReport:
    """A fitted two-coefficient escape-time model.

    model_kind: "power_law" (log tau = a + b log gamma) or
    "kramers_exponential" (log tau = a + b gamma). Logs are natural.
    point_residuals holds (observed, fitted) pairs in log space.
    aic == chi_squared + 2 * number of coefficients.
    """

    model_kind: str
    coefficients: tuple
    chi_squared: float
    aic: float
    point_residuals: list


def fit_model(model_kind, gammas, log_taus, weights):
    """Fit one of the two escape-time models and assemble its FitReport."""
    g = np.asarray(gammas, dtype=float)
    if model_kind == "power_law":
        if np.any(g <= 0):
            raise ValidationError("power_law fit needs gamma > 0")
        x = np.log(g)
    elif model_kind == "kramers_exponential":
        x = g
    else:
        raise ValidationError(f"unknown model_kind {model_kind!r}")
    a, b, chi2 = weighted_linfit(x, log_taus, weights)
    fitted = a + b * x
    residuals = [(float(o), float(f)) for o, f in zip(log_taus, fitted)]
    return FitReport(model_kind, (a, b), chi2, chi2 + 2.0 * 2, residuals)
