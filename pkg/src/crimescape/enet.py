"""Elastic-net linear regression by cyclic coordinate descent.

Minimizes (1/2n)||y - X b||^2 + lam * (alpha*||b||_1 + (1-alpha)/2*||b||_2^2)
on standardized columns. alpha=1 is the lasso, alpha=0 is ridge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 10_000
# Floor applied to alpha when sizing the penalty path, so ridge gets a
# finite path head.
PATH_ALPHA_FLOOR = 0.001


@dataclass
class StandardizationParams:
    """Per-column centering/scaling (1/n variance convention) plus y centering.

    `dropped` lists original column indices with zero variance; they carry no
    coefficient and are ignored at prediction time.
    """

    means: np.ndarray
    stds: np.ndarray
    dropped: list[int]
    y_mean: float

    @property
    def n_columns(self) -> int:
        return len(self.means)

    @property
    def retained(self) -> np.ndarray:
        mask = np.ones(self.n_columns, dtype=bool)
        mask[self.dropped] = False
        return np.flatnonzero(mask)


@dataclass
class ElasticNetModel:
    alpha: float
    lam: float
    beta: np.ndarray
    intercept: float
    std_params: StandardizationParams
    n_iter: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)


def standardize(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, StandardizationParams]:
    """Center/scale columns to mean 0, variance 1 (1/n); center y.

    Zero-variance columns are dropped and recorded, not errored: constant
    tract features are expected in practice.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("X must be 2-d with at least 2 rows")
    if y.shape != (X.shape[0],):
        raise ValueError("y length must match X rows")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise ValueError(f"non-finite feature value at row {r}, column {c}")
    if not np.all(np.isfinite(y)):
        r = int(np.flatnonzero(~np.isfinite(y))[0])
        raise ValueError(f"non-finite response value at row {r}")

    means = X.mean(axis=0)
    stds = X.std(axis=0)  # 1/n convention
    dropped = [int(j) for j in np.flatnonzero(stds == 0.0)]
    keep = np.flatnonzero(stds != 0.0)
    Xs = (X[:, keep] - means[keep]) / stds[keep]
    y_mean = float(y.mean())
    yc = y - y_mean
    return Xs, yc, StandardizationParams(means=means, stds=stds, dropped=dropped, y_mean=y_mean)


def soft_threshold(z: float, gamma: float) -> float:
    """S(z, gamma) = sign(z) * max(|z| - gamma, 0)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    az = abs(z) - gamma
    if az <= 0.0:
        return 0.0
    return az if z > 0 else -az


def objective(Xs: np.ndarray, yc: np.ndarray, beta: np.ndarray, alpha: float, lam: float) -> float:
    n = Xs.shape[0]
    r = yc - Xs @ beta
    return float(
        (r @ r) / (2.0 * n)
        + lam * (alpha * np.abs(beta).sum() + 0.5 * (1.0 - alpha) * (beta @ beta))
    )


def fit(
    Xs: np.ndarray,
    yc: np.ndarray,
    alpha: float,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    std_params: StandardizationParams | None = None,
    beta0: np.ndarray | None = None,
    track_objective: bool = False,
) -> ElasticNetModel:
    """Cyclic coordinate descent on standardized columns.

    Each coordinate update is the closed form
    b_j <- S(rho_j, lam*alpha) / (1 + lam*(1-alpha)) with
    rho_j = (1/n) x_j . (r + x_j b_j), valid because columns have unit 1/n
    variance. Convergence: max |delta b_j| per sweep < tol.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if lam < 0.0:
        raise ValueError(f"lambda {lam} < 0")
    # Column-major layout makes the per-coordinate column dots contiguous.
    Xs = np.asfortranarray(Xs, dtype=float)
    yc = np.asarray(yc, dtype=float)
    n, d = Xs.shape

    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (d,):
        raise ValueError("beta0 length must match columns of Xs")
    resid = yc - Xs @ beta
    denom = 1.0 + lam * (1.0 - alpha)
    gamma = lam * alpha

    history: list[float] = []
    if track_objective:
        history.append(objective(Xs, yc, beta, alpha, lam))

    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(d):
            bj = beta[j]
            rho = (Xs[:, j] @ resid) / n + bj
            new_bj = soft_threshold(rho, gamma) / denom
            if new_bj != bj:
                resid -= Xs[:, j] * (new_bj - bj)
                beta[j] = new_bj
                delta = abs(new_bj - bj)
                if delta > max_delta:
                    max_delta = delta
        if track_objective:
            history.append(objective(Xs, yc, beta, alpha, lam))
        if max_delta < tol:
            converged = True
            break

    intercept = std_params.y_mean if std_params is not None else 0.0
    return ElasticNetModel(
        alpha=alpha,
        lam=lam,
        beta=beta,
        intercept=float(intercept),
        std_params=std_params,
        n_iter=sweeps if d > 0 else 0,
        converged=converged if d > 0 else True,
        objective_history=history,
    )


def kkt_residuals(Xs: np.ndarray, yc: np.ndarray, beta: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """Per-coordinate stationarity violation; all ~0 at the optimum.

    For b_j = 0 the subgradient condition is |g_j| <= lam*alpha, otherwise
    g_j = lam*alpha*sign(b_j), with g_j = (1/n) x_j . r - lam*(1-alpha)*b_j.
    """
    n = Xs.shape[0]
    r = yc - Xs @ beta
    g = (Xs.T @ r) / n - lam * (1.0 - alpha) * beta
    out = np.empty_like(beta)
    zero = beta == 0.0
    out[zero] = np.maximum(0.0, np.abs(g[zero]) - lam * alpha)
    out[~zero] = np.abs(g[~zero] - lam * alpha * np.sign(beta[~zero]))
    return out


def lambda_path(
    Xs: np.ndarray,
    yc: np.ndarray,
    alpha: float,
    n_values: int = 50,
    ratio: float = 1e-3,
) -> np.ndarray:
    """Descending geometric penalty grid from lambda_max to lambda_max*ratio.

    lambda_max = max_j |x_j . yc| / (n * max(alpha, 0.001)) is the smallest
    penalty at which the all-zero solution is stationary (exact for alpha=1).
    """
    if n_values < 2:
        raise ValueError("n_values must be >= 2")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    Xs = np.asarray(Xs, dtype=float)
    yc = np.asarray(yc, dtype=float)
    if not np.any(yc):
        return np.array([0.0])
    n = Xs.shape[0]
    lam_max = float(np.max(np.abs(Xs.T @ yc)) / (n * max(alpha, PATH_ALPHA_FLOOR)))
    return lam_max * np.power(ratio, np.linspace(0.0, 1.0, n_values))


def predict(model: ElasticNetModel, X_raw: np.ndarray) -> np.ndarray:
    """Apply stored standardization (dropped columns ignored) and the fit."""
    sp = model.std_params
    if sp is None:
        raise ValueError("model carries no standardization parameters")
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim != 2 or X_raw.shape[1] != sp.n_columns:
        raise ValueError(
            f"expected {sp.n_columns} feature columns, got "
            f"{X_raw.shape[1] if X_raw.ndim == 2 else 'non-2d input'}"
        )
    keep = sp.retained
    Xs = (X_raw[:, keep] - sp.means[keep]) / sp.stds[keep]
    return model.intercept + Xs @ model.beta


def save_model(model: ElasticNetModel, path: str | Path) -> None:
    """Write a self-describing JSON snapshot; floats round-trip exactly."""
    sp = model.std_params
    doc = {
        "alpha": model.alpha,
        "lambda": model.lam,
        "y_mean": sp.y_mean,
        "means": [float(v) for v in sp.means],
        "stds": [float(v) for v in sp.stds],
        "dropped": list(sp.dropped),
        "beta": [float(v) for v in model.beta],
        "intercept": model.intercept,
        "n_iter": model.n_iter,
        "converged": model.converged,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_model(path: str | Path) -> ElasticNetModel:
    doc = json.loads(Path(path).read_text())
    sp = StandardizationParams(
        means=np.array(doc["means"], dtype=float),
        stds=np.array(doc["stds"], dtype=float),
        dropped=[int(j) for j in doc["dropped"]],
        y_mean=float(doc["y_mean"]),
    )
    return ElasticNetModel(
        alpha=float(doc["alpha"]),
        lam=float(doc["lambda"]),
        beta=np.array(doc["beta"], dtype=float),
        intercept=float(doc["intercept"]),
        std_params=sp,
        n_iter=int(doc["n_iter"]),
        converged=bool(doc["converged"]),
    )
