"""Gaussian-process surrogate with a product Matern 3/2 kernel and UCB proposals."""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import qmc

LENGTHSCALE = 0.1
NOISE = 1e-6
MAX_JITTER = 1e-2
N_CANDIDATES = 2048
N_REFINE = 20
_SQRT3 = math.sqrt(3.0)


class GpError(RuntimeError):
    pass


def matern32(x, y, lengthscale: float = LENGTHSCALE):
    """Product over dimensions of (1 + sqrt3 r) exp(-sqrt3 r), r = |x_i - y_i| / lengthscale.

    Two 1-D points give a scalar; (n, d) and (m, d) arrays give an (n, m) matrix.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.ndim == 1 and y.ndim == 1:
        r = _SQRT3 * np.abs(x - y) / lengthscale
        return float(np.prod((1.0 + r) * np.exp(-r)))
    xa = np.atleast_2d(x)
    ya = np.atleast_2d(y)
    r = _SQRT3 * np.abs(xa[:, None, :] - ya[None, :, :]) / lengthscale
    return np.prod((1.0 + r) * np.exp(-r), axis=-1)


class GpModel:
    """Zero-mean GP on standardized observations."""

    def __init__(self, dim: int, lengthscale: float = LENGTHSCALE, noise: float = NOISE):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = dim
        self.lengthscale = lengthscale
        self.noise = noise
        self.x = np.zeros((0, dim))
        self.y = np.zeros(0)
        self.y_mean = 0.0
        self.y_std = 1.0
        self.jitter = noise
        self._chol = None
        self._alpha = np.zeros(0)

    @property
    def n(self) -> int:
        return len(self.y)

    def fit(self, x, y) -> "GpModel":
        x = np.asarray(x, float).reshape(-1, self.dim)
        y = np.asarray(y, float).reshape(-1)
        if len(x) != len(y):
            raise ValueError("x and y lengths differ")
        self.x, self.y = x, y
        if len(y) == 0:
            self._chol, self._alpha = None, np.zeros(0)
            return self
        self.y_mean = float(y.mean())
        std = float(y.std())
        self.y_std = std if std > 0 else 1.0
        z = (y - self.y_mean) / self.y_std
        k = matern32(x, x, self.lengthscale)
        jitter = self.noise
        while True:
            try:
                self._chol = cho_factor(k + jitter * np.eye(len(y)), lower=True)
                break
            except LinAlgError:
                jitter *= 10.0
                if jitter > MAX_JITTER * (1 + 1e-9):
                    raise GpError("kernel matrix is not positive definite even with maximum jitter")
        self.jitter = jitter
        self._alpha = cho_solve(self._chol, z)
        return self

    def posterior(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of the standardized objective at ``query`` (m, d)."""
        q = np.atleast_2d(np.asarray(query, float))
        if q.shape[1] != self.dim:
            raise ValueError(f"query dimension {q.shape[1]} != {self.dim}")
        if self.n == 0:
            return np.zeros(len(q)), np.ones(len(q))
        ks = matern32(q, self.x, self.lengthscale)
        mean = ks @ self._alpha
        v = cho_solve(self._chol, ks.T)
        var = 1.0 - np.einsum("ij,ji->i", ks, v)
        return mean, np.maximum(var, 0.0)

    def predict(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in the original cost units."""
        m, v = self.posterior(query)
        return self.y_mean + self.y_std * m, self.y_std * np.sqrt(v)

    def ucb(self, query, beta: float) -> np.ndarray:
        m, v = self.posterior(query)
        return m + beta * np.sqrt(v)


def propose_next(model: GpModel, beta: float = 1.0, seed: int = 0, n_candidates: int = N_CANDIDATES,
                 n_refine: int = N_REFINE) -> np.ndarray:
    """argmax of UCB over scrambled Sobol candidates, then coordinate-wise refinement.

    The refinement cycles through the coordinates, trying a step up and down
    and keeping improvements; the step halves after every full sweep.
    """
    d = model.dim
    cand = qmc.Sobol(d, scramble=True, seed=seed).random(n_candidates)
    acq = model.ucb(cand, beta)
    best = cand[int(np.argmax(acq))].copy()
    best_val = float(np.max(acq))
    step = 0.05
    for it in range(n_refine):
        i = it % d
        if it and i == 0:
            step *= 0.5
        trial = np.repeat(best[None], 2, axis=0)
        trial[0, i] = min(1.0, best[i] + step)
        trial[1, i] = max(0.0, best[i] - step)
        vals = model.ucb(trial, beta)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best, best_val = trial[j], float(vals[j])
    return best
