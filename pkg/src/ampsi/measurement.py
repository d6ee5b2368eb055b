"""Measurement operators: dense Gaussian matrices and pilot-convolution Toeplitz.

Both variants expose the same apply / apply_adjoint interface so the AMP
engine never needs to know which one it is running against.  Columns have
unit norm in expectation: dense entries are N(0, 1/m), and the Toeplitz
operator convolves with a pilot of +-1/sqrt(len(pilot)) entries, so each of
its columns has norm exactly one.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve


@dataclass
class Measurements:
    """Observed vector y together with the noise level that produced it."""

    y: np.ndarray
    sigma_z: float


@dataclass
class MeasurementOperator:
    """Linear map R^n -> R^m with an explicit adjoint.

    kind is "dense" (matrix stored explicitly) or "toeplitz" (pilot-sequence
    linear convolution; the matrix is never materialized).
    """

    kind: str
    m: int
    n: int
    matrix: np.ndarray | None = None
    pilot: np.ndarray | None = None
    _pilot_rev: np.ndarray | None = field(default=None, repr=False)

    @property
    def delta(self):
        """Sampling ratio m/n."""
        return self.m / self.n

    def apply(self, x):
        """Forward map A @ x."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected input of shape ({self.n},), got {x.shape}")
        if self.kind == "dense":
            return self.matrix @ x
        return fftconvolve(self.pilot, x, mode="full")

    def apply_adjoint(self, r):
        """Adjoint map A.T @ r."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.m,):
            raise ValueError(f"expected input of shape ({self.m},), got {r.shape}")
        if self.kind == "dense":
            return self.matrix.T @ r
        # correlation of the residual with the pilot at lags 0..n-1
        return fftconvolve(r, self._pilot_rev, mode="valid")

    def materialize(self):
        """Return the explicit m x n matrix (test/diagnostic use)."""
        if self.kind == "dense":
            return self.matrix
        cols = np.zeros((self.m, self.n))
        for j in range(self.n):
            cols[j:j + len(self.pilot), j] = self.pilot
        return cols


def make_dense(m, n, seed=None):
    """Dense i.i.d. N(0, 1/m) operator; expected squared column norm 1."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((m, n)) / np.sqrt(m)
    return MeasurementOperator(kind="dense", m=m, n=n, matrix=mat)


def make_toeplitz(pilot_len, n, seed=None):
    """Pilot-convolution operator: y = conv(pilot, x), full linear convolution.

    The pilot has i.i.d. +-1/sqrt(pilot_len) entries, so m = pilot_len + n - 1
    and every column of the implied Toeplitz matrix has unit norm.
    """
    if pilot_len < 1 or n < 1:
        raise ValueError("pilot_len and n must be positive")
    rng = np.random.default_rng(seed)
    signs = np.where(rng.random(pilot_len) < 0.5, 1.0, -1.0)
    pilot = signs / np.sqrt(pilot_len)
    return MeasurementOperator(kind="toeplitz", m=pilot_len + n - 1, n=n,
                               pilot=pilot, _pilot_rev=pilot[::-1].copy())


def measure(op: MeasurementOperator, x, sigma_z, seed=None):
    """Push x through the operator and add N(0, sigma_z^2) noise."""
    if sigma_z < 0:
        raise ValueError("sigma_z must be nonnegative")
    clean = op.apply(x)
    if sigma_z == 0:
        return Measurements(y=clean, sigma_z=0.0)
    rng = np.random.default_rng(seed)
    return Measurements(y=clean + sigma_z * rng.standard_normal(op.m),
                        sigma_z=sigma_z)
