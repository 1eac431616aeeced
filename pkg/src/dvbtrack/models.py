"""Target dynamics, sensor observation model and Gaussian belief algebra.

State layout is ``[x1, vx1, x2, vx2]`` throughout the package. Arrays may carry
leading batch axes (targets, sensors), so ``GaussianBelief.mean`` has shape
``(..., 4)`` and ``GaussianBelief.cov`` has shape ``(..., 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 4
MEAS_DIM = 2
LOG_2PI = float(np.log(2.0 * np.pi))

POSITION_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])


class ParameterError(ValueError):
    """Raised for invalid model parameters."""


class NumericalError(ArithmeticError):
    """Raised when a covariance is singular or not positive definite."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class MotionModel:
    """Constant-velocity motion in two independent coordinates."""

    tau: float
    sigma: float
    F: np.ndarray
    Q: np.ndarray


def build_cv_model(tau: float, sigma: float) -> MotionModel:
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    if sigma < 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    f_block = np.array([[1.0, tau], [0.0, 1.0]])
    q_block = sigma**2 * np.array([[tau**3 / 3.0, tau**2 / 2.0], [tau**2 / 2.0, tau]])
    zero = np.zeros((2, 2))
    F = np.block([[f_block, zero], [zero, f_block]])
    Q = np.block([[q_block, zero], [zero, q_block]])
    return MotionModel(tau=float(tau), sigma=float(sigma), F=F, Q=Q)


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != mean.shape + mean.shape[-1:]:
            raise ParameterError(f"mean shape {mean.shape} does not match cov shape {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def position(self) -> np.ndarray:
        return self.mean[..., [0, 2]]

    def __len__(self) -> int:
        return self.mean.shape[0] if self.mean.ndim > 1 else 1

    def __getitem__(self, idx) -> "GaussianBelief":
        return GaussianBelief(self.mean[idx], self.cov[idx])


@dataclass(frozen=True)
class SensorModel:
    """NHPP sensor: Poisson rates per origin, per-target noise, uniform clutter region.

    ``rates[0]`` is the clutter rate and ``rates[k]`` the rate of target ``k``.
    ``region`` is ``(xmin, xmax, ymin, ymax)``. A sensor whose rates are all
    zero never produces measurements, so a positive total rate is only
    required when association weights are normalized.
    """

    sensor_id: int
    rates: np.ndarray
    noise: np.ndarray
    region: tuple[float, float, float, float]
    H: np.ndarray = field(default_factory=lambda: POSITION_H.copy())

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        noise = np.asarray(self.noise, dtype=float)
        if rates.ndim != 1 or rates.size < 1:
            raise ParameterError("rates must be a (K+1)-vector")
        if np.any(rates < 0):
            raise ParameterError("Poisson rates must be non-negative")
        n_targets = rates.size - 1
        if noise.shape != (n_targets, MEAS_DIM, MEAS_DIM):
            raise ParameterError(f"noise must have shape ({n_targets}, 2, 2), got {noise.shape}")
        if not np.allclose(noise, np.swapaxes(noise, -1, -2)):
            raise ParameterError("noise covariances must be symmetric")
        if n_targets and np.any(np.linalg.eigvalsh(noise)[:, 0] <= 0):
            raise ParameterError("noise covariances must be positive definite")
        xmin, xmax, ymin, ymax = (float(v) for v in self.region)
        if not (xmax > xmin and ymax > ymin):
            raise ParameterError(f"degenerate region {self.region}")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "region", (xmin, xmax, ymin, ymax))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))

    @property
    def n_targets(self) -> int:
        return self.rates.size - 1

    @property
    def clutter_rate(self) -> float:
        return float(self.rates[0])

    @property
    def target_rates(self) -> np.ndarray:
        return self.rates[1:]

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    @property
    def volume(self) -> float:
        xmin, xmax, ymin, ymax = self.region
        return (xmax - xmin) * (ymax - ymin)

    @property
    def noise_inv(self) -> np.ndarray:
        return symmetrize(np.linalg.inv(self.noise))


@dataclass(frozen=True)
class GroundTruthState:
    """True target states; ``states[n, k]`` is the state of target ``k`` at step ``n``.

    ``states[0]`` is the initial state drawn from the spawn distribution.
    """

    states: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    @property
    def n_targets(self) -> int:
        return self.states.shape[1]

    def positions(self, step: int) -> np.ndarray:
        return self.states[step][:, [0, 2]]


def predict(belief: GaussianBelief, model: MotionModel) -> GaussianBelief:
    F = model.F
    mean = belief.mean @ F.T
    cov = F @ belief.cov @ F.T + model.Q
    return GaussianBelief(mean, symmetrize(cov))


def log_gaussian(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log-density of ``N(y; mean, cov)`` with numpy broadcasting over leading axes.

    ``y`` and ``mean`` end in ``(d,)`` and ``cov`` ends in ``(d, d)``.
    """
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance is not positive definite") from exc
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    prec = np.linalg.inv(cov)
    diff = y - mean
    maha = np.einsum("...i,...ij,...j->...", diff, prec, diff)
    d = y.shape[-1]
    return -0.5 * (d * LOG_2PI + logdet + maha)


def gaussian_likelihood(y, mean, cov) -> float | np.ndarray:
    return np.exp(log_gaussian(y, mean, cov))
