"""Independent reference computations used by the test suite."""

import itertools

import numpy as np

from dvbtrack.models import GaussianBelief, SensorModel
from dvbtrack.scenario import MeasurementBatch


def textbook_kalman(mean, cov, y, R, H):
    """Predicted-to-posterior update in the plain ``(I - KH)P`` form."""
    S = H @ cov @ H.T + R
    K = cov @ H.T @ np.linalg.inv(S)
    return mean + K @ (y - H @ mean), (np.eye(len(mean)) - K @ H) @ cov


def information_update(mean, cov, y, R, H):
    """Same update by adding precisions."""
    P_inv = np.linalg.inv(cov)
    R_inv = np.linalg.inv(R)
    prec = P_inv + H.T @ R_inv @ H
    post_cov = np.linalg.inv(prec)
    return post_cov @ (P_inv @ mean + H.T @ R_inv @ y), post_cov


def _npdf(pts, mu, C):
    d = pts - mu
    Ci = np.linalg.inv(C)
    return np.exp(-0.5 * np.einsum("...i,ij,...j->...", d, Ci, d)) / (2 * np.pi * np.sqrt(np.linalg.det(C)))


def grid_posterior_mean(prior_pos, prior_pos_cov, ys, R, clutter_rate, target_rate, volume, half=80.0, h=0.1):
    """Exact posterior mean position of one target by enumeration of every association vector.

    The velocity components integrate out, so the grid covers position only.
    """
    g = np.arange(-half, half + h / 2, h)
    X, Y = np.meshgrid(prior_pos[0] + g, prior_pos[1] + g, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    prior = _npdf(pts, prior_pos, prior_pos_cov)
    post = np.zeros_like(prior)
    for theta in itertools.product([0, 1], repeat=len(ys)):
        w = prior.copy()
        for y, t in zip(ys, theta):
            w = w * (clutter_rate / volume if t == 0 else target_rate * _npdf(np.asarray(y), pts, R))
        post += w
    post /= post.sum()
    return np.array([(post * X).sum(), (post * Y).sum()])


# Small single-target instance where both measurements are ambiguous to a different degree.
GRID_PRIOR_MEAN = np.array([0.0, 1.0, 0.0, -1.0])
GRID_PRIOR_COV = np.array(
    [
        [100.0, 20.0, 0.0, 0.0],
        [20.0, 25.0, 0.0, 0.0],
        [0.0, 0.0, 100.0, 20.0],
        [0.0, 0.0, 20.0, 25.0],
    ]
)
GRID_YS = np.array([[3.0, -2.0], [-45.0, 30.0]])
GRID_R = 100.0 * np.eye(2)
GRID_RATES = (100.0, 1.0)
GRID_REGION = (0.0, 1000.0, 0.0, 1000.0)


def grid_instance():
    """Belief, batch and sensor of the grid-oracle instance."""
    sensor = SensorModel(0, list(GRID_RATES), GRID_R[None], GRID_REGION)
    belief = GaussianBelief(GRID_PRIOR_MEAN[None], GRID_PRIOR_COV[None])
    return belief, MeasurementBatch(0, 0, GRID_YS.copy()), sensor


def grid_exact_mean():
    P = GRID_PRIOR_COV[np.ix_([0, 2], [0, 2])]
    return grid_posterior_mean(
        GRID_PRIOR_MEAN[[0, 2]], P, GRID_YS, GRID_R, GRID_RATES[0], GRID_RATES[1], 1e6
    )
