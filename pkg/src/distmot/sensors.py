"""TOA/DOA sensor models, unscented measurement updates, and simulation.

Sensors measure either range (TOA, meters) or bearing (DOA, radians in
(-pi, pi]) from a fixed planar position; the kinematic state is
[px, vx, py, vy]. Measurement updates are unscented (the sensor functions
are non-linear); bearing residuals are wrapped. Clutter is Poisson with a
uniform spatial distribution over the sensor's measurement space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gm import LOG_2PI, Gaussian, GaussianMixture, symmetrize

TWO_PI = 2.0 * math.pi


class DegenerateGeometryError(ValueError):
    """Bearing is undefined for an object at the sensor position."""


class InnovationError(ValueError):
    """Non-positive innovation variance; the caller should drop the component."""


def wrap_angle(a):
    """Wrap into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(a) == 0 else w


def angle_residual(a, b):
    return wrap_angle(np.asarray(a) - np.asarray(b))


@dataclass(frozen=True)
class UtParams:
    """Unscented-transform spread parameters; kappa defaults to 3 - d."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None

    def weights(self, d: int):
        kappa = self.kappa if self.kappa is not None else 3.0 - d
        lam = self.alpha**2 * (d + kappa) - d
        if d + lam <= 0:
            raise ValueError(f"sigma-point spread d + lambda = {d + lam} must be positive")
        wm = np.full(2 * d + 1, 0.5 / (d + lam))
        wm[0] = lam / (d + lam)
        wc = wm.copy()
        wc[0] += 1.0 - self.alpha**2 + self.beta
        return lam, wm, wc


DEFAULT_UT = UtParams()


@dataclass(frozen=True, eq=False)
class SensorModel:
    """A single TOA or DOA sensor with clutter and detection models.

    detection_prob is either a constant or a callable (state, label) -> [0, 1].
    measurement_space is the (lo, hi) support of the uniform clutter density.
    """

    kind: str
    position: tuple[float, float]
    noise_std: float
    clutter_rate: float
    detection_prob: float | Callable
    measurement_space: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("toa", "doa"):
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be non-negative")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    @property
    def angular(self) -> bool:
        return self.kind == "doa"

    def h(self, states: np.ndarray) -> np.ndarray:
        """Measurement function on one state (4,) or a batch (n, 4)."""
        s = np.atleast_2d(np.asarray(states, dtype=float))
        dx = s[:, 0] - self.position[0]
        dy = s[:, 2] - self.position[1]
        if self.kind == "toa":
            out = np.hypot(dx, dy)
        else:
            if np.any((dx == 0.0) & (dy == 0.0)):
                raise DegenerateGeometryError(f"object at DOA sensor position {self.position}")
            out = wrap_angle(np.arctan2(dy, dx))
        return float(out[0]) if np.ndim(states) == 1 else out

    def clutter_intensity(self, z: float) -> float:
        lo, hi = self.measurement_space
        if lo < z <= hi or (z == lo and not self.angular):
            return self.clutter_rate / (hi - lo)
        return 0.0


def make_toa(position, noise_std=100.0, clutter_rate=0.0, detection_prob=0.99, r_max=70711.0) -> SensorModel:
    return SensorModel("toa", tuple(position), noise_std, clutter_rate, detection_prob, (0.0, r_max))


def make_doa(position, noise_std=math.radians(1.0), clutter_rate=0.0, detection_prob=0.99) -> SensorModel:
    return SensorModel("doa", tuple(position), noise_std, clutter_rate, detection_prob, (-math.pi, math.pi))


def measure(sensor: SensorModel, state: np.ndarray) -> float:
    return sensor.h(state)


def sigma_points(mean: np.ndarray, cov: np.ndarray, ut: UtParams = DEFAULT_UT):
    d = mean.size
    lam, wm, wc = ut.weights(d)
    scale = np.linalg.cholesky(symmetrize(cov) * (d + lam))
    pts = np.empty((2 * d + 1, d))
    pts[0] = mean
    pts[1 : d + 1] = mean + scale.T
    pts[d + 1 :] = mean - scale.T
    return pts, wm, wc


def unscented_update_fn(
    prior: Gaussian,
    z: float,
    h: Callable[[np.ndarray], np.ndarray],
    noise_var: float,
    angular: bool = False,
    ut: UtParams = DEFAULT_UT,
) -> tuple[Gaussian, float]:
    """Unscented measurement update against a scalar measurement function."""
    pts, wm, wc = sigma_points(prior.mean, prior.cov, ut)
    hv = np.asarray(h(pts), dtype=float)
    if angular:
        # avoid averaging across the +-pi seam: fold about the central point
        hv = hv[0] + angle_residual(hv, hv[0])
    z_pred = float(wm @ hv)
    dz = hv - z_pred
    s = float(wc @ (dz * dz)) + noise_var
    if s <= 0:
        raise InnovationError(f"innovation variance {s} <= 0")
    cross = (wc[:, None] * (pts - prior.mean)).T @ dz
    gain = cross / s
    resid = angle_residual(z, z_pred) if angular else z - z_pred
    post_mean = prior.mean + gain * resid
    post_cov = symmetrize(prior.cov - np.outer(gain, gain) * s)
    log_lik = -0.5 * (LOG_2PI + math.log(s) + resid * resid / s)
    return Gaussian(post_mean, post_cov), float(log_lik)


def unscented_update(prior: Gaussian, z: float, sensor: SensorModel, ut: UtParams = DEFAULT_UT):
    """Sensor-model wrapper; DOA residuals are wrapped into (-pi, pi]."""
    return unscented_update_fn(prior, z, sensor.h, sensor.noise_std**2, sensor.angular, ut)


def unscented_update_mixture(
    gm: GaussianMixture,
    zs: np.ndarray,
    h: Callable[[np.ndarray], np.ndarray],
    noise_var: float,
    angular: bool = False,
    ut: UtParams = DEFAULT_UT,
):
    """Batched unscented update of every component against every measurement.

    Returns (log_lik (n, nz), post_means (n, nz, d), post_covs (n, d, d),
    valid (n,)); the posterior covariance does not depend on the measurement
    value. Components whose innovation variance fails are flagged invalid.
    """
    n, d = gm.n_components, gm.dim
    zs = np.asarray(zs, dtype=float)
    nz = zs.size
    lam, wm, wc = ut.weights(d)
    try:
        scale = np.linalg.cholesky(symmetrize(gm.covs) * (d + lam))
    except np.linalg.LinAlgError:
        # retry per component so one bad covariance does not sink the batch
        scale = np.zeros((n, d, d))
        bad = np.zeros(n, dtype=bool)
        for i in range(n):
            try:
                scale[i] = np.linalg.cholesky(symmetrize(gm.covs[i]) * (d + lam))
            except np.linalg.LinAlgError:
                bad[i] = True
        if bad.all():
            return (
                np.full((n, nz), -np.inf),
                np.tile(gm.means[:, None, :], (1, nz, 1)),
                gm.covs.copy(),
                ~bad,
            )
    else:
        bad = np.zeros(n, dtype=bool)

    pts = np.empty((n, 2 * d + 1, d))
    pts[:, 0] = gm.means
    pts[:, 1 : d + 1] = gm.means[:, None, :] + np.swapaxes(scale, 1, 2)
    pts[:, d + 1 :] = gm.means[:, None, :] - np.swapaxes(scale, 1, 2)

    hv = np.asarray(h(pts.reshape(-1, d)), dtype=float).reshape(n, 2 * d + 1)
    if angular:
        hv = hv[:, :1] + angle_residual(hv, hv[:, :1])
    z_pred = hv @ wm
    dz = hv - z_pred[:, None]
    s = (dz * dz) @ wc + noise_var
    bad |= s <= 0
    s = np.where(bad, 1.0, s)

    cross = np.einsum("k,nkd,nk->nd", wc, pts - gm.means[:, None, :], dz)
    gain = cross / s[:, None]
    if angular:
        resid = angle_residual(zs[None, :], z_pred[:, None])
    else:
        resid = zs[None, :] - z_pred[:, None]
    post_means = gm.means[:, None, :] + gain[:, None, :] * resid[:, :, None]
    post_covs = symmetrize(gm.covs - np.einsum("ni,nj->nij", gain, gain) * s[:, None, None])
    log_lik = -0.5 * (LOG_2PI + np.log(s)[:, None] + resid * resid / s[:, None])
    log_lik[bad] = -np.inf
    return log_lik, post_means, post_covs, ~bad


def expected_value_mixture(gm: GaussianMixture, fn: Callable, ut: UtParams = DEFAULT_UT) -> np.ndarray:
    """Per-component unscented expectation of fn(state) over a mixture."""
    n, d = gm.n_components, gm.dim
    lam, wm, _ = ut.weights(d)
    scale = np.linalg.cholesky(symmetrize(gm.covs) * (d + lam))
    pts = np.empty((n, 2 * d + 1, d))
    pts[:, 0] = gm.means
    pts[:, 1 : d + 1] = gm.means[:, None, :] + np.swapaxes(scale, 1, 2)
    pts[:, d + 1 :] = gm.means[:, None, :] - np.swapaxes(scale, 1, 2)
    vals = np.asarray(fn(pts.reshape(-1, d)), dtype=float).reshape(n, 2 * d + 1)
    return vals @ wm


def simulate_measurements(truth: list, sensor: SensorModel, rng: np.random.Generator) -> np.ndarray:
    """Detections (in truth order) followed by Poisson clutter.

    truth is a list of (label, state) pairs. Each object is detected with
    probability P_D(state, label); detections are h(state) plus Gaussian
    noise (bearings re-wrapped). Clutter locations are uniform over the
    measurement space.
    """
    out = []
    for label, state in truth:
        pd = sensor.detection_prob
        if callable(pd):
            pd = pd(np.asarray(state, dtype=float), label)
        if rng.random() < pd:
            z = sensor.h(np.asarray(state, dtype=float)) + rng.normal(scale=sensor.noise_std)
            out.append(wrap_angle(z) if sensor.angular else z)
    lo, hi = sensor.measurement_space
    n_clutter = rng.poisson(sensor.clutter_rate)
    out.extend(rng.uniform(lo, hi, size=n_clutter).tolist())
    return np.array(out, dtype=float)


def clutter_intensity(sensor: SensorModel, z: float) -> float:
    return sensor.clutter_intensity(z)
