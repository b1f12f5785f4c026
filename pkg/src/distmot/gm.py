"""Gaussian and Gaussian-mixture algebra.

All mixture weights live in the log domain and are combined with
log-sum-exp; the pairwise geometric-mean fusion of two mixtures with
exponents (w, 1-w) multiplies every cross pair of components, so linear
weights underflow quickly on a 4-D state space.

Conventions:
- a Gaussian power integrates in closed form,
      N(x; m, P)^w = beta(w, P) * N(x; m, P / w),
      beta(w, P) = det(2*pi*P/w)^(1/2) / det(2*pi*P)^(w/2)
- the geometric mean of two Gaussians is the covariance-intersection
  Gaussian, i.e. the weighted arithmetic mean of the information pairs
  (P^-1, P^-1 m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def logsumexp(a, axis=None):
    """log(sum(exp(a))); lean replacement for the scipy version (hot path)."""
    a = np.asarray(a, dtype=float)
    if axis is None:
        if a.size == 0:
            return -np.inf
        m = float(np.max(a))
        if not math.isfinite(m):
            return m
        return m + math.log(float(np.sum(np.exp(a - m))))
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(a - safe), axis=axis)
    out = np.full(s.shape, -np.inf)
    pos = s > 0
    out[pos] = np.log(s[pos]) + np.squeeze(safe, axis=axis)[pos]
    return out

# Relative floor on the smallest covariance eigenvalue.
PD_RTOL = 1e-12


class PositiveDefiniteError(ValueError):
    """Covariance is not symmetric positive-definite within tolerance."""


class DegenerateExponentError(ValueError):
    """Chernoff exponent of 0 or 1 makes a beta factor undefined."""


class EmptyFusionError(ValueError):
    """Every pairwise fusion weight underflowed to zero."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(A + A^T) / 2, batched over leading axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_pd(cov: np.ndarray, what: str = "covariance") -> None:
    eig = np.linalg.eigvalsh(symmetrize(cov))
    if eig[..., -1].min() <= 0.0 or (eig[..., 0] < PD_RTOL * eig[..., -1]).any():
        raise PositiveDefiniteError(
            f"{what} is not positive-definite within tolerance "
            f"(eigenvalue range {eig.min():.3e}..{eig.max():.3e})"
        )


def _frozen_array(x, shape=None) -> np.ndarray:
    a = np.array(x, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Single Gaussian with mean (d,) and symmetric PD covariance (d,d)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.isfinite(mean).all() or not np.isfinite(cov).all():
            raise ValueError("Gaussian parameters must be finite")
        cov = symmetrize(cov)
        check_pd(cov)
        cov.setflags(write=False)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        return gaussian_logpdf(np.asarray(x, dtype=float), self.mean, self.cov)


@dataclass(frozen=True, eq=False)
class InformationPair:
    """Natural-parameter form (P^-1, P^-1 m) of a Gaussian."""

    info_matrix: np.ndarray
    info_vector: np.ndarray

    def __post_init__(self):
        m = symmetrize(np.array(self.info_matrix, dtype=float))
        v = np.array(self.info_vector, dtype=float).reshape(-1)
        if m.shape != (v.size, v.size):
            raise ValueError("information matrix/vector shapes disagree")
        m.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "info_matrix", m)
        object.__setattr__(self, "info_vector", v)

    @classmethod
    def from_gaussian(cls, g: Gaussian) -> "InformationPair":
        info = np.linalg.inv(g.cov)
        return cls(info, info @ g.mean)

    def to_gaussian(self) -> Gaussian:
        cov = np.linalg.inv(self.info_matrix)
        return Gaussian(cov @ self.info_vector, cov)


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """log N(x; mean, cov); x may be (d,) or (m, d)."""
    d = mean.size
    sign, logdet = np.linalg.slogdet(symmetrize(cov))
    if sign <= 0:
        raise PositiveDefiniteError("covariance has non-positive determinant")
    dx = np.atleast_2d(x) - mean
    sol = np.linalg.solve(cov, dx.T).T
    quad = np.einsum("ij,ij->i", dx, sol)
    out = -0.5 * (d * LOG_2PI + logdet + quad)
    return out[0] if np.ndim(x) == 1 else out


def gaussian_product(a: Gaussian, b: Gaussian) -> Gaussian:
    """Normalized pointwise product (the + of information pairs)."""
    ia, ib = InformationPair.from_gaussian(a), InformationPair.from_gaussian(b)
    return InformationPair(ia.info_matrix + ib.info_matrix, ia.info_vector + ib.info_vector).to_gaussian()


def gaussian_power(g: Gaussian, alpha: float) -> Gaussian:
    """Normalized power p^alpha, alpha > 0 (information pair scaled by alpha)."""
    if alpha <= 0:
        raise ValueError("power exponent must be positive")
    return Gaussian(g.mean, g.cov / alpha)


def gaussian_ci(a: Gaussian, b: Gaussian, omega: float) -> Gaussian:
    """Covariance intersection: weighted arithmetic mean of information pairs.

    Returns the Gaussian with covariance [w*Pa^-1 + (1-w)*Pb^-1]^-1 and the
    correspondingly averaged mean.
    """
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must be in [0, 1], got {omega}")
    ia, ib = InformationPair.from_gaussian(a), InformationPair.from_gaussian(b)
    info = omega * ia.info_matrix + (1.0 - omega) * ib.info_matrix
    vec = omega * ia.info_vector + (1.0 - omega) * ib.info_vector
    return InformationPair(info, vec).to_gaussian()


def log_beta(omega: float, cov: np.ndarray) -> float:
    """log of the Gaussian-power normalizer beta(w, P); batched over leading axes."""
    d = cov.shape[-1]
    sign, logdet = np.linalg.slogdet(symmetrize(cov))
    if np.any(sign <= 0):
        raise PositiveDefiniteError("covariance has non-positive determinant in beta factor")
    return 0.5 * (1.0 - omega) * (d * LOG_2PI + logdet) - 0.5 * d * math.log(omega)


def chernoff_weight(a: Gaussian, b: Gaussian, log_alpha_a: float, log_alpha_b: float, omega: float) -> float:
    """Log weight of the fused component for the pair (a, b) at exponent omega.

    log alpha_bar = w*log(alpha_a) + (1-w)*log(alpha_b)
                    + log beta(w, Pa) + log beta(1-w, Pb)
                    + log N(mu_a - mu_b; 0, Pa/w + Pb/(1-w))
    """
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must be in [0, 1], got {omega}")
    if omega in (0.0, 1.0):
        raise DegenerateExponentError("chernoff_weight undefined at omega in {0, 1}; caller must special-case")
    sep_cov = a.cov / omega + b.cov / (1.0 - omega)
    return (
        omega * log_alpha_a
        + (1.0 - omega) * log_alpha_b
        + log_beta(omega, a.cov)
        + log_beta(1.0 - omega, b.cov)
        + float(gaussian_logpdf(a.mean - b.mean, np.zeros(a.dim), sep_cov))
    )


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted Gaussian sum stored as stacked arrays.

    log_w: (n,), means: (n, d), covs: (n, d, d). A normalized mixture has
    logsumexp(log_w) == 0. n == 0 (empty mixture) is allowed.
    """

    log_w: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        lw = np.atleast_1d(np.array(self.log_w, dtype=float))
        mu = np.array(self.means, dtype=float)
        cv = np.array(self.covs, dtype=float)
        if lw.ndim != 1:
            raise ValueError("log_w must be 1-D")
        n = lw.size
        if n == 0:
            d0 = mu.shape[1] if mu.ndim == 2 else (cv.shape[-1] if cv.ndim == 3 else 0)
            mu = mu.reshape(0, d0)
            cv = cv.reshape(0, d0, d0)
        if mu.ndim != 2 or mu.shape[0] != n:
            raise ValueError(f"means shape {mu.shape} does not match {n} components")
        d = mu.shape[1]
        if cv.shape != (n, d, d):
            raise ValueError(f"covs shape {cv.shape}, expected {(n, d, d)}")
        if not np.isfinite(mu).all() or not np.isfinite(cv).all():
            raise ValueError("mixture parameters must be finite")
        if np.isnan(lw).any() or (lw == np.inf).any():
            raise ValueError("log weights must be < inf and not NaN")
        cv = symmetrize(cv)
        for a in (lw, mu, cv):
            a.setflags(write=False)
        object.__setattr__(self, "log_w", lw)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cv)
        object.__setattr__(self, "_log_total", logsumexp(lw))

    @classmethod
    def _raw(cls, log_w, means, covs, log_total=None) -> "GaussianMixture":
        """Trusted constructor for internal hot paths: arrays are adopted
        as-is (float64, covariances already symmetric), no validation."""
        self = object.__new__(cls)
        object.__setattr__(self, "log_w", log_w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "_log_total", logsumexp(log_w) if log_total is None else log_total)
        return self

    @classmethod
    def single(cls, g: Gaussian, log_w: float = 0.0) -> "GaussianMixture":
        return cls(np.array([log_w]), g.mean[None, :], g.cov[None, :, :])

    @classmethod
    def from_components(cls, components: Iterable[tuple[float, Gaussian]]) -> "GaussianMixture":
        comps = list(components)
        if not comps:
            raise ValueError("from_components needs at least one component; use empty()")
        lw = np.array([c[0] for c in comps])
        mu = np.stack([c[1].mean for c in comps])
        cv = np.stack([c[1].cov for c in comps])
        return cls(lw, mu, cv)

    @classmethod
    def empty(cls, dim: int) -> "GaussianMixture":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)))

    @property
    def n_components(self) -> int:
        return self.log_w.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def components(self) -> Iterator[tuple[float, Gaussian]]:
        for i in range(self.n_components):
            yield float(self.log_w[i]), Gaussian(self.means[i], self.covs[i])

    def total_log_weight(self) -> float:
        return self._log_total

    def is_normalized(self, atol: float = 1e-9) -> bool:
        return self.n_components > 0 and abs(self.total_log_weight()) <= atol

    def normalized(self) -> "GaussianMixture":
        if self.n_components == 0:
            raise ValueError("cannot normalize an empty mixture")
        if not math.isfinite(self._log_total):
            raise ValueError("cannot normalize a zero-mass mixture")
        return GaussianMixture._raw(self.log_w - self._log_total, self.means, self.covs, 0.0)

    def scaled(self, log_factor: float) -> "GaussianMixture":
        return GaussianMixture(self.log_w + log_factor, self.means, self.covs)

    def pdf(self, x) -> np.ndarray:
        """Mixture density at x; x may be scalar-state (m, d) or (d,)."""
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        if self.n_components == 0:
            out = np.zeros(xs.shape[0])
            return out[0] if np.ndim(x) == 1 else out
        per = np.stack([self.log_w[i] + gaussian_logpdf(xs, self.means[i], self.covs[i]) for i in range(self.n_components)])
        out = np.exp(logsumexp(per, axis=0))
        return out[0] if np.ndim(x) == 1 else out

    def mean(self) -> np.ndarray:
        w = np.exp(self.log_w - self.total_log_weight())
        return w @ self.means

    def covariance(self) -> np.ndarray:
        w = np.exp(self.log_w - self.total_log_weight())
        m = w @ self.means
        dx = self.means - m
        return np.einsum("i,ijk->jk", w, self.covs) + np.einsum("i,ij,ik->jk", w, dx, dx)

    def argmax_component(self) -> int:
        """Index of the heaviest component (first on ties)."""
        return int(np.argmax(self.log_w))


def gm_key(p: GaussianMixture) -> tuple:
    """Content key for memoizing per-pdf computations; cached on the object."""
    try:
        return object.__getattribute__(p, "_content_key")
    except AttributeError:
        key = (p.log_w.tobytes(), p.means.tobytes(), p.covs.tobytes())
        object.__setattr__(p, "_content_key", key)
        return key


def gm_allclose(a: GaussianMixture, b: GaussianMixture, atol: float = 1e-9) -> bool:
    return (
        a.n_components == b.n_components
        and np.allclose(a.log_w, b.log_w, atol=atol)
        and np.allclose(a.means, b.means, atol=atol)
        and np.allclose(a.covs, b.covs, atol=atol)
    )


def gm_merge_prune_cap(
    p: GaussianMixture,
    merge_thresh: float,
    trunc_thresh: float,
    max_components: int,
) -> GaussianMixture:
    """Prune light components, merge near ones, cap the count, renormalize.

    merge_thresh is the squared-Mahalanobis gate, measured in the metric of
    the heavier (pivot) component of each cluster. Merging is
    moment-preserving. Cap-by-weight ties keep the earlier component.
    """
    if p.n_components == 0:
        return p
    if p.n_components == 1:
        return p if p.log_w[0] == 0.0 else p.normalized()
    w = np.exp(p.log_w - p.total_log_weight())

    order = np.argsort(-w, kind="stable")
    order = order[(w[order] >= trunc_thresh) & (w[order] > 0.0)]
    if order.size == 0:
        order = np.array([int(np.argmax(w))])
    means, covs, ws = p.means[order], p.covs[order], w[order]  # heaviest first

    merged: list[tuple[float, np.ndarray, np.ndarray]] = []
    alive = np.ones(order.size, dtype=bool)
    for i in range(order.size):
        if not alive[i]:
            continue
        idx = np.flatnonzero(alive)
        dx = means[idx] - means[i]
        sol = np.linalg.solve(covs[i], dx.T).T
        d2 = np.einsum("ij,ij->i", dx, sol)
        cluster = idx[d2 <= merge_thresh]
        cw = ws[cluster]
        tot = cw.sum()
        mu = (cw @ means[cluster]) / tot
        dmu = means[cluster] - mu
        cov = ((cw[:, None, None] * covs[cluster]).sum(axis=0) + (cw[:, None] * dmu).T @ dmu) / tot
        merged.append((tot, mu, cov))
        alive[cluster] = False

    if len(merged) > max_components:
        cluster_w = np.array([m[0] for m in merged])
        top = np.sort(np.argsort(-cluster_w, kind="stable")[:max_components])
        merged = [merged[i] for i in top]

    tot = sum(m[0] for m in merged)
    lw = np.log(np.array([m[0] / tot for m in merged]))
    mu = np.stack([m[1] for m in merged])
    cv = np.stack([m[2] for m in merged])
    return GaussianMixture._raw(lw, mu, cv, 0.0)


def _single_pair_chernoff(p_a: GaussianMixture, p_b: GaussianMixture, omega: float):
    """Closed-form fusion of two single-Gaussian mixtures (exact)."""
    d = p_a.dim
    pa, pb = p_a.covs[0], p_b.covs[0]
    ia, ib = np.linalg.inv(pa), np.linalg.inv(pb)
    cov = symmetrize(np.linalg.inv(omega * ia + (1.0 - omega) * ib))
    mean = cov @ (omega * (ia @ p_a.means[0]) + (1.0 - omega) * (ib @ p_b.means[0]))
    sep = pa / omega + pb / (1.0 - omega)
    dmu = p_a.means[0] - p_b.means[0]
    sign_a, logdet_a = np.linalg.slogdet(pa)
    sign_b, logdet_b = np.linalg.slogdet(pb)
    sign_s, logdet_s = np.linalg.slogdet(sep)
    if min(sign_a, sign_b, sign_s) <= 0:
        raise PositiveDefiniteError("covariance has non-positive determinant in pairwise fusion")
    log_mass = (
        omega * p_a.log_w[0]
        + (1.0 - omega) * p_b.log_w[0]
        + 0.5 * (1.0 - omega) * (d * LOG_2PI + logdet_a)
        - 0.5 * d * math.log(omega)
        + 0.5 * omega * (d * LOG_2PI + logdet_b)
        - 0.5 * d * math.log(1.0 - omega)
        - 0.5 * (d * LOG_2PI + logdet_s + dmu @ np.linalg.solve(sep, dmu))
    )
    return GaussianMixture._raw(np.zeros(1), mean[None, :], cov[None, :, :], 0.0), float(log_mass)


def _pairwise_chernoff(p_a: GaussianMixture, p_b: GaussianMixture, omega: float):
    """All-pairs fused components and log weights for exponents (w, 1-w)."""
    na, nb, d = p_a.n_components, p_b.n_components, p_a.dim
    ia = np.linalg.inv(symmetrize(p_a.covs))
    ib = np.linalg.inv(symmetrize(p_b.covs))
    info = omega * ia[:, None] + (1.0 - omega) * ib[None, :]
    cov = symmetrize(np.linalg.inv(info))
    vec = omega * np.einsum("ijk,ik->ij", ia, p_a.means)[:, None, :] + (1.0 - omega) * np.einsum(
        "ijk,ik->ij", ib, p_b.means
    )[None, :, :]
    mean = np.einsum("abjk,abk->abj", cov, vec)

    lb_a = log_beta(omega, p_a.covs)       # (na,)
    lb_b = log_beta(1.0 - omega, p_b.covs)  # (nb,)
    sep = p_a.covs[:, None] / omega + p_b.covs[None, :] / (1.0 - omega)
    dmu = p_a.means[:, None, :] - p_b.means[None, :, :]
    sign, logdet = np.linalg.slogdet(symmetrize(sep))
    if np.any(sign <= 0):
        raise PositiveDefiniteError("separation covariance not positive-definite")
    quad = np.einsum("abj,abj->ab", dmu, np.linalg.solve(sep, dmu[..., None])[..., 0])
    log_sep = -0.5 * (d * LOG_2PI + logdet + quad)
    log_alpha = (
        omega * p_a.log_w[:, None]
        + (1.0 - omega) * p_b.log_w[None, :]
        + lb_a[:, None]
        + lb_b[None, :]
        + log_sep
    )
    return log_alpha.reshape(na * nb), mean.reshape(na * nb, d), cov.reshape(na * nb, d, d)


def gm_chernoff_pair(
    p_a: GaussianMixture,
    p_b: GaussianMixture,
    omega: float,
    merge_thresh: float | None = None,
) -> tuple[GaussianMixture, float]:
    """Geometric-mean fusion p_a^w * p_b^(1-w) approximated component-pairwise.

    Returns the normalized fused mixture and the log of the pre-normalization
    mass, i.e. the mixture approximation of log integral(p_a^w p_b^(1-w)).
    Exponents 0 and 1 short-circuit to the corresponding input with zero
    log-mass. When merge_thresh is given, each input is merged first; close
    components degrade the pairwise approximation.
    """
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must be in [0, 1], got {omega}")
    if p_a.n_components == 0 or p_b.n_components == 0:
        raise ValueError("fusion inputs must be nonempty mixtures")
    if omega == 0.0:
        return p_b, 0.0
    if omega == 1.0:
        return p_a, 0.0
    if merge_thresh is not None:
        p_a = gm_merge_prune_cap(p_a, merge_thresh, 0.0, p_a.n_components)
        p_b = gm_merge_prune_cap(p_b, merge_thresh, 0.0, p_b.n_components)
    if p_a.n_components == 1 and p_b.n_components == 1:
        return _single_pair_chernoff(p_a, p_b, omega)
    log_alpha, mean, cov = _pairwise_chernoff(p_a, p_b, omega)
    finite = np.isfinite(log_alpha)
    if not finite.any():
        raise EmptyFusionError("all pairwise fusion weights underflowed")
    log_alpha, mean, cov = log_alpha[finite], mean[finite], cov[finite]
    log_mass = float(logsumexp(log_alpha))
    return GaussianMixture._raw(log_alpha - log_mass, mean, cov, 0.0), log_mass


def gm_chernoff_multi(
    inputs: list[tuple[GaussianMixture, float]],
    merge_thresh: float | None = None,
    inputs_reduced: bool = False,
) -> tuple[GaussianMixture, float]:
    """Weighted geometric mean of several mixtures by folded pairwise fusion.

    inputs is a list of (mixture, weight) with non-negative weights summing
    to 1. Sequentially fuses with renormalized exponents; the accumulated
    log normalizer is sum_i W_i * log eta_i with W_i the cumulative weight,
    which telescopes to log integral(prod p_i^w_i). A single input is
    returned unchanged with zero log-mass.

    With merge_thresh set, close components are merged before every pairwise
    step; inputs_reduced promises the inputs are already merged at that
    threshold so only the fold accumulator needs re-merging.
    """
    if not inputs:
        raise ValueError("need at least one fusion input")
    weights = np.array([w for _, w in inputs], dtype=float)
    if (weights < 0).any():
        raise ValueError("fusion weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"fusion weights must sum to 1, got {weights.sum()!r}")
    if merge_thresh is not None and not inputs_reduced:
        inputs = [
            (gm_merge_prune_cap(p, merge_thresh, 0.0, p.n_components) if p.n_components > 1 else p, w)
            for p, w in inputs
        ]
    acc, w_acc = inputs[0]
    log_norm = 0.0
    acc_is_fused = False
    for p, w in inputs[1:]:
        w_new = w_acc + w
        if w_new == 0.0:
            continue
        if merge_thresh is not None and acc_is_fused and acc.n_components > 1:
            acc = gm_merge_prune_cap(acc, merge_thresh, 0.0, acc.n_components)
        acc, log_eta = gm_chernoff_pair(acc, p, w_acc / w_new)
        acc_is_fused = True
        log_norm += w_new * log_eta
        w_acc = w_new
    return acc, log_norm
