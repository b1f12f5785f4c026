"""Local-node filtering: M-delta-GLMB and LMB prediction/update recursions.

The update likelihood per track and association is
    psi_Z(x, l; theta) = P_D(x, l) g(z_theta | x, l) / kappa(z_theta)   theta(l) > 0
                       = 1 - P_D(x, l)                                  theta(l) = 0
and per-hypothesis weights are proportional to the prior weight times the
product of expected psi values over the hypothesis labels. Association maps
come from ranked assignment on the per-track log psi matrix; the posterior
is re-marginalized over maps within each label set after every update, so
no association history index is carried between steps.

Prediction marginalizes the survivor superset sum over prior hypotheses
exactly: each predicted label set mixes the propagated pdfs of every prior
hypothesis that can shrink onto it, weighted by survival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assignment import exhaustive_assignments, ranked_assignments
from .densities import (
    LmbDensity,
    LmbEntry,
    MdGlmbDensity,
    MdGlmbHypothesis,
    cardinality_distribution_lmb,
    cardinality_distribution_mdglmb,
    k_best_bernoulli_subsets,
    lmb_from_mdglmb,
    lmb_to_mdglmb,
)
from .gm import GaussianMixture, gm_key, gm_merge_prune_cap, logsumexp, symmetrize
from .labels import Label, LabelSet
from .sensors import DEFAULT_UT, SensorModel, UtParams, expected_value_mixture, unscented_update_mixture

StateLabelFn = float | Callable  # constant or (states (n,4), label) -> (n,)


class FilterDegeneracyError(RuntimeError):
    """The filter lost every hypothesis; surfaced with step/node context by the harness."""


@dataclass
class UpdateDiagnostics:
    dropped_components: int = 0


@dataclass(frozen=True, eq=False)
class MotionModel:
    """Linear-Gaussian motion with a survival-probability model."""

    transition: np.ndarray
    noise_cov: np.ndarray
    survival_prob: StateLabelFn = 0.99

    def __post_init__(self):
        f = np.array(self.transition, dtype=float)
        q = symmetrize(np.array(self.noise_cov, dtype=float))
        if f.shape != q.shape or f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError("transition and noise matrices must be square and matching")
        if np.linalg.eigvalsh(q).min() < -1e-9:
            raise ValueError("process noise must be positive semi-definite")
        f.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "transition", f)
        object.__setattr__(self, "noise_cov", q)


def ncv_motion_model(sampling_interval: float, accel_noise_std: float, survival_prob: StateLabelFn = 0.99) -> MotionModel:
    """Nearly-constant-velocity model on [px, vx, py, vy]."""
    t = sampling_interval
    f1 = np.array([[1.0, t], [0.0, 1.0]])
    q1 = accel_noise_std**2 * np.array([[t**4 / 4.0, t**3 / 2.0], [t**3 / 2.0, t**2]])
    z = np.zeros((2, 2))
    f = np.block([[f1, z], [z, f1]])
    q = np.block([[q1, z], [z, q1]])
    return MotionModel(f, q, survival_prob)


@dataclass(frozen=True, eq=False)
class BirthEntry:
    index: int
    existence: float
    pdf: GaussianMixture

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0:
            raise ValueError(f"birth existence {self.existence} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class BirthModel:
    """Static birth table instantiated with fresh labels (k, index) every step."""

    entries: tuple[BirthEntry, ...]

    def __post_init__(self):
        idx = [e.index for e in self.entries]
        if len(set(idx)) != len(idx):
            raise ValueError("birth indices must be distinct")
        for i, a in enumerate(self.entries):
            for b in self.entries[i + 1 :]:
                if a.pdf.n_components == b.pdf.n_components and np.array_equal(a.pdf.means, b.pdf.means) and np.array_equal(a.pdf.covs, b.pdf.covs):
                    raise ValueError(f"birth pdfs for indices {a.index} and {b.index} coincide")

    @classmethod
    def empty(cls) -> "BirthModel":
        return cls(())

    def labels_at(self, k: int) -> list[Label]:
        return [Label(k, e.index) for e in self.entries]


@dataclass(frozen=True, eq=False)
class FilterConfig:
    max_hypotheses: int = 1000
    hyp_prune_thresh: float = 0.0
    assignments_per_hypothesis: int = 8
    gm_merge_thresh: float = 4.0
    gm_trunc_thresh: float = 1e-4
    gm_max_components: int = 25
    lmb_prune_thresh: float = 1e-4
    detection_prob: StateLabelFn | None = None  # None: use the sensor's model
    clutter_intensity: Callable | None = None   # None: uniform over the sensor's space
    ut: UtParams = DEFAULT_UT


def _eval_state_fn(fn: StateLabelFn, states: np.ndarray, label: Label) -> np.ndarray:
    """Evaluate a constant-or-callable (state, label) model on a batch of states."""
    if not callable(fn):
        return np.full(states.shape[0], float(fn))
    out = fn(states, label)
    if np.ndim(out) == 0:
        return np.array([float(fn(states[i], label)) for i in range(states.shape[0])])
    return np.asarray(out, dtype=float)


def _lse(values) -> float:
    if isinstance(values, np.ndarray):
        return float(logsumexp(values))
    if not values:
        return -math.inf
    m = max(values)
    if not math.isfinite(m):
        return m
    return m + math.log(sum(math.exp(v - m) for v in values))


def kalman_predict_mixture(gm: GaussianMixture, motion: MotionModel) -> GaussianMixture:
    f, q = motion.transition, motion.noise_cov
    covs = symmetrize(np.matmul(np.matmul(f, gm.covs), f.T)) + q
    return GaussianMixture._raw(gm.log_w.copy(), gm.means @ f.T, covs, gm.total_log_weight())


def _survival_stats(pdf: GaussianMixture, label: Label, motion: MotionModel, ut: UtParams):
    """(per-component survival expectations, overall P_S_bar)."""
    if not callable(motion.survival_prob):
        s = np.full(pdf.n_components, float(motion.survival_prob))
    else:
        s = np.clip(expected_value_mixture(pdf, lambda x: _eval_state_fn(motion.survival_prob, x, label), ut), 0.0, 1.0)
    w = np.exp(pdf.log_w - pdf.total_log_weight())
    return s, float(w @ s)


def _surviving_pdf(pdf: GaussianMixture, s: np.ndarray, ps_bar: float, motion: MotionModel) -> GaussianMixture:
    with np.errstate(divide="ignore"):
        log_w = pdf.log_w + np.log(s) - math.log(ps_bar)
    keep = np.isfinite(log_w)
    pred = kalman_predict_mixture(GaussianMixture._raw(log_w[keep], pdf.means[keep], pdf.covs[keep]), motion)
    return pred


def _mix_contributions(contribs: list[tuple[float, GaussianMixture]]) -> GaussianMixture:
    """Normalized mixture of pdfs weighted by the given log weights."""
    total = _lse([c[0] for c in contribs])
    lw = np.concatenate([p.log_w + (c - total) for c, p in contribs])
    mu = np.concatenate([p.means for _, p in contribs])
    cv = np.concatenate([p.covs for _, p in contribs])
    return GaussianMixture._raw(lw, mu, cv)


def _k_best_products(a: list[float], b: list[float], k: int) -> list[tuple[int, int]]:
    """Index pairs of the k largest a[i] + b[j]; both lists sorted descending."""
    import heapq

    heap = [(-(a[0] + b[0]), 0, 0)]
    seen = {(0, 0)}
    out: list[tuple[int, int]] = []
    while heap and len(out) < k:
        _, i, j = heapq.heappop(heap)
        out.append((i, j))
        for ni, nj in ((i + 1, j), (i, j + 1)):
            if ni < len(a) and nj < len(b) and (ni, nj) not in seen:
                seen.add((ni, nj))
                heapq.heappush(heap, (-(a[ni] + b[nj]), ni, nj))
    return out


def mdglmb_predict(
    posterior: MdGlmbDensity,
    motion: MotionModel,
    birth: BirthModel,
    k: int,
    max_hypotheses: int | None = None,
) -> MdGlmbDensity:
    """Survival/birth prediction of a marginalized delta-GLMB.

    Predicted label sets are unions of a birth subset and a survivor subset;
    survivor weights sum the Bernoulli survival products over every prior
    hypothesis containing the subset, and survivor pdfs mix the matching
    Kalman-predicted pdfs. Output is truncated to max_hypotheses (all kept
    when None) and renormalized.
    """
    birth_labels = birth.labels_at(k)
    posterior_labels = posterior.label_space()
    for bl in birth_labels:
        if bl in posterior_labels:
            raise ValueError(f"birth label {bl} collides with an existing track")

    subset_cap = None if max_hypotheses is None else max(4 * max_hypotheses, 64)

    # survivor part: accumulate weights and pdf contributions per label subset
    surv_w: dict[LabelSet, list[float]] = {}
    surv_pdfs: dict[LabelSet, dict[Label, list[tuple[float, GaussianMixture]]]] = {}
    for h in posterior.hypotheses:
        labels = h.label_set.labels
        ps_bar = np.zeros(len(labels))
        predicted: list[GaussianMixture | None] = [None] * len(labels)
        for i, (lab, pdf) in enumerate(zip(labels, h.pdfs)):
            s, pb = _survival_stats(pdf, lab, motion, DEFAULT_UT)
            ps_bar[i] = pb
            if pb > 0.0:
                predicted[i] = _surviving_pdf(pdf, s, pb, motion)
        for idx, rel_logw in k_best_bernoulli_subsets(ps_bar, subset_cap):
            key = LabelSet(tuple(labels[i] for i in idx))
            logw = h.log_weight + rel_logw
            surv_w.setdefault(key, []).append(logw)
            per_label = surv_pdfs.setdefault(key, {})
            for i in idx:
                per_label.setdefault(labels[i], []).append((logw, predicted[i]))

    surv = sorted(
        ((key, _lse(ws)) for key, ws in surv_w.items()),
        key=lambda t: (-t[1], t[0].labels),
    )

    # birth part
    births = k_best_bernoulli_subsets(np.array([e.existence for e in birth.entries]), subset_cap)
    birth_sets = [
        (LabelSet(tuple(birth_labels[i] for i in idx)), lw, tuple(birth.entries[i].pdf for i in idx))
        for idx, lw in births
    ]

    # combine: weights multiply, label sets union
    if max_hypotheses is None:
        pairs = [(i, j) for i in range(len(surv)) for j in range(len(birth_sets))]
    else:
        pairs = _k_best_products([w for _, w in surv], [w for _, w, _ in birth_sets], 4 * max_hypotheses)

    hyps = []
    pdf_cache: dict[tuple[LabelSet, Label], GaussianMixture] = {}
    for i, j in pairs:
        surv_key, surv_logw = surv[i]
        b_key, b_logw, b_pdfs = birth_sets[j]
        label_set = LabelSet(surv_key.labels + b_key.labels)
        pdfs = []
        for lab in label_set:
            if lab in b_key:
                pdfs.append(b_pdfs[b_key.labels.index(lab)])
            else:
                cached = pdf_cache.get((surv_key, lab))
                if cached is None:
                    cached = _mix_contributions(surv_pdfs[surv_key][lab])
                    pdf_cache[(surv_key, lab)] = cached
                pdfs.append(cached)
        hyps.append(MdGlmbHypothesis(label_set, surv_logw + b_logw, tuple(pdfs)))

    hyps.sort(key=lambda h: (-h.log_weight, h.label_set.labels))
    if max_hypotheses is not None:
        hyps = hyps[:max_hypotheses]
    return MdGlmbDensity.from_unnormalized(hyps)




class _PsiTable:
    """Per-update cache of psi rows keyed by track-pdf content."""

    def __init__(self, Z, sensor: SensorModel, cfg: FilterConfig, diagnostics: UpdateDiagnostics | None):
        self.Z = np.asarray(Z, dtype=float)
        self.sensor = sensor
        self.cfg = cfg
        self.diag = diagnostics
        self.pd = cfg.detection_prob if cfg.detection_prob is not None else sensor.detection_prob
        if cfg.clutter_intensity is not None:
            self.log_kappa = np.array([_safe_log(cfg.clutter_intensity(z)) for z in self.Z])
        else:
            # filter-side clutter model: uniform density over the sensor's
            # measurement space for every received z
            lo, hi = sensor.measurement_space
            dens = sensor.clutter_rate / (hi - lo)
            self.log_kappa = np.full(self.Z.size, _safe_log(dens))
        # kappa -> 0 limit: a measurement no clutter can explain forces an
        # association; keep the ratio finite so map ranking stays ordered
        np.maximum(self.log_kappa, math.log(1e-30), out=self.log_kappa)
        self._rows: dict = {}

    def rows(self, pdf: GaussianMixture, label: Label):
        key = (gm_key(pdf), label if callable(self.pd) else None)
        hit = self._rows.get(key)
        if hit is None:
            hit = self._compute(pdf, label)
            self._rows[key] = hit
        return hit

    def _compute(self, pdf: GaussianMixture, label: Label):
        m = self.Z.size
        log_psi = np.empty(m + 1)
        cond: list[GaussianMixture] = [pdf] * (m + 1)
        alpha = pdf.log_w - pdf.total_log_weight()

        if callable(self.pd):
            pd_vals = np.clip(expected_value_mixture(pdf, lambda x: _eval_state_fn(self.pd, x, label), self.cfg.ut), 0.0, 1.0)
        else:
            pd_vals = np.full(pdf.n_components, float(self.pd))

        with np.errstate(divide="ignore"):
            log_miss = alpha + np.log1p(-np.minimum(pd_vals, 1.0))
        log_psi[0] = _lse(log_miss)
        if callable(self.pd) and np.isfinite(log_psi[0]):
            keep = np.isfinite(log_miss)
            cond[0] = GaussianMixture._raw(log_miss[keep] - log_psi[0], pdf.means[keep], pdf.covs[keep], 0.0)

        if m:
            ll, mus, covs, ok = unscented_update_mixture(
                pdf, self.Z, self.sensor.h, self.sensor.noise_std**2, self.sensor.angular, self.cfg.ut
            )
            if self.diag is not None and not ok.all():
                self.diag.dropped_components += int((~ok).sum())
            with np.errstate(divide="ignore"):
                log_det = alpha[:, None] + np.log(pd_vals)[:, None] + ll  # (n, m)
            for j in range(m):
                tot = _lse(log_det[:, j])
                log_psi[j + 1] = tot - self.log_kappa[j]
                if np.isfinite(tot):
                    keep = np.isfinite(log_det[:, j])
                    cond[j + 1] = GaussianMixture._raw(log_det[keep, j] - tot, mus[keep, j], covs[keep], 0.0)
        return log_psi, cond


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -np.inf


def psi_bar(
    track_pdf: GaussianMixture,
    ell: Label,
    z_index: int,
    Z,
    sensor: SensorModel,
    detection_prob: StateLabelFn | None = None,
    clutter_intensity: Callable | None = None,
    ut: UtParams = DEFAULT_UT,
    diagnostics: UpdateDiagnostics | None = None,
) -> tuple[float, GaussianMixture]:
    """Expected association likelihood and conditioned pdf for one track.

    z_index = 0 is the misdetection branch: returns <1 - P_D, p> with the
    prior pdf reweighted; z_index = j > 0 conditions on measurement Z[j-1]
    through an unscented update of every component.
    """
    cfg = FilterConfig(detection_prob=detection_prob, clutter_intensity=clutter_intensity, ut=ut)
    table = _PsiTable(Z, sensor, cfg, diagnostics)
    log_psi, cond = table.rows(track_pdf, ell)
    return float(log_psi[z_index]), cond[z_index]


def reduce_mdglmb_pdfs(d: MdGlmbDensity, cfg: FilterConfig) -> MdGlmbDensity:
    """Merge/prune/cap every per-label mixture; hypothesis weights unchanged.

    Mixtures shared between hypotheses are reduced once.
    """
    cache: dict[tuple, GaussianMixture] = {}

    def reduce_one(p: GaussianMixture) -> GaussianMixture:
        key = gm_key(p)
        hit = cache.get(key)
        if hit is None:
            hit = gm_merge_prune_cap(p, cfg.gm_merge_thresh, cfg.gm_trunc_thresh, cfg.gm_max_components)
            cache[key] = hit
        return hit

    hyps = [
        MdGlmbHypothesis(h.label_set, h.log_weight, tuple(reduce_one(p) for p in h.pdfs))
        for h in d.hypotheses
    ]
    return MdGlmbDensity(tuple(hyps))


def reduce_lmb_pdfs(d: LmbDensity, cfg: FilterConfig) -> LmbDensity:
    return LmbDensity(
        tuple(
            LmbEntry(e.label, e.existence, gm_merge_prune_cap(e.pdf, cfg.gm_merge_thresh, cfg.gm_trunc_thresh, cfg.gm_max_components))
            for e in d.entries
        )
    )


def lmb_prune(d: LmbDensity, existence_thresh: float, max_tracks: int) -> LmbDensity:
    """Drop negligible tracks and cap the count by existence (label-order ties)."""
    kept = [e for e in d.entries if e.existence >= existence_thresh]
    kept.sort(key=lambda e: (-e.existence, e.label))
    return LmbDensity(tuple(kept[:max_tracks]))


def mdglmb_update(
    predicted: MdGlmbDensity,
    Z,
    sensor: SensorModel,
    cfg: FilterConfig,
    method: str = "ranked",
    diagnostics: UpdateDiagnostics | None = None,
) -> MdGlmbDensity:
    """Measurement update with per-hypothesis ranked assignment, then
    marginalization over association maps within each label set.

    method "ranked" keeps the top assignments_per_hypothesis maps per
    hypothesis; "exhaustive" enumerates every valid map (small instances
    only). Weights are normalized jointly over all retained (I, theta)
    pairs before hypotheses are truncated to max_hypotheses.
    """
    table = _PsiTable(Z, sensor, cfg, diagnostics)
    m = table.Z.size

    entries = []  # (hyp index, theta, unnormalized log weight)
    rows_per_hyp = []
    for hi, h in enumerate(predicted.hypotheses):
        rows = [table.rows(pdf, lab) for lab, pdf in zip(h.label_set, h.pdfs)]
        rows_per_hyp.append(rows)
        if not math.isfinite(h.log_weight):
            continue
        log_score = np.stack([r[0] for r in rows]) if rows else np.zeros((0, m + 1))
        if method == "exhaustive":
            maps = exhaustive_assignments(log_score)
        else:
            maps = ranked_assignments(log_score, cfg.assignments_per_hypothesis)
        for amap, score in maps:
            entries.append((hi, amap.assignments, h.log_weight + score))

    if not entries:
        raise FilterDegeneracyError("update produced no feasible association for any hypothesis")

    total = _lse([e[2] for e in entries])
    by_hyp: dict[int, list[tuple[tuple[int, ...], float]]] = {}
    for hi, theta, lw in entries:
        by_hyp.setdefault(hi, []).append((theta, lw - total))

    hyps = []
    for hi, members in by_hyp.items():
        h = predicted.hypotheses[hi]
        log_w = _lse([w for _, w in members])
        pdfs = []
        for i in range(len(h.label_set)):
            groups: dict[int, list[float]] = {}
            for theta, w in members:
                groups.setdefault(theta[i], []).append(w)
            contribs = [(_lse(ws) - log_w, rows_per_hyp[hi][i][1][j]) for j, ws in sorted(groups.items())]
            mixed = _mix_contributions([(c, p) for c, p in contribs])
            pdfs.append(gm_merge_prune_cap(mixed, cfg.gm_merge_thresh, cfg.gm_trunc_thresh, cfg.gm_max_components))
        hyps.append(MdGlmbHypothesis(h.label_set, log_w, tuple(pdfs)))

    hyps.sort(key=lambda h: (-h.log_weight, h.label_set.labels))
    if cfg.hyp_prune_thresh > 0.0:
        floor = math.log(cfg.hyp_prune_thresh)
        hyps = [h for h in hyps if h.log_weight >= floor] or hyps[:1]
    hyps = hyps[: cfg.max_hypotheses]
    return MdGlmbDensity.from_unnormalized(hyps)


def lmb_predict(posterior: LmbDensity, motion: MotionModel, birth: BirthModel, k: int) -> LmbDensity:
    """Survival-thinned, Kalman-predicted tracks plus fresh birth tracks."""
    entries = []
    for e in posterior.entries:
        s, ps_bar = _survival_stats(e.pdf, e.label, motion, DEFAULT_UT)
        if ps_bar <= 0.0:
            continue
        entries.append(LmbEntry(e.label, e.existence * ps_bar, _surviving_pdf(e.pdf, s, ps_bar, motion)))
    existing = {e.label for e in entries}
    for be, lab in zip(birth.entries, birth.labels_at(k)):
        if lab in existing:
            raise ValueError(f"birth label {lab} collides with an existing track")
        entries.append(LmbEntry(lab, be.existence, be.pdf))
    return LmbDensity(tuple(entries))


def lmb_update(
    predicted: LmbDensity,
    Z,
    sensor: SensorModel,
    cfg: FilterConfig,
    method: str = "ranked",
    diagnostics: UpdateDiagnostics | None = None,
) -> LmbDensity:
    """Expand to label-set hypotheses, update, and collapse back to an LMB.

    The collapse keeps the unlabeled intensity: r(l) is the summed weight of
    updated hypotheses containing l and p(., l) the matching mixture.
    """
    expanded = lmb_to_mdglmb(predicted, cfg.max_hypotheses)
    updated = mdglmb_update(expanded, Z, sensor, cfg, method=method, diagnostics=diagnostics)
    return lmb_from_mdglmb(updated)


def extract_estimates_mdglmb(d: MdGlmbDensity) -> list[tuple[Label, np.ndarray]]:
    """MAP-cardinality estimate: heaviest hypothesis of the MAP cardinality,
    one state per label from the heaviest mixture component."""
    pmf = cardinality_distribution_mdglmb(d)
    n_star = int(np.argmax(pmf))
    candidates = [h for h in d.hypotheses if len(h.label_set) == n_star]
    candidates.sort(key=lambda h: (-h.log_weight, h.label_set.labels))
    best = candidates[0]
    return [(lab, pdf.means[pdf.argmax_component()].copy()) for lab, pdf in zip(best.label_set, best.pdfs)]


def extract_estimates_lmb(d: LmbDensity) -> list[tuple[Label, np.ndarray]]:
    """MAP cardinality of the Bernoulli sum, then the labels with the largest
    existence probabilities (label-order ties)."""
    if not d.entries:
        return []
    pmf = cardinality_distribution_lmb(d)
    c_star = int(np.argmax(pmf))
    ranked = sorted(d.entries, key=lambda e: (-e.existence, e.label))[:c_star]
    ranked.sort(key=lambda e: e.label)
    return [(e.label, e.pdf.means[e.pdf.argmax_component()].copy()) for e in ranked]


def centralized_mdglmb_step(
    posterior: MdGlmbDensity,
    motion: MotionModel,
    birth: BirthModel,
    k: int,
    all_sensor_measurements: list[tuple[SensorModel, np.ndarray]],
    cfg: FilterConfig,
    diagnostics: UpdateDiagnostics | None = None,
) -> MdGlmbDensity:
    """One predict followed by sequential single-sensor updates (iterated corrector)."""
    d = mdglmb_predict(posterior, motion, birth, k, max_hypotheses=cfg.max_hypotheses)
    d = reduce_mdglmb_pdfs(d, cfg)
    for sensor, Z in all_sensor_measurements:
        d = mdglmb_update(d, Z, sensor, cfg, diagnostics=diagnostics)
    return d
