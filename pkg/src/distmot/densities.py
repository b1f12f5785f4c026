"""Labeled multi-object densities: LMB, marginalized delta-GLMB, delta-GLMB.

An M-delta-GLMB is a finite family {(w(I), {p(.,l;I)}_{l in I})} over label
sets I with weights summing to 1; an LMB is {(r(l), p(.,l))} with independent
per-label existence probabilities. Hypothesis weights are kept as
log-weights and normalized with log-sum-exp.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .gm import GaussianMixture, logsumexp
from .labels import EMPTY_LABEL_SET, Label, LabelSet

NORMALIZATION_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class Track:
    label: Label
    pdf: GaussianMixture

    def __post_init__(self):
        if not self.pdf.is_normalized(atol=1e-6):
            raise ValueError(f"track pdf for {self.label} is not normalized")


@dataclass(frozen=True, eq=False)
class LmbEntry:
    label: Label
    existence: float
    pdf: GaussianMixture

    def __post_init__(self):
        if not -1e-12 <= self.existence <= 1.0 + 1e-12:
            raise ValueError(f"existence probability {self.existence} outside [0, 1] for {self.label}")
        object.__setattr__(self, "existence", float(min(max(self.existence, 0.0), 1.0)))
        if self.pdf.n_components and not self.pdf.is_normalized(atol=1e-6):
            raise ValueError(f"pdf for {self.label} is not normalized")


@dataclass(frozen=True, eq=False)
class LmbDensity:
    """Finite map label -> (existence, pdf), stored sorted by label."""

    entries: tuple[LmbEntry, ...]

    def __post_init__(self):
        ents = tuple(sorted(self.entries, key=lambda e: e.label))
        labels = [e.label for e in ents]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels in LMB density")
        object.__setattr__(self, "entries", ents)

    @classmethod
    def of(cls, entries) -> "LmbDensity":
        return cls(tuple(LmbEntry(*e) if not isinstance(e, LmbEntry) else e for e in entries))

    @classmethod
    def empty(cls) -> "LmbDensity":
        return cls(())

    @property
    def labels(self) -> tuple[Label, ...]:
        return tuple(e.label for e in self.entries)

    def entry(self, label: Label) -> LmbEntry | None:
        try:
            index = object.__getattribute__(self, "_index")
        except AttributeError:
            index = {e.label: e for e in self.entries}
            object.__setattr__(self, "_index", index)
        return index.get(label)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class MdGlmbHypothesis:
    """One label set with its log weight and one pdf per label (aligned order)."""

    label_set: LabelSet
    log_weight: float
    pdfs: tuple[GaussianMixture, ...]

    def __post_init__(self):
        if len(self.pdfs) != len(self.label_set):
            raise ValueError(
                f"hypothesis {self.label_set} carries {len(self.pdfs)} pdfs for {len(self.label_set)} labels"
            )
        for lab, pdf in zip(self.label_set, self.pdfs):
            if not pdf.is_normalized(atol=1e-6):
                raise ValueError(f"pdf for {lab} in hypothesis {self.label_set} is not normalized")

    def pdf(self, label: Label) -> GaussianMixture:
        return self.pdfs[self.label_set.labels.index(label)]


@dataclass(frozen=True, eq=False)
class MdGlmbDensity:
    """Marginalized delta-GLMB: one (log weight, per-label pdfs) per label set."""

    hypotheses: tuple[MdGlmbHypothesis, ...]

    def __post_init__(self):
        hyps = tuple(sorted(self.hypotheses, key=lambda h: h.label_set.labels))
        keys = [h.label_set for h in hyps]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate label-set hypotheses")
        if not hyps:
            raise ValueError("density needs at least one hypothesis (the empty set is allowed)")
        total = logsumexp([h.log_weight for h in hyps])
        if abs(total) > NORMALIZATION_ATOL:
            raise ValueError(f"hypothesis weights not normalized (log total {total:.3e})")
        object.__setattr__(self, "hypotheses", hyps)

    @classmethod
    def from_unnormalized(cls, hyps: list[MdGlmbHypothesis] | list[tuple[LabelSet, float, tuple]]) -> "MdGlmbDensity":
        items = [h if isinstance(h, MdGlmbHypothesis) else MdGlmbHypothesis(*h) for h in hyps]
        finite = [h for h in items if math.isfinite(h.log_weight)]
        if not finite:
            raise ValueError("no hypothesis with finite weight")
        total = logsumexp([h.log_weight for h in finite])
        return cls(tuple(MdGlmbHypothesis(h.label_set, h.log_weight - total, h.pdfs) for h in finite))

    @classmethod
    def empty(cls) -> "MdGlmbDensity":
        return cls((MdGlmbHypothesis(EMPTY_LABEL_SET, 0.0, ()),))

    def hypothesis(self, label_set: LabelSet) -> MdGlmbHypothesis | None:
        try:
            index = object.__getattribute__(self, "_index")
        except AttributeError:
            index = {h.label_set: h for h in self.hypotheses}
            object.__setattr__(self, "_index", index)
        return index.get(label_set)

    def label_space(self) -> LabelSet:
        out: set[Label] = set()
        for h in self.hypotheses:
            out.update(h.label_set)
        return LabelSet(tuple(out))

    def __len__(self):
        return len(self.hypotheses)


@dataclass(frozen=True, eq=False)
class DeltaGlmbComponent:
    label_set: LabelSet
    assoc_tag: object
    log_weight: float
    pdfs: tuple[GaussianMixture, ...]

    def pdf(self, label: Label) -> GaussianMixture:
        return self.pdfs[self.label_set.labels.index(label)]


@dataclass(frozen=True, eq=False)
class DeltaGlmbDensity:
    """Delta-GLMB with explicit discrete association tags; weights normalized over (I, tag)."""

    components: tuple[DeltaGlmbComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("delta-GLMB needs at least one component")
        keys = [(c.label_set, c.assoc_tag) for c in self.components]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (label set, tag) components")
        total = logsumexp([c.log_weight for c in self.components])
        if abs(total) > NORMALIZATION_ATOL:
            raise ValueError(f"component weights not normalized (log total {total:.3e})")


def cardinality_distribution_mdglmb(d: MdGlmbDensity) -> np.ndarray:
    """pmf over object count n = 0..max |I|."""
    n_max = max(len(h.label_set) for h in d.hypotheses)
    log_terms: list[list[float]] = [[] for _ in range(n_max + 1)]
    for h in d.hypotheses:
        log_terms[len(h.label_set)].append(h.log_weight)
    pmf = np.array([math.exp(logsumexp(t)) if t else 0.0 for t in log_terms])
    return pmf / pmf.sum()


def cardinality_distribution_lmb(d: LmbDensity) -> np.ndarray:
    """pmf of the sum of independent per-label Bernoulli existences."""
    pmf = np.array([1.0])
    for e in d.entries:
        pmf = np.convolve(pmf, [1.0 - e.existence, e.existence])
    return pmf


def expected_cardinality_mdglmb(d: MdGlmbDensity) -> float:
    pmf = cardinality_distribution_mdglmb(d)
    return float(np.arange(pmf.size) @ pmf)


def intensity_mdglmb(d: MdGlmbDensity, label: Label) -> tuple[float, GaussianMixture]:
    """Existence mass sum_{I owning label} w(I) and the matching pdf mixture."""
    log_ws, parts = [], []
    for h in d.hypotheses:
        if label in h.label_set:
            log_ws.append(h.log_weight)
            parts.append(h.pdf(label))
    if not log_ws:
        dim = 0
        for h in d.hypotheses:
            if h.pdfs:
                dim = h.pdfs[0].dim
                break
        return 0.0, GaussianMixture.empty(dim)
    log_mass = logsumexp(log_ws)
    lw = np.concatenate([p.log_w + (w - log_mass) for p, w in zip(parts, log_ws)])
    mu = np.concatenate([p.means for p in parts])
    cv = np.concatenate([p.covs for p in parts])
    return float(math.exp(log_mass)), GaussianMixture._raw(lw, mu, cv)


def marginalize_delta_glmb(d: DeltaGlmbDensity) -> MdGlmbDensity:
    """Sum the discrete tags out of a delta-GLMB; preserves cardinality and intensity."""
    groups: dict[LabelSet, list[DeltaGlmbComponent]] = {}
    for c in d.components:
        groups.setdefault(c.label_set, []).append(c)
    hyps = []
    for label_set, comps in groups.items():
        log_w = float(logsumexp([c.log_weight for c in comps]))
        pdfs = []
        for i, _ in enumerate(label_set):
            lw = np.concatenate([c.pdfs[i].log_w + (c.log_weight - log_w) for c in comps])
            mu = np.concatenate([c.pdfs[i].means for c in comps])
            cv = np.concatenate([c.pdfs[i].covs for c in comps])
            pdfs.append(GaussianMixture(lw, mu, cv).normalized())
        hyps.append(MdGlmbHypothesis(label_set, log_w, tuple(pdfs)))
    return MdGlmbDensity.from_unnormalized(hyps)


def lmb_from_mdglmb(d: MdGlmbDensity) -> LmbDensity:
    """LMB with the same per-label existence mass and intensity."""
    entries = []
    for label in d.label_space():
        mass, pdf = intensity_mdglmb(d, label)
        if pdf.n_components:
            entries.append(LmbEntry(label, mass, pdf))
    return LmbDensity(tuple(entries))


def k_best_bernoulli_subsets(probs: np.ndarray, k: int | None) -> list[tuple[tuple[int, ...], float]]:
    """The k highest-weight subsets of independent Bernoulli(p_i) trials.

    Returns (sorted index tuple, log weight) pairs in descending weight;
    log weight = sum_in log p + sum_out log(1-p). k=None enumerates all.
    p_i = 0 is never included, p_i = 1 always.
    """
    probs = np.asarray(probs, dtype=float)
    forced = [i for i, p in enumerate(probs) if p >= 1.0]
    optional = [i for i, p in enumerate(probs) if 0.0 < p < 1.0]
    base = sum(math.log1p(-probs[i]) for i in optional)
    odds = {i: math.log(probs[i]) - math.log1p(-probs[i]) for i in optional}

    best = set(forced) | {i for i in optional if odds[i] > 0}
    best_logw = base + sum(odds[i] for i in optional if odds[i] > 0)

    costs = sorted(((abs(odds[i]), i) for i in optional), key=lambda t: (t[0], t[1]))
    out = [(tuple(sorted(best)), best_logw)]
    if k is not None and k <= 1:
        return out
    limit = (1 << len(optional)) if k is None else min(k, 1 << len(optional))

    # enumerate deviation sets by increasing total cost; a deviation toggles
    # membership of one optional index relative to the best subset
    heap: list[tuple[float, tuple[int, ...]]] = []
    if costs:
        heapq.heappush(heap, (costs[0][0], (0,)))
    while heap and len(out) < limit:
        cost, devs = heapq.heappop(heap)
        subset = set(best)
        for pos in devs:
            subset.symmetric_difference_update({costs[pos][1]})
        out.append((tuple(sorted(subset)), best_logw - cost))
        last = devs[-1]
        if last + 1 < len(costs):
            heapq.heappush(heap, (cost + costs[last + 1][0], devs + (last + 1,)))
            heapq.heappush(heap, (cost - costs[last][0] + costs[last + 1][0], devs[:-1] + (last + 1,)))
    return out


def lmb_to_mdglmb(d: LmbDensity, max_hypotheses: int | None = None) -> MdGlmbDensity:
    """Expand an LMB into label-set hypotheses.

    Full enumeration when max_hypotheses is None; otherwise the k best
    subsets by weight, renormalized after truncation.
    """
    probs = np.array([e.existence for e in d.entries])
    subsets = k_best_bernoulli_subsets(probs, max_hypotheses)
    hyps = []
    for idx, log_w in subsets:
        labels = LabelSet(tuple(d.entries[i].label for i in idx))
        pdfs = tuple(d.entries[i].pdf for i in idx)
        hyps.append(MdGlmbHypothesis(labels, log_w, pdfs))
    return MdGlmbDensity.from_unnormalized(hyps)
