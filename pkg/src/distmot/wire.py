"""Wire format for the densities exchanged between nodes.

JSON documents, schema "lrfs-density/1". Labels are [k, i] pairs,
hypothesis weights are log-weights, component covariances are row-major
flat lists. Values are serialized in double precision; the reference byte
accounting below assumes 4-byte floats with a single Gaussian per track
(1 weight + 4 mean + 10 upper-triangle covariance entries per label), so
both counts are reported by the harness.
"""

from __future__ import annotations

import json

import numpy as np

from .densities import LmbDensity, LmbEntry, MdGlmbDensity, MdGlmbHypothesis
from .gm import GaussianMixture
from .labels import Label, LabelSet

SCHEMA = "lrfs-density/1"


def _pdf_to_dict(pdf: GaussianMixture) -> dict:
    return {
        "log_weights": pdf.log_w.tolist(),
        "means": pdf.means.tolist(),
        "covariances": [c.reshape(-1).tolist() for c in pdf.covs],
    }


def _pdf_from_dict(doc: dict) -> GaussianMixture:
    lw = np.array(doc["log_weights"], dtype=float)
    mu = np.array(doc["means"], dtype=float)
    d = mu.shape[1] if mu.ndim == 2 else 0
    cv = np.array(doc["covariances"], dtype=float).reshape(-1, d, d)
    return GaussianMixture(lw, mu, cv)


def density_to_dict(d: LmbDensity | MdGlmbDensity) -> dict:
    if isinstance(d, LmbDensity):
        return {
            "schema": SCHEMA,
            "kind": "lmb",
            "entries": [
                {"label": list(e.label.as_pair()), "existence": e.existence, "pdf": _pdf_to_dict(e.pdf)}
                for e in d.entries
            ],
        }
    if isinstance(d, MdGlmbDensity):
        return {
            "schema": SCHEMA,
            "kind": "mdglmb",
            "hypotheses": [
                {
                    "labels": [list(l.as_pair()) for l in h.label_set],
                    "log_weight": h.log_weight,
                    "tracks": [
                        {"label": list(l.as_pair()), "pdf": _pdf_to_dict(p)}
                        for l, p in zip(h.label_set, h.pdfs)
                    ],
                }
                for h in d.hypotheses
            ],
        }
    raise TypeError(f"cannot serialize {type(d).__name__}")


def density_to_json(d: LmbDensity | MdGlmbDensity) -> str:
    return json.dumps(density_to_dict(d), separators=(",", ":"))


def density_from_dict(doc: dict) -> LmbDensity | MdGlmbDensity:
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unknown schema {doc.get('schema')!r}")
    if doc["kind"] == "lmb":
        return LmbDensity(
            tuple(
                LmbEntry(Label(*e["label"]), e["existence"], _pdf_from_dict(e["pdf"]))
                for e in doc["entries"]
            )
        )
    if doc["kind"] == "mdglmb":
        hyps = []
        for h in doc["hypotheses"]:
            labels = LabelSet(tuple(Label(*l) for l in h["labels"]))
            by_label = {tuple(t["label"]): _pdf_from_dict(t["pdf"]) for t in h["tracks"]}
            pdfs = tuple(by_label[l.as_pair()] for l in labels)
            hyps.append(MdGlmbHypothesis(labels, h["log_weight"], pdfs))
        return MdGlmbDensity(tuple(hyps))
    raise ValueError(f"unknown density kind {doc['kind']!r}")


def density_from_json(text: str) -> LmbDensity | MdGlmbDensity:
    return density_from_dict(json.loads(text))


FLOATS_PER_TRACK = 4 + 10  # mean + upper-triangle covariance of a 4-D Gaussian


def exchange_bytes_reference(d: LmbDensity | MdGlmbDensity) -> int:
    """Nominal per-broadcast byte count at 4 bytes per float."""
    if isinstance(d, LmbDensity):
        return 4 * (1 + FLOATS_PER_TRACK * len(d.entries))
    if isinstance(d, MdGlmbDensity):
        return 4 * sum(1 + FLOATS_PER_TRACK * len(h.label_set) for h in d.hypotheses)
    raise TypeError(f"cannot size {type(d).__name__}")


def exchange_bytes_actual(d: LmbDensity | MdGlmbDensity) -> int:
    """Size of the serialized JSON payload in bytes."""
    return len(density_to_json(d).encode("utf-8"))
