"""Monte-Carlo experiment runner: per-trial tracking loops, OSPA scoring,
aggregation over trials, CSV output, and exchanged-byte accounting.

One trial executes the per-step node loop for the chosen algorithm:
local prediction, local update (already marginalized), N synchronous
consensus rounds with mixture merging, then estimate extraction per node.
Every random draw derives from (trial seed, sensor index) counter-based
streams, so trials are reproducible bit-exactly and independent of worker
scheduling.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .densities import LmbDensity, MdGlmbDensity
from .filters import (
    FilterDegeneracyError,
    UpdateDiagnostics,
    centralized_mdglmb_step,
    extract_estimates_lmb,
    extract_estimates_mdglmb,
    lmb_predict,
    lmb_prune,
    lmb_update,
    mdglmb_predict,
    mdglmb_update,
    reduce_mdglmb_pdfs,
)
from .fusion import consensus_run
from .network import metropolis_weights
from .ospa import ospa
from .scenario import Scenario, generate_truth, with_overrides
from .wire import exchange_bytes_actual, exchange_bytes_reference

ALGORITHMS = ("consensus-mdglmb", "consensus-lmb", "centralized-mdglmb")

OSPA_CUTOFF = 600.0
OSPA_ORDER = 2.0

WORKERS_ENV = "DISTMOT_WORKERS"


@dataclass
class TrialResult:
    algorithm: str
    n_nodes: int
    n_steps: int
    truth_card: list
    est_card: list          # (nodes, steps)
    ospa_total: list        # (nodes, steps)
    ospa_loc: list
    ospa_card: list
    estimates: list         # (nodes, steps, objects) of [label pair, state]
    bytes_reference: int
    bytes_actual: int
    dropped_components: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, separators=(",", ":"))


def trial_seed_for(master_seed: int, trial_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial_index]).generate_state(1)[0])


def _sensor_rngs(trial_seed: int, n_sensors: int):
    return [
        np.random.Generator(np.random.Philox(np.random.SeedSequence([trial_seed, i])))
        for i in range(n_sensors)
    ]


def run_trial(
    scenario: Scenario,
    algorithm: str,
    trial_seed: int,
    cutoff: float = OSPA_CUTOFF,
    order: float = OSPA_ORDER,
) -> TrialResult:
    """Deterministic single trial; all randomness derives from trial_seed."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    from distmot.sensors import simulate_measurements

    truth = generate_truth(scenario)
    motion = scenario.motion_model()
    birth = scenario.birth
    cfg = scenario.filter
    graph = scenario.graph
    omega = metropolis_weights(graph) if len(graph.nodes) > 1 else None
    rngs = _sensor_rngs(trial_seed, len(scenario.sensors))
    diag = UpdateDiagnostics()

    centralized = algorithm == "centralized-mdglmb"
    use_lmb = algorithm == "consensus-lmb"
    n_nodes = 1 if centralized else len(scenario.sensors)

    if centralized:
        densities = [MdGlmbDensity.empty()]
    elif use_lmb:
        densities = [LmbDensity.empty() for _ in scenario.sensors]
    else:
        densities = [MdGlmbDensity.empty() for _ in scenario.sensors]

    est_card = [[0] * scenario.steps for _ in range(n_nodes)]
    ospa_total = [[0.0] * scenario.steps for _ in range(n_nodes)]
    ospa_loc = [[0.0] * scenario.steps for _ in range(n_nodes)]
    ospa_card = [[0.0] * scenario.steps for _ in range(n_nodes)]
    estimates = [[None] * scenario.steps for _ in range(n_nodes)]
    bytes_reference = 0
    bytes_actual = 0

    for k in range(scenario.steps):
        measurements = [simulate_measurements(truth[k], s, rngs[i]) for i, s in enumerate(scenario.sensors)]
        try:
            if centralized:
                densities[0] = centralized_mdglmb_step(
                    densities[0], motion, birth, k, list(zip(scenario.sensors, measurements)), cfg, diag
                )
            elif use_lmb:
                for i, sensor in enumerate(scenario.sensors):
                    pred = lmb_predict(densities[i], motion, birth, k)
                    post = lmb_update(pred, measurements[i], sensor, cfg, diagnostics=diag)
                    densities[i] = lmb_prune(post, cfg.lmb_prune_thresh, cfg.max_hypotheses)
                for _ in range(scenario.consensus_steps):
                    for d in densities:
                        bytes_reference += exchange_bytes_reference(d)
                        bytes_actual += exchange_bytes_actual(d)
                    densities = consensus_run(densities, graph, omega, 1, cfg)
            else:
                for i, sensor in enumerate(scenario.sensors):
                    pred = reduce_mdglmb_pdfs(
                        mdglmb_predict(densities[i], motion, birth, k, cfg.max_hypotheses), cfg
                    )
                    densities[i] = mdglmb_update(pred, measurements[i], sensor, cfg, diagnostics=diag)
                for _ in range(scenario.consensus_steps):
                    for d in densities:
                        bytes_reference += exchange_bytes_reference(d)
                        bytes_actual += exchange_bytes_actual(d)
                    densities = consensus_run(densities, graph, omega, 1, cfg)
        except FilterDegeneracyError as e:
            raise FilterDegeneracyError(f"step {k}, algorithm {algorithm}: {e}") from e

        truth_states = np.array([state for _, state in truth[k]]) if truth[k] else np.zeros((0, 4))
        for node in range(n_nodes):
            if use_lmb:
                est = extract_estimates_lmb(densities[node])
            else:
                est = extract_estimates_mdglmb(densities[node])
            est_states = np.array([s for _, s in est]) if est else np.zeros((0, 4))
            res = ospa(est_states, truth_states, cutoff, order)
            est_card[node][k] = len(est)
            ospa_total[node][k] = res.total
            ospa_loc[node][k] = res.localization
            ospa_card[node][k] = res.cardinality
            estimates[node][k] = [[list(lab.as_pair()), [float(v) for v in s]] for lab, s in est]

    return TrialResult(
        algorithm=algorithm,
        n_nodes=n_nodes,
        n_steps=scenario.steps,
        truth_card=[len(t) for t in truth],
        est_card=est_card,
        ospa_total=ospa_total,
        ospa_loc=ospa_loc,
        ospa_card=ospa_card,
        estimates=estimates,
        bytes_reference=bytes_reference,
        bytes_actual=bytes_actual,
        dropped_components=diag.dropped_components,
    )


@dataclass
class ExperimentResult:
    scenario_name: str
    algorithm: str
    trials: int
    n_nodes: int
    n_steps: int
    truth_card: np.ndarray          # (steps,)
    est_card_mean: np.ndarray       # (nodes, steps)
    est_card_std: np.ndarray        # (nodes, steps)
    ospa_mean: np.ndarray           # (nodes, steps)
    ospa_loc_mean: np.ndarray
    ospa_card_mean: np.ndarray
    bytes_reference: int
    bytes_actual: int
    dropped_components: int
    wall_time: float
    trial_results: list = field(repr=False, default_factory=list)

    def network_averaged(self) -> dict:
        return {
            "est_card_mean": self.est_card_mean.mean(axis=0),
            "est_card_std": self.est_card_std.mean(axis=0),
            "ospa_mean": self.ospa_mean.mean(axis=0),
            "ospa_loc_mean": self.ospa_loc_mean.mean(axis=0),
            "ospa_card_mean": self.ospa_card_mean.mean(axis=0),
        }

    def mean_ospa(self, step_lo: int = 0, step_hi: int | None = None) -> float:
        hi = self.n_steps if step_hi is None else step_hi
        return float(self.ospa_mean.mean(axis=0)[step_lo:hi].mean())

    def mean_cardinality_error(self, step_lo: int = 0, step_hi: int | None = None) -> float:
        hi = self.n_steps if step_hi is None else step_hi
        per_node = np.abs(self.est_card_mean - self.truth_card[None, :])
        return float(per_node.mean(axis=0)[step_lo:hi].mean())


def _trial_job(args):
    scenario, algorithm, seed, cutoff, order = args
    return run_trial(scenario, algorithm, seed, cutoff, order)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "0") or 0)
    if workers <= 0:
        workers = 1
    return workers


def run_experiment(
    scenario: Scenario,
    algorithm: str,
    trials: int | None = None,
    consensus_steps: int | None = None,
    workers: int | None = None,
    out_dir: str | Path | None = None,
    cutoff: float = OSPA_CUTOFF,
    order: float = OSPA_ORDER,
    keep_trials: bool = False,
) -> ExperimentResult:
    """Run independent trials and aggregate in fixed trial order."""
    scenario = with_overrides(scenario, consensus_steps=consensus_steps, trials=trials)
    n_trials = scenario.trials
    seeds = [trial_seed_for(scenario.seed, t) for t in range(n_trials)]
    jobs = [(scenario, algorithm, s, cutoff, order) for s in seeds]

    workers = resolve_workers(workers)
    start = time.perf_counter()
    if workers > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    wall = time.perf_counter() - start

    card = np.array([r.est_card for r in results], dtype=float)        # (trials, nodes, steps)
    ospa_t = np.array([r.ospa_total for r in results], dtype=float)
    ospa_l = np.array([r.ospa_loc for r in results], dtype=float)
    ospa_c = np.array([r.ospa_card for r in results], dtype=float)

    out = ExperimentResult(
        scenario_name=scenario.name,
        algorithm=algorithm,
        trials=n_trials,
        n_nodes=results[0].n_nodes,
        n_steps=scenario.steps,
        truth_card=np.array(results[0].truth_card, dtype=float),
        est_card_mean=card.mean(axis=0),
        est_card_std=card.std(axis=0),
        ospa_mean=ospa_t.mean(axis=0),
        ospa_loc_mean=ospa_l.mean(axis=0),
        ospa_card_mean=ospa_c.mean(axis=0),
        bytes_reference=sum(r.bytes_reference for r in results),
        bytes_actual=sum(r.bytes_actual for r in results),
        dropped_components=sum(r.dropped_components for r in results),
        wall_time=wall,
        trial_results=results if keep_trials else [],
    )
    if out_dir is not None:
        write_csv(out, Path(out_dir))
    return out


CSV_HEADER = "step,truth_card,est_card_mean,est_card_std,ospa,ospa_loc,ospa_card"


def _csv_rows(truth, cm, cs, om, ol, oc) -> str:
    lines = [CSV_HEADER]
    for k in range(len(truth)):
        lines.append(
            f"{k},{truth[k]:g},{cm[k]:.6f},{cs[k]:.6f},{om[k]:.6f},{ol[k]:.6f},{oc[k]:.6f}"
        )
    return "\n".join(lines) + "\n"


def write_csv(result: ExperimentResult, out_dir: Path) -> list[Path]:
    """Per-node CSVs plus a network-averaged CSV and a summary document."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for node in range(result.n_nodes):
        p = out_dir / f"{result.scenario_name}_{result.algorithm}_node{node}.csv"
        p.write_text(
            _csv_rows(
                result.truth_card,
                result.est_card_mean[node],
                result.est_card_std[node],
                result.ospa_mean[node],
                result.ospa_loc_mean[node],
                result.ospa_card_mean[node],
            )
        )
        written.append(p)
    avg = result.network_averaged()
    p = out_dir / f"{result.scenario_name}_{result.algorithm}_network.csv"
    p.write_text(
        _csv_rows(
            result.truth_card,
            avg["est_card_mean"],
            avg["est_card_std"],
            avg["ospa_mean"],
            avg["ospa_loc_mean"],
            avg["ospa_card_mean"],
        )
    )
    written.append(p)
    summary = {
        "scenario": result.scenario_name,
        "algorithm": result.algorithm,
        "trials": result.trials,
        "wall_time_s": result.wall_time,
        "bytes_reference": result.bytes_reference,
        "bytes_actual": result.bytes_actual,
        "dropped_components": result.dropped_components,
        "mean_ospa": result.mean_ospa(),
        "mean_cardinality_error": result.mean_cardinality_error(),
    }
    sp = out_dir / f"{result.scenario_name}_{result.algorithm}_summary.json"
    sp.write_text(json.dumps(summary, indent=2) + "\n")
    written.append(sp)
    return written
