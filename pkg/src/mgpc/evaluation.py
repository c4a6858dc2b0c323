"""Metrics and the synthetic benchmark harnesses.

``run_assessment`` reproduces the random-field study: for every
(length-scale, replicate) cell it draws a ground truth, builds a fixed
farthest-point design and scores nearest-neighbor, fixed-design GP and
active-learning GP classifiers on all held-out vertices.
``run_mf_benchmark`` runs the paired multi-fidelity experiment against
calibrated low-fidelity labels.
"""
from __future__ import annotations

import csv
import json
import logging
import multiprocessing
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .baseline import nn_classify
from .errors import MetricUndefinedError
from .geodesic import HeatGeodesicSolver
from .gpc import ClassProbabilityField, LabeledDataset, predict, train
from .inference import NutsConfig, PriorSpec
from .kernel import KernelParams
from .laplace import SpectralBasis
from .mesh import TriangleMesh, average_pairwise_geodesic
from .mfgpc import predict_mf, train_mf
from .sampling import SyntheticOracle, active_learning_loop, farthest_point_design
from .synth import field_to_labels, make_low_fidelity, sample_prior_field

_LOGGER = logging.getLogger(__name__)

RESULT_COLUMNS = ("ell", "replicate", "classifier", "n_samples",
                  "balanced_accuracy")


def balanced_accuracy(y_true, y_pred) -> float:
    """Arithmetic mean of sensitivity and specificity.

    A class absent from ``y_true`` contributes 1 when nothing was
    (falsely) predicted into it; otherwise the score is undefined and
    :class:`MetricUndefinedError` asks the caller to fall back to plain
    accuracy.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")

    terms = []
    for cls in (1, 0):
        in_class = y_true == cls
        if in_class.any():
            terms.append(float((y_pred[in_class] == cls).mean()))
        elif (y_pred == cls).any():
            raise MetricUndefinedError(
                f"class {cls} absent from y_true but predicted; "
                "report plain accuracy instead"
            )
        else:
            terms.append(1.0)
    return 0.5 * sum(terms)


def inducibility(field_or_labels, mesh: TriangleMesh,
                 density=None) -> float:
    """Area fraction (optionally density-weighted) classified positive.

    ``density`` must be nonnegative with area-weighted integral 1; a
    uniform density reproduces the unweighted value exactly.
    """
    if isinstance(field_or_labels, ClassProbabilityField):
        fld = field_or_labels
        if not np.array_equal(fld.vertices, np.arange(mesh.n_vertices)):
            raise ValueError("inducibility needs a field covering every vertex")
        positive = fld.probability > 0.5
    else:
        labels = np.asarray(field_or_labels)
        if labels.shape != (mesh.n_vertices,):
            raise ValueError(
                f"labels must cover all {mesh.n_vertices} vertices"
            )
        positive = labels == 1

    areas = mesh.vertex_areas
    if density is None:
        return float(areas[positive].sum() / areas.sum())
    density = np.asarray(density, dtype=np.float64)
    if density.shape != (mesh.n_vertices,):
        raise ValueError("density must be a per-vertex array")
    if (density < 0).any():
        raise ValueError("density must be nonnegative")
    integral = float(areas @ density)
    if abs(integral - 1.0) > 1e-6:
        raise ValueError(
            f"density integrates to {integral:.8f}, expected 1 within 1e-6"
        )
    return float((areas * density)[positive].sum())


# ---------------------------------------------------------------------------
# Single-fidelity assessment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssessmentConfig:
    length_scales: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    n_fields: int = 10
    sample_grid: tuple = (20, 40, 60, 80, 100)
    seed: int = 0
    classifiers: tuple = ("nn", "gp", "al")
    eta: float = 1.0
    nu: float = 1.5
    kappa_convention: str = "paper-eq6"
    n_lat: int = 200
    nuts: NutsConfig = field(default_factory=NutsConfig)
    # The acquisition loop retrains after every label; it may use its own
    # (typically cheaper) chain settings. None means same as ``nuts``.
    al_nuts: Optional[NutsConfig] = None
    init_design: int = 20
    predict_thin: int = 1          # scoring predictions
    acquisition_thin: int = 1      # interim predictions inside the AL loop
    # Ground-truth fields must put at least this area fraction in each
    # class: balanced accuracy is undefined for one-class truths and noisy
    # for extreme imbalance. Degenerate draws are re-sampled (seeded).
    min_class_fraction: float = 0.25
    max_truth_resamples: int = 200
    t_factor: float = 1.0
    jobs: int = 1


def _sample_truth(basis: SpectralBasis, params: KernelParams, entropy,
                  min_fraction: float, max_resamples: int):
    areas = basis.mass_diagonal
    total = areas.sum()
    for attempt in range(max_resamples):
        seed = int(np.random.SeedSequence(
            list(entropy) + [attempt]).generate_state(1)[0])
        fld = sample_prior_field(basis, params, seed=seed)
        labels = field_to_labels(fld)
        frac = float(areas[labels == 1].sum() / total)
        if min_fraction <= frac <= 1.0 - min_fraction:
            return fld, labels
    raise RuntimeError(
        f"no two-class truth field found in {max_resamples} draws "
        f"(ell={params.ell})"
    )


def _cell_seed(entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _run_assessment_cell(mesh: TriangleMesh, basis: SpectralBasis,
                         config: AssessmentConfig, ell_index: int,
                         replicate: int):
    ell = config.length_scales[ell_index]
    params = KernelParams(eta=config.eta, ell=ell, nu=config.nu,
                          kappa_convention=config.kappa_convention)
    base_entropy = [config.seed, ell_index, replicate]
    _, truth = _sample_truth(basis, params, base_entropy + [1],
                             config.min_class_fraction,
                             config.max_truth_resamples)

    solver = HeatGeodesicSolver(mesh, t_factor=config.t_factor)
    n_max = max(config.sample_grid)
    design = farthest_point_design(mesh, n_max,
                                   seed=_cell_seed(base_entropy + [2]),
                                   solver=solver)

    all_vertices = np.arange(mesh.n_vertices)
    rows = []
    metrics = {
        "design_mean_pairwise_geodesic": average_pairwise_geodesic(
            mesh, design, solver),
    }

    def score(n_train: int, train_ids, predicted_labels, query) -> float:
        return balanced_accuracy(truth[query], predicted_labels)

    for name in config.classifiers:
        try:
            if name == "nn":
                for n in config.sample_grid:
                    train_ids = design[:n]
                    query = np.setdiff1d(all_vertices, train_ids)
                    data = LabeledDataset.from_labels(train_ids, truth[train_ids])
                    pred = nn_classify(mesh, data, query, solver=solver)
                    rows.append((ell, replicate, "nn", n,
                                 score(n, train_ids, pred, query)))
            elif name == "gp":
                for n in config.sample_grid:
                    train_ids = design[:n]
                    query = np.setdiff1d(all_vertices, train_ids)
                    data = LabeledDataset.from_labels(train_ids, truth[train_ids])
                    clf = train(mesh, basis, data,
                                priors=PriorSpec.single_fidelity(),
                                seed=_cell_seed(base_entropy + [3, n]),
                                nuts=config.nuts, n_lat=config.n_lat,
                                nu=config.nu,
                                kappa_convention=config.kappa_convention)
                    fld = predict(clf, query, thin=config.predict_thin)
                    pred = field_to_labels(fld.mean)
                    rows.append((ell, replicate, "gp", n,
                                 score(n, train_ids, pred, query)))
            elif name == "al":
                # Interim sizes are scored from the loop's own prediction;
                # the final model gets a dedicated scoring prediction.
                snapshots = set(config.sample_grid) - {n_max}

                def snapshot(classifier, dataset, fld):
                    n = len(dataset)
                    if n not in snapshots:
                        return
                    query = np.setdiff1d(all_vertices, dataset.vertex_ids)
                    pred_all = field_to_labels(fld.mean)
                    rows.append((ell, replicate, "al", n,
                                 balanced_accuracy(truth[query],
                                                   pred_all[query])))

                oracle = SyntheticOracle(truth)
                al_data, al_clf = active_learning_loop(
                    mesh, basis, oracle, design[:config.init_design],
                    budget=n_max, priors=PriorSpec.single_fidelity(),
                    seed=_cell_seed(base_entropy + [4]),
                    nuts=config.al_nuts or config.nuts,
                    n_lat=config.n_lat, nu=config.nu,
                    kappa_convention=config.kappa_convention,
                    predict_thin=config.acquisition_thin,
                    on_iteration=snapshot,
                )
                query = np.setdiff1d(all_vertices, al_data.vertex_ids)
                fld = predict(al_clf, query, thin=config.predict_thin)
                rows.append((ell, replicate, "al", n_max,
                             balanced_accuracy(truth[query],
                                               field_to_labels(fld.mean))))
            else:
                raise ValueError(f"unknown classifier {name!r}")
        except Exception:
            _LOGGER.exception("cell (ell=%s, rep=%d, classifier=%s) failed",
                              ell, replicate, name)
            for n in config.sample_grid:
                rows.append((ell, replicate, name, n, float("nan")))
    return rows, metrics


def _assessment_worker(args):
    mesh, basis, config, ell_index, replicate = args
    return (ell_index, replicate), _run_assessment_cell(
        mesh, basis, config, ell_index, replicate)


def run_assessment(mesh: TriangleMesh, basis: SpectralBasis,
                   config: AssessmentConfig = AssessmentConfig(),
                   out_csv=None, out_summary=None):
    """Run every (length-scale, replicate) cell and collect scores.

    Cells are independent and individually seeded, so the result table is
    identical whatever the execution order; with ``jobs > 1`` they run in
    a process pool. Returns the list of result rows (dicts following
    RESULT_COLUMNS); optionally writes the CSV and a summary JSON.
    """
    cells = [(ell_i, rep)
             for ell_i in range(len(config.length_scales))
             for rep in range(config.n_fields)]
    results = {}
    if config.jobs > 1:
        args = [(mesh, basis, config, ell_i, rep) for ell_i, rep in cells]
        with multiprocessing.Pool(config.jobs) as pool:
            for key, value in pool.imap_unordered(_assessment_worker, args):
                results[key] = value
    else:
        for ell_i, rep in cells:
            results[(ell_i, rep)] = _run_assessment_cell(
                mesh, basis, config, ell_i, rep)

    rows = []
    design_metric = []
    for key in sorted(results):
        cell_rows, metrics = results[key]
        rows.extend(cell_rows)
        design_metric.append(metrics["design_mean_pairwise_geodesic"])

    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    records = [dict(zip(RESULT_COLUMNS, row)) for row in rows]

    if out_csv is not None:
        write_results_csv(out_csv, records)
    summary = summarize_assessment(records)
    summary["design_mean_pairwise_geodesic"] = float(np.mean(design_metric))
    if out_summary is not None:
        with open(out_summary, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return records, summary


def write_results_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rec in records:
            writer.writerow([
                repr(float(rec["ell"])), int(rec["replicate"]),
                rec["classifier"], int(rec["n_samples"]),
                repr(float(rec["balanced_accuracy"])),
            ])


def read_results_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append({
                "ell": float(row["ell"]),
                "replicate": int(row["replicate"]),
                "classifier": row["classifier"],
                "n_samples": int(row["n_samples"]),
                "balanced_accuracy": float(row["balanced_accuracy"]),
            })
    return records


def summarize_assessment(records) -> dict:
    """Per (ell, classifier, n_samples) means and standard errors."""
    groups: dict = {}
    for rec in records:
        key = (rec["ell"], rec["classifier"], rec["n_samples"])
        groups.setdefault(key, []).append(rec["balanced_accuracy"])
    cells = []
    for (ell, name, n), values in sorted(groups.items()):
        arr = np.asarray(values)
        ok = arr[np.isfinite(arr)]
        cells.append({
            "ell": ell,
            "classifier": name,
            "n_samples": n,
            "mean": float(ok.mean()) if ok.size else float("nan"),
            "se": float(ok.std(ddof=1) / np.sqrt(ok.size)) if ok.size > 1 else 0.0,
            "n_ok": int(ok.size),
            "n_failed": int(arr.size - ok.size),
        })
    return {"cells": cells}


def mean_improvement(records, better: str, baseline: str, ell: float,
                     n_samples: int) -> float:
    """Mean paired difference of balanced accuracy at one grid point."""
    scores: dict = {}
    for rec in records:
        if rec["ell"] == ell and rec["n_samples"] == n_samples:
            scores.setdefault(rec["classifier"], {})[rec["replicate"]] = \
                rec["balanced_accuracy"]
    if better not in scores or baseline not in scores:
        raise ValueError(f"missing classifier rows for {better} vs {baseline}")
    reps = sorted(set(scores[better]) & set(scores[baseline]))
    diffs = [scores[better][r] - scores[baseline][r] for r in reps]
    return float(np.nanmean(diffs))


# ---------------------------------------------------------------------------
# Multi-fidelity benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MFBenchmarkConfig:
    ell_truth: float = 0.6
    n_replicates: int = 10
    n_low: int = 100
    n_high: int = 40
    agreement_target: float = 0.85
    ell_noise: float = 0.2
    seed: int = 0
    eta: float = 1.0
    nu: float = 1.5
    kappa_convention: str = "paper-eq6"
    n_lat: int = 200
    nuts: NutsConfig = field(default_factory=NutsConfig)
    predict_thin: int = 1
    min_class_fraction: float = 0.05
    max_truth_resamples: int = 50
    t_factor: float = 1.0


def run_mf_benchmark(mesh: TriangleMesh, basis: SpectralBasis,
                     config: MFBenchmarkConfig = MFBenchmarkConfig(),
                     out_csv=None):
    """Paired comparison: multi-fidelity vs single-fidelity vs NN.

    Per replicate both fidelities share one farthest-point design; the
    low set takes the corrupted labels, the high set the true ones, and
    all classifiers are scored on the vertices outside the design.
    """
    params = KernelParams(eta=config.eta, ell=config.ell_truth, nu=config.nu,
                          kappa_convention=config.kappa_convention)
    all_vertices = np.arange(mesh.n_vertices)
    rows = []
    for rep in range(config.n_replicates):
        entropy = [config.seed, 7, rep]
        truth_field, truth = _sample_truth(
            basis, params, entropy + [1], config.min_class_fraction,
            config.max_truth_resamples)
        low_labels = make_low_fidelity(
            truth_field, basis, ell_noise=config.ell_noise,
            agreement_target=config.agreement_target,
            seed=_cell_seed(entropy + [2]), nu=config.nu,
            kappa_convention=config.kappa_convention)

        solver = HeatGeodesicSolver(mesh, t_factor=config.t_factor)
        design = farthest_point_design(
            mesh, max(config.n_low, config.n_high),
            seed=_cell_seed(entropy + [3]), solver=solver)
        low_ids = design[:config.n_low]
        high_ids = design[:config.n_high]
        query = np.setdiff1d(all_vertices, design)

        high_data = LabeledDataset.from_labels(high_ids, truth[high_ids])
        mixed = LabeledDataset(
            np.concatenate([low_ids, high_ids]),
            np.concatenate([low_labels[low_ids], truth[high_ids]]),
            np.array(["low"] * len(low_ids) + ["high"] * len(high_ids)),
        )

        pred_nn = nn_classify(mesh, high_data, query, solver=solver)
        rows.append((rep, "nn", config.n_high,
                     balanced_accuracy(truth[query], pred_nn)))

        clf_gp = train(mesh, basis, high_data,
                       priors=PriorSpec.single_fidelity(),
                       seed=_cell_seed(entropy + [4]), nuts=config.nuts,
                       n_lat=config.n_lat, nu=config.nu,
                       kappa_convention=config.kappa_convention)
        pred_gp = field_to_labels(
            predict(clf_gp, query, thin=config.predict_thin).mean)
        rows.append((rep, "gp", config.n_high,
                     balanced_accuracy(truth[query], pred_gp)))

        clf_mf = train_mf(mesh, basis, mixed,
                          priors=PriorSpec.multi_fidelity(),
                          seed=_cell_seed(entropy + [5]), nuts=config.nuts,
                          n_lat=config.n_lat, nu=config.nu,
                          kappa_convention=config.kappa_convention)
        pred_mf = field_to_labels(
            predict_mf(clf_mf, query, thin=config.predict_thin).mean)
        rows.append((rep, "mf", config.n_high,
                     balanced_accuracy(truth[query], pred_mf)))

    records = [
        {"replicate": r, "classifier": c, "n_high": n, "balanced_accuracy": b}
        for r, c, n, b in rows
    ]
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replicate", "classifier", "n_high",
                             "balanced_accuracy"])
            for rec in records:
                writer.writerow([rec["replicate"], rec["classifier"],
                                 rec["n_high"],
                                 repr(float(rec["balanced_accuracy"]))])
    return records
