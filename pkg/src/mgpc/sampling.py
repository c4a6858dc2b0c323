"""Experimental designs: farthest-point spreads and active learning."""
from __future__ import annotations

import logging
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import NumericalError
from .geodesic import HeatGeodesicSolver
from .gpc import ClassProbabilityField, LabeledDataset, TrainedClassifier, predict, train
from .inference import NutsConfig, PriorSpec
from .laplace import SpectralBasis
from .mesh import TriangleMesh

_LOGGER = logging.getLogger(__name__)


class LabelOracle(Protocol):
    """Provider of a binary label for a vertex id."""

    def label_for(self, vertex_id: int) -> int: ...


class SyntheticOracle:
    """Oracle backed by a complete per-vertex label array."""

    def __init__(self, labels):
        self.labels = np.asarray(labels, dtype=np.int64)

    def label_for(self, vertex_id: int) -> int:
        return int(self.labels[vertex_id])


class FileOracle:
    """Oracle backed by precomputed labels; missing vertices are an error."""

    def __init__(self, dataset: LabeledDataset):
        self._table = {
            int(v): int(y)
            for v, y in zip(dataset.vertex_ids, dataset.labels)
        }

    def label_for(self, vertex_id: int) -> int:
        try:
            return self._table[int(vertex_id)]
        except KeyError:
            raise KeyError(
                f"vertex {vertex_id} has no precomputed label; "
                "file-backed oracles cannot simulate on demand"
            ) from None


class ActiveLearningAborted(RuntimeError):
    """Oracle failure mid-loop; carries the labels collected so far."""

    def __init__(self, message: str, dataset: LabeledDataset):
        super().__init__(message)
        self.dataset = dataset


def farthest_point_design(mesh: TriangleMesh, n: int, seed: int = 0,
                          solver: Optional[HeatGeodesicSolver] = None) -> np.ndarray:
    """Greedy geodesic spread: each point maximizes its minimum distance
    to the points already chosen; the first is drawn uniformly (seeded)."""
    if not 1 <= n <= mesh.n_vertices:
        raise ValueError(f"n must be in [1, {mesh.n_vertices}]")
    if solver is None:
        solver = HeatGeodesicSolver(mesh)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(mesh.n_vertices))
    selected = [first]
    min_dist = solver.field(first).distances.copy()
    while len(selected) < n:
        # argmax returns the first (lowest-id) maximizer on ties.
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        np.minimum(min_dist, solver.field(nxt).distances, out=min_dist)
    return np.asarray(selected, dtype=np.int64)


def acquire_next(field: ClassProbabilityField, mesh: TriangleMesh,
                 exclude_boundary: bool = True, exclude=()) -> int:
    """Vertex minimizing |mean| / sqrt(variance) among the candidates.

    Boundary vertices are dropped when ``exclude_boundary`` (their
    variance is artificially high under the Neumann spectrum) and so are
    the vertices in ``exclude`` (typically already labeled). Ties go to
    the lowest vertex id; candidates with non-positive variance are
    skipped with a warning.
    """
    order = np.argsort(field.vertices, kind="stable")
    vertices = field.vertices[order]
    mean = field.mean[order]
    variance = field.variance[order]

    keep = np.ones(vertices.size, dtype=bool)
    if exclude_boundary:
        keep &= ~mesh.boundary_mask[vertices]
    exclude = np.asarray(list(exclude), dtype=np.int64)
    if exclude.size:
        keep &= ~np.isin(vertices, exclude)

    usable = variance > 0.0
    skipped = keep & ~usable
    if skipped.any():
        _LOGGER.warning("acquisition skipped %d candidates with variance <= 0",
                        int(skipped.sum()))
    keep &= usable
    if not keep.any():
        raise NumericalError("no usable acquisition candidates remain")

    score = np.abs(mean[keep]) / np.sqrt(variance[keep])
    return int(vertices[keep][np.argmin(score)])


def active_learning_loop(
    mesh: TriangleMesh,
    basis: SpectralBasis,
    oracle: LabelOracle,
    init,
    budget: int,
    priors: Optional[PriorSpec] = None,
    seed: int = 0,
    nuts: NutsConfig = NutsConfig(),
    n_lat: int = 200,
    nu: float = 1.5,
    kappa_convention: str = "paper-eq6",
    exclude_boundary: bool = True,
    predict_thin: int = 1,
    on_iteration: Optional[Callable] = None,
):
    """Grow the training set one uncertainty-targeted vertex at a time.

    Trains on the initial labels, then repeats (predict everywhere,
    acquire, query the oracle, retrain from scratch) until ``budget``
    labels are collected. Acquired vertices never repeat. The optional
    ``on_iteration(classifier, dataset, field)`` callback sees every
    freshly trained classifier together with its full-mesh prediction.

    Returns (dataset, classifier). Oracle failures raise
    :class:`ActiveLearningAborted` carrying the labels collected so far.
    """
    init = np.asarray(init, dtype=np.int64)
    if init.size == 0:
        raise ValueError("init design must not be empty")
    if budget < init.size:
        raise ValueError("budget must cover the initial design")

    def child_seed(k: int) -> int:
        return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])

    def query_oracle(dataset: LabeledDataset, vertex: int) -> int:
        try:
            return int(oracle.label_for(int(vertex)))
        except Exception as exc:
            raise ActiveLearningAborted(
                f"oracle failed at vertex {vertex}: {exc}", dataset
            ) from exc

    empty = LabeledDataset.from_labels([], [], provenance="active-learning")
    labels = []
    for k, vertex in enumerate(init):
        labels.append(query_oracle(empty, int(vertex)))
    data = LabeledDataset.from_labels(init, labels, provenance="active-learning")

    all_vertices = np.arange(mesh.n_vertices)
    iteration = 0
    classifier = train(mesh, basis, data, priors=priors,
                       seed=child_seed(iteration), nuts=nuts, n_lat=n_lat,
                       nu=nu, kappa_convention=kappa_convention)
    while True:
        done = len(data) >= budget
        if done and on_iteration is None:
            break
        field = predict(classifier, all_vertices, thin=predict_thin)
        if on_iteration is not None:
            on_iteration(classifier, data, field)
        if done:
            break
        vertex = acquire_next(field, mesh, exclude_boundary=exclude_boundary,
                              exclude=data.vertex_ids)
        label = query_oracle(data, vertex)
        data = data.with_entry(vertex, label)
        iteration += 1
        classifier = train(mesh, basis, data, priors=priors,
                           seed=child_seed(iteration), nuts=nuts, n_lat=n_lat,
                           nu=nu, kappa_convention=kappa_convention)
    return data, classifier
