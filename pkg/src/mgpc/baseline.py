"""Geodesic nearest-neighbor classifier, the benchmark comparator."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .gpc import LabeledDataset
from .geodesic import HeatGeodesicSolver
from .mesh import TriangleMesh


def nn_classify(mesh: TriangleMesh, data: LabeledDataset, query,
                solver: Optional[HeatGeodesicSolver] = None) -> np.ndarray:
    """Label each query with the geodesically closest training label.

    Ties go to the training point with the lowest vertex id. One heat
    distance field is solved per training vertex; pass a shared solver to
    reuse fields already computed elsewhere (e.g. by the design stage).
    """
    if len(data) == 0:
        raise ValueError("nearest-neighbor needs at least one training point")
    data.validate_for_mesh(mesh)
    query = np.asarray(query, dtype=np.int64)

    train_ids, first = np.unique(data.vertex_ids, return_index=True)
    labels = data.labels[first]
    for vid in train_ids:
        entry_labels = data.labels[data.vertex_ids == vid]
        if np.unique(entry_labels).size > 1:
            raise ValueError(
                f"vertex {int(vid)} carries conflicting labels across entries"
            )

    if solver is None:
        solver = HeatGeodesicSolver(mesh)
    # train_ids is ascending, so the first minimum is the lowest vertex id.
    distances = np.stack(
        [solver.field(int(vid)).distances[query] for vid in train_ids]
    )
    nearest = np.argmin(distances, axis=0)
    return labels[nearest]
