"""Single-fidelity Gaussian process classifier on the mesh.

Training runs NUTS over the kernel hyperparameters and the non-centered
latent weights; prediction conditions each posterior draw on the latent
values it implies at the training vertices and averages the resulting
Gaussians before applying the logistic link.
"""
from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .inference import (
    LatentClassifierModel,
    NutsConfig,
    PosteriorSamples,
    PriorSpec,
    _sigmoid,
    run_nuts,
)
from .kernel import spectral_weights
from .laplace import SpectralBasis
from .mesh import TriangleMesh, write_ply

_LOGGER = logging.getLogger(__name__)

FIDELITIES = ("low", "high")
MODEL_MAGIC = b"MGPC-MDL1"


@dataclass
class LabeledDataset:
    """(vertex, binary label, fidelity) records."""

    vertex_ids: np.ndarray
    labels: np.ndarray
    fidelities: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.vertex_ids = np.asarray(self.vertex_ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.fidelities = np.asarray(self.fidelities, dtype="<U4")
        if not (self.vertex_ids.shape == self.labels.shape == self.fidelities.shape):
            raise ValueError("vertex_ids, labels and fidelities must align")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        bad = set(np.unique(self.fidelities)) - set(FIDELITIES)
        if bad:
            raise ValueError(f"unknown fidelity values {sorted(bad)}")
        keys = list(zip(self.vertex_ids.tolist(), self.fidelities.tolist()))
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (vertex_id, fidelity) pair")

    def __len__(self) -> int:
        return self.vertex_ids.size

    def validate_for_mesh(self, mesh: TriangleMesh) -> None:
        if len(self) and (self.vertex_ids.min() < 0
                          or self.vertex_ids.max() >= mesh.n_vertices):
            raise ValueError("dataset references vertices outside the mesh")

    def subset(self, fidelity: str) -> "LabeledDataset":
        if fidelity not in FIDELITIES:
            raise ValueError(f"fidelity must be one of {FIDELITIES}")
        keep = self.fidelities == fidelity
        return LabeledDataset(
            self.vertex_ids[keep], self.labels[keep], self.fidelities[keep],
            provenance=self.provenance,
        )

    def with_entry(self, vertex_id: int, label: int,
                   fidelity: str = "high") -> "LabeledDataset":
        return LabeledDataset(
            np.append(self.vertex_ids, vertex_id),
            np.append(self.labels, label),
            np.append(self.fidelities, fidelity),
            provenance=self.provenance,
        )

    @classmethod
    def from_labels(cls, vertex_ids, labels, fidelity: str = "high",
                    provenance: str = "") -> "LabeledDataset":
        vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
        return cls(
            vertex_ids,
            np.asarray(labels, dtype=np.int64),
            np.full(vertex_ids.shape, fidelity, dtype="<U4"),
            provenance=provenance,
        )


def read_labels_csv(path) -> LabeledDataset:
    """Read the ``vertex_id,label,fidelity`` CSV format."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["vertex_id", "label", "fidelity"]:
            raise ValueError(
                f"{path}: expected header 'vertex_id,label,fidelity', got {header}"
            )
        ids, labels, fids = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            fids.append(row[2].strip())
    return LabeledDataset(np.array(ids, dtype=np.int64),
                          np.array(labels, dtype=np.int64),
                          np.array(fids, dtype="<U4"),
                          provenance=str(path))


def write_labels_csv(path, dataset: LabeledDataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex_id", "label", "fidelity"])
        for vid, label, fid in zip(dataset.vertex_ids, dataset.labels,
                                   dataset.fidelities):
            writer.writerow([int(vid), int(label), fid])


def class_probability(latent_mean: np.ndarray) -> np.ndarray:
    """Logistic link, clipped away from 0/1 where float rounding lands there.

    The mathematical value sigma(mu) lies strictly inside (0, 1); the clip
    restores that invariant for saturated means.
    """
    p = _sigmoid(np.asarray(latent_mean))
    return np.clip(p, 1e-15, 1.0 - 1e-15)


@dataclass
class ClassProbabilityField:
    """Posterior predictive summary at a set of query vertices."""

    vertices: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    probability: np.ndarray
    samples_used: int

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vertex_id", "prob", "mu", "var"])
            for vid, p, m, v in zip(self.vertices, self.probability,
                                    self.mean, self.variance):
                writer.writerow([int(vid), repr(float(p)), repr(float(m)),
                                 repr(float(v))])

    def export_ply(self, path, mesh: TriangleMesh) -> None:
        """Write the mesh with prob/mu/var vertex properties (full mesh only)."""
        if not np.array_equal(self.vertices, np.arange(mesh.n_vertices)):
            raise ValueError("PLY export needs a field covering every vertex")
        write_ply(path, mesh, {"prob": self.probability, "mu": self.mean,
                               "var": self.variance})


@dataclass
class TrainedClassifier:
    """Posterior draws plus everything needed to predict."""

    basis: SpectralBasis
    train_idx: np.ndarray
    train_labels: np.ndarray
    samples: PosteriorSamples
    priors: PriorSpec
    n_lat: int
    nu: float = 1.5
    d: int = 2
    kappa_convention: str = "paper-eq6"
    jitter_initial: float = 1e-6
    jitter_max: float = 1e-2

    def model(self) -> LatentClassifierModel:
        return LatentClassifierModel(
            self.basis, self.train_idx, self.train_labels, self.priors,
            n_lat=self.n_lat, nu=self.nu, d=self.d,
            kappa_convention=self.kappa_convention,
        )


def train(mesh: TriangleMesh, basis: SpectralBasis, data: LabeledDataset,
          priors: Optional[PriorSpec] = None, seed: int = 0,
          nuts: NutsConfig = NutsConfig(), n_lat: int = 200,
          nu: float = 1.5, kappa_convention: str = "paper-eq6") -> TrainedClassifier:
    """Fit the classifier to every entry of ``data``.

    Callers wanting a specific fidelity level filter the dataset first
    (``data.subset("high")``); entries are used as given here.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    data.validate_for_mesh(mesh)
    if np.unique(data.vertex_ids).size != len(data):
        raise ValueError("duplicate training vertices; filter by fidelity first")
    if priors is None:
        priors = PriorSpec.single_fidelity()
    n_lat = min(n_lat, basis.n_eig)

    model = LatentClassifierModel(
        basis, data.vertex_ids, data.labels, priors, n_lat=n_lat, nu=nu,
        kappa_convention=kappa_convention,
    )
    samples = run_nuts(model, seed=seed, config=nuts)
    return TrainedClassifier(
        basis=basis,
        train_idx=data.vertex_ids.copy(),
        train_labels=data.labels.copy(),
        samples=samples,
        priors=priors,
        n_lat=n_lat,
        nu=nu,
        kappa_convention=kappa_convention,
    )


def _solve_with_jitter(k_matrix: np.ndarray, scale: float, initial: float,
                       maximum: float, draw: int):
    """Cholesky of K + jitter*I, escalating jitter tenfold on failure."""
    jitter = initial * scale
    while True:
        try:
            return scipy.linalg.cho_factor(
                k_matrix + jitter * np.eye(k_matrix.shape[0]), lower=True
            ), jitter
        except scipy.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > maximum * scale:
                raise NumericalError(
                    f"draw {draw}: covariance not factorizable even with "
                    f"jitter {maximum * scale:g}"
                ) from None
            _LOGGER.warning("draw %d: escalating jitter to %g", draw, jitter)


def predict(classifier: TrainedClassifier, query,
            thin: int = 1) -> ClassProbabilityField:
    """Average the per-draw conditional Gaussians at the query vertices.

    Per draw the conditional mean is k(Q, X) K^-1 f and the variance is
    k(q, q) - k(q, X) K^-1 k(X, q); both are accumulated in the spectral
    factorization of the kernel, so the query-side work is batched into a
    few large products after the per-draw solves. ``thin`` keeps every
    thin-th posterior draw; the default uses all of them. Deterministic:
    no fresh randomness enters.
    """
    query = np.asarray(query, dtype=np.int64)
    basis = classifier.basis
    if query.size and (query.min() < 0 or query.max() >= basis.n_vertices):
        raise ValueError("query vertices outside the mesh")

    expansion = classifier.model().expansion
    modes_train = expansion.modes_at(classifier.train_idx)
    modes_full = basis.eigenvectors[:, classifier.train_idx]  # (n_eig, N)

    etas = classifier.samples.constrained["eta"][::thin]
    ells = classifier.samples.constrained["ell"][::thin]
    weights = classifier.samples.constrained["weights"][::thin]
    n_used = etas.shape[0]
    if n_used == 0:
        raise ValueError("no posterior draws available")

    n_eig = basis.n_eig
    mean_modes = np.zeros(n_eig)            # sum_s scale_s s_s (Psi_X alpha_s)
    diag_modes = np.zeros(n_eig)            # sum_s scale_s s_s
    quad = np.zeros((n_eig, n_eig))         # sum_s W_s K_s^-1 W_s^T
    for s in range(n_used):
        params = expansion.params(float(etas[s]), float(ells[s]))
        state = expansion.state(float(etas[s]), float(ells[s]))
        f_train = expansion.field(state, modes_train, weights[s])

        s_weights = params.eta ** 2 / state.norm_const \
            * spectral_weights(basis.eigenvalues, params)
        weighted = s_weights[:, None] * modes_full      # (n_eig, N)
        k_train = modes_full.T @ weighted
        factor, _ = _solve_with_jitter(
            k_train, float(etas[s]) ** 2, classifier.jitter_initial,
            classifier.jitter_max, draw=s,
        )
        mean_modes += weighted @ scipy.linalg.cho_solve(factor, f_train)
        diag_modes += s_weights
        half = scipy.linalg.solve_triangular(
            factor[0], weighted.T, lower=factor[1])     # (N, n_eig)
        quad += half.T @ half

    modes_query = basis.eigenvectors[:, query]          # (n_eig, n_q)
    mean = (mean_modes @ modes_query) / n_used
    prior_diag = diag_modes @ modes_query ** 2
    reduction = np.einsum("iq,iq->q", modes_query, quad @ modes_query)
    variance = np.maximum((prior_diag - reduction) / n_used, 0.0)
    return ClassProbabilityField(
        vertices=query,
        mean=mean,
        variance=variance,
        probability=class_probability(mean),
        samples_used=n_used,
    )


# ---------------------------------------------------------------------------
# Model persistence: JSON header + raw little-endian float64 blocks
# ---------------------------------------------------------------------------

def write_model_file(path, header: dict, arrays: dict) -> None:
    # Blocks are stored in sorted name order, matching the sorted JSON the
    # reader will iterate.
    header = dict(header)
    header["arrays"] = {name: list(arrays[name].shape)
                        for name in sorted(arrays)}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def read_model_file(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic {magic!r})")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        arrays = {}
        for name, shape in header["arrays"].items():
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
            arrays[name] = data.reshape(shape).copy()
    return header, arrays


def save_classifier(path, classifier: TrainedClassifier,
                    meta: Optional[dict] = None) -> None:
    pr = classifier.priors
    header = {
        "model": "gp",
        "n_lat": classifier.n_lat,
        "nu": classifier.nu,
        "d": classifier.d,
        "kappa_convention": classifier.kappa_convention,
        "priors": {"eta_scale": pr.eta_scale, "ell_shape": pr.ell_shape,
                   "ell_rate": pr.ell_rate},
        "n_warmup": classifier.samples.n_warmup,
        "step_size": classifier.samples.step_size,
        "seed": classifier.samples.seed,
        "meta": meta or {},
    }
    arrays = {
        "train_vertex_ids": classifier.train_idx.astype(np.float64),
        "train_labels": classifier.train_labels.astype(np.float64),
        "draws": classifier.samples.unconstrained,
        "accept_stat": classifier.samples.accept_stat,
        "divergent": classifier.samples.divergent.astype(np.float64),
    }
    write_model_file(path, header, arrays)


def load_classifier(path, basis: SpectralBasis) -> TrainedClassifier:
    header, arrays = read_model_file(path)
    if header["model"] != "gp":
        raise ValueError(f"{path}: expected a gp model, found {header['model']!r}")
    draws = arrays["draws"]
    priors = PriorSpec(eta_scale=header["priors"]["eta_scale"],
                       ell_shape=header["priors"]["ell_shape"],
                       ell_rate=header["priors"]["ell_rate"])
    constrained = {
        "eta": np.exp(draws[:, 0]),
        "ell": np.exp(draws[:, 1]),
        "weights": draws[:, 2:].copy(),
    }
    samples = PosteriorSamples(
        unconstrained=draws,
        constrained=constrained,
        n_warmup=int(header["n_warmup"]),
        n_kept=draws.shape[0],
        accept_stat=arrays["accept_stat"],
        divergent=arrays["divergent"].astype(bool),
        step_size=float(header["step_size"]),
        seed=int(header["seed"]),
    )
    return TrainedClassifier(
        basis=basis,
        train_idx=arrays["train_vertex_ids"].astype(np.int64),
        train_labels=arrays["train_labels"].astype(np.int64),
        samples=samples,
        priors=priors,
        n_lat=int(header["n_lat"]),
        nu=float(header["nu"]),
        d=int(header["d"]),
        kappa_convention=header["kappa_convention"],
    )
