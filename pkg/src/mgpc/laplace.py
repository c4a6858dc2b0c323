"""FEM operators on triangle meshes and the truncated spectral basis.

Linear shape functions give the cotangent stiffness matrix and either the
consistent or the row-sum lumped mass matrix. The generalized symmetric
eigenproblem (stiffness, mass) is solved for the algebraically smallest
pairs with shift-invert Lanczos, falling back to a dense solver when the
requested count approaches the mesh size.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .mesh import TriangleMesh

CACHE_MAGIC = b"MGPC-EIG1"


@dataclass(eq=False)
class SpectralBasis:
    """Truncated eigenpairs of the surface Laplacian.

    ``eigenvectors[i]`` holds the per-vertex values of the i-th mode;
    modes are mass-orthonormal and sorted by ascending eigenvalue.
    ``mass_diagonal`` carries the lumped mass (vertex areas) used for
    area-weighted averages downstream.
    """

    eigenvalues: np.ndarray       # (n_eig,)
    eigenvectors: np.ndarray      # (n_eig, n_vertices)
    mass_diagonal: np.ndarray     # (n_vertices,)
    _diag_weight: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        self.eigenvectors = np.asarray(self.eigenvectors, dtype=np.float64)
        self.mass_diagonal = np.asarray(self.mass_diagonal, dtype=np.float64)
        if self.eigenvectors.shape != (self.n_eig, self.n_vertices):
            raise ValueError(
                f"eigenvectors shape {self.eigenvectors.shape} does not match "
                f"{self.n_eig} eigenvalues and {self.n_vertices} mass entries"
            )

    @property
    def n_eig(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.mass_diagonal.shape[0]

    def diag_weight(self) -> np.ndarray:
        """Area-weighted mean of each squared mode: q_i = sum_v a_v psi_i(v)^2 / A."""
        if self._diag_weight is None:
            total = self.mass_diagonal.sum()
            q = (self.eigenvectors ** 2) @ self.mass_diagonal / total
            q.setflags(write=False)
            object.__setattr__(self, "_diag_weight", q)
        return self._diag_weight

    def truncate(self, n_eig: int) -> "SpectralBasis":
        if not 1 <= n_eig <= self.n_eig:
            raise ValueError(f"n_eig must be in [1, {self.n_eig}]")
        if n_eig == self.n_eig:
            return self
        return SpectralBasis(
            self.eigenvalues[:n_eig],
            self.eigenvectors[:n_eig],
            self.mass_diagonal,
        )

    def save(self, path) -> None:
        """Write the little-endian binary cache file."""
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<QQ", self.n_vertices, self.n_eig))
            fh.write(self.eigenvalues.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(self.eigenvectors, dtype="<f8").tobytes())
            fh.write(self.mass_diagonal.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SpectralBasis":
        with open(path, "rb") as fh:
            magic = fh.read(len(CACHE_MAGIC))
            if magic != CACHE_MAGIC:
                raise ValueError(f"{path}: not an eigenbasis cache (bad magic {magic!r})")
            n_vertices, n_eig = struct.unpack("<QQ", fh.read(16))
            payload = fh.read()
        expected = 8 * (n_eig + n_eig * n_vertices + n_vertices)
        if len(payload) != expected:
            raise ValueError(
                f"{path}: truncated cache, expected {expected} payload bytes, "
                f"got {len(payload)}"
            )
        values = np.frombuffer(payload, dtype="<f8", count=n_eig)
        vectors = np.frombuffer(
            payload, dtype="<f8", count=n_eig * n_vertices, offset=8 * n_eig
        ).reshape(n_eig, n_vertices)
        mass = np.frombuffer(
            payload, dtype="<f8", count=n_vertices,
            offset=8 * n_eig * (1 + n_vertices),
        )
        return cls(values.copy(), vectors.copy(), mass.copy())


def assemble_operators(mesh: TriangleMesh, mass: str = "lumped"):
    """Assemble the stiffness and mass matrices (CSR).

    Parameters
    ----------
    mesh : TriangleMesh
    mass : {"lumped", "consistent"}
        Row-sum lumped (diagonal) or consistent mass.

    Returns
    -------
    (stiffness, mass) : scipy.sparse.csr_matrix pair, both symmetric.
    """
    if mass not in ("lumped", "consistent"):
        raise ValueError(f"mass must be 'lumped' or 'consistent', got {mass!r}")
    verts = mesh.vertices
    tris = mesh.triangles
    areas = mesh.triangle_areas
    n = mesh.n_vertices

    # Edge vector opposite local vertex k: E_k = p_{k+2} - p_{k+1} (mod 3).
    # Local stiffness is (E_i . E_j) / (4 A).
    e = np.stack(
        [
            verts[tris[:, 2]] - verts[tris[:, 1]],
            verts[tris[:, 0]] - verts[tris[:, 2]],
            verts[tris[:, 1]] - verts[tris[:, 0]],
        ],
        axis=1,
    )  # (m, 3, 3)

    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tris[:, i])
            cols.append(tris[:, j])
            vals.append(np.einsum("td,td->t", e[:, i], e[:, j]) / (4.0 * areas))
    stiffness = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()

    if mass == "lumped":
        mass_matrix = sp.diags(mesh.vertex_areas, format="csr")
    else:
        rows, cols, vals = [], [], []
        for i in range(3):
            for j in range(3):
                rows.append(tris[:, i])
                cols.append(tris[:, j])
                vals.append(areas * (1.0 / 6.0 if i == j else 1.0 / 12.0))
        mass_matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
    return stiffness, mass_matrix


def solve_spectrum(stiffness, mass, n_eig: int, seed: int = 0,
                   shift: float = -1e-8, maxiter: int | None = None) -> SpectralBasis:
    """Smallest ``n_eig`` eigenpairs of the (stiffness, mass) pencil.

    Shift-invert Lanczos (ARPACK) with a deterministic seeded start vector;
    a dense generalized solver handles requests for (nearly) the full
    spectrum, where Lanczos cannot run. Eigenvectors come back
    mass-orthonormal, ascending, with the largest-magnitude entry of each
    made positive so repeated runs are byte-stable.
    """
    n = stiffness.shape[0]
    if not 1 <= n_eig <= n:
        raise ValueError(f"n_eig must be in [1, {n}]")
    if maxiter is None:
        maxiter = 10 * n_eig

    dense = n_eig > n - 2 or n <= 64
    if dense:
        a = np.asarray(stiffness.todense())
        m = np.asarray(mass.todense())
        values, vectors = scipy.linalg.eigh(a, m)
        values = values[:n_eig]
        vectors = vectors[:, :n_eig]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            values, vectors = spla.eigsh(
                stiffness, k=n_eig, M=mass, sigma=shift, which="LM",
                v0=v0, maxiter=maxiter,
            )
        except spla.ArpackNoConvergence as exc:
            got = 0 if exc.eigenvalues is None else len(exc.eigenvalues)
            raise NumericalError(
                f"eigensolver converged only {got}/{n_eig} pairs "
                f"after {maxiter} iterations"
            ) from exc

    order = np.argsort(values)
    values = values[order]
    vectors = vectors[:, order]

    # Exact mass-normalization plus the deterministic sign convention.
    mv = mass @ vectors
    norms = np.sqrt(np.einsum("ij,ij->j", vectors, mv))
    vectors = vectors / norms
    peaks = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[peaks, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors = vectors * signs

    # Numerical round-off can leave a tiny negative lambda_0 on closed meshes.
    values = np.where(np.abs(values) < 1e-12, np.maximum(values, 0.0), values)

    mass_diagonal = np.asarray(mass.sum(axis=1)).ravel()
    return SpectralBasis(values, np.ascontiguousarray(vectors.T), mass_diagonal)


def build_basis(mesh: TriangleMesh, n_eig: int, mass: str = "lumped",
                seed: int = 0) -> SpectralBasis:
    """Assemble operators and solve for the first ``n_eig`` pairs."""
    a, m = assemble_operators(mesh, mass=mass)
    return solve_spectrum(a, m, n_eig, seed=seed)
