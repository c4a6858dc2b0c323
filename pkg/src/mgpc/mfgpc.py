"""Two-fidelity classifier with an autoregressive latent coupling.

The high-fidelity latent function is f_H = rho * f_L + delta with
independent GP priors on f_L and delta, giving the block covariance

    K = [[ K_LL,              rho K_LH            ],
         [ rho K_LH^T,  rho^2 k_L(X_H, X_H) + K_HH ]].

Low labels are Bernoulli against sigma(f_L), high labels against
sigma(f_H); inference and prediction otherwise mirror the
single-fidelity classifier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .gpc import (
    ClassProbabilityField,
    LabeledDataset,
    _solve_with_jitter,
    class_probability,
    read_model_file,
    write_model_file,
)
from .inference import (
    NutsConfig,
    PosteriorSamples,
    PriorSpec,
    SpectralExpansion,
    bernoulli_loglik_grad,
    gamma_logpdf_grad,
    half_normal_logpdf_grad,
    normal_logpdf_grad,
    run_nuts,
)
from .kernel import KernelParams, gram_matrix, kernel_diag
from .laplace import SpectralBasis
from .mesh import TriangleMesh


@dataclass(frozen=True)
class MultiFidelityParams:
    """Kernel hyperparameters of both levels plus the coupling scale."""

    theta_low: KernelParams
    theta_high: KernelParams
    rho: float


def block_covariance(idx_low, idx_high, basis: SpectralBasis,
                     params: MultiFidelityParams) -> np.ndarray:
    """Joint prior covariance over the stacked (low, high) vertices."""
    idx_low = np.asarray(idx_low, dtype=np.int64)
    idx_high = np.asarray(idx_high, dtype=np.int64)
    rho = params.rho
    k_ll = gram_matrix(idx_low, idx_low, basis, params.theta_low)
    k_lh = rho * gram_matrix(idx_low, idx_high, basis, params.theta_low)
    k_hh = rho ** 2 * gram_matrix(idx_high, idx_high, basis, params.theta_low) \
        + gram_matrix(idx_high, idx_high, basis, params.theta_high)
    top = np.hstack([k_ll, k_lh])
    bottom = np.hstack([k_lh.T, k_hh])
    return np.vstack([top, bottom])


class MultiFidelityModel:
    """Joint Bernoulli model over both label sets, unconstrained form.

    Parameter vector:
    [log eta_L, log ell_L, log eta_H, log ell_H, rho,
     w_L (n_lat), w_delta (n_lat)].
    """

    def __init__(self, basis: SpectralBasis, idx_low, labels_low, idx_high,
                 labels_high, priors: PriorSpec, n_lat: int = 200,
                 nu: float = 1.5, d: int = 2,
                 kappa_convention: str = "paper-eq6"):
        self.expansion = SpectralExpansion(basis, n_lat, nu=nu, d=d,
                                           kappa_convention=kappa_convention)
        self.idx_low = np.asarray(idx_low, dtype=np.int64)
        self.idx_high = np.asarray(idx_high, dtype=np.int64)
        self.labels_low = np.asarray(labels_low, dtype=np.float64)
        self.labels_high = np.asarray(labels_high, dtype=np.float64)
        self.priors = priors
        self._modes_low = self.expansion.modes_at(self.idx_low)
        self._modes_high = self.expansion.modes_at(self.idx_high)

    @property
    def n_lat(self) -> int:
        return self.expansion.n_lat

    @property
    def dim(self) -> int:
        return 5 + 2 * self.n_lat

    def logp_grad(self, z: np.ndarray):
        n_lat = self.n_lat
        z_eta_l, z_ell_l, z_eta_h, z_ell_h, rho = z[:5]
        w_low = z[5:5 + n_lat]
        w_delta = z[5 + n_lat:]
        eta_l, ell_l = math.exp(z_eta_l), math.exp(z_ell_l)
        eta_h, ell_h = math.exp(z_eta_h), math.exp(z_ell_h)

        pr = self.priors
        lp_el, d_el = half_normal_logpdf_grad(eta_l, pr.eta_scale)
        lp_ll, d_ll = gamma_logpdf_grad(ell_l, pr.ell_shape, pr.ell_rate)
        lp_eh, d_eh = half_normal_logpdf_grad(eta_h, pr.eta_scale)
        lp_lh, d_lh = gamma_logpdf_grad(ell_h, pr.ell_shape, pr.ell_rate)
        lp_rho, d_rho = normal_logpdf_grad(rho, pr.rho_mean, pr.rho_scale)

        logp = lp_el + z_eta_l + lp_ll + z_ell_l \
            + lp_eh + z_eta_h + lp_lh + z_ell_h + lp_rho
        g = np.empty_like(z)
        g[0] = d_el * eta_l + 1.0
        g[1] = d_ll * ell_l + 1.0
        g[2] = d_eh * eta_h + 1.0
        g[3] = d_lh * ell_h + 1.0
        g[4] = d_rho

        logp += -0.5 * float(w_low @ w_low) - 0.5 * n_lat * math.log(2.0 * math.pi)
        logp += -0.5 * float(w_delta @ w_delta) - 0.5 * n_lat * math.log(2.0 * math.pi)
        g[5:5 + n_lat] = -w_low
        g[5 + n_lat:] = -w_delta

        exp = self.expansion
        state_l = exp.state(eta_l, ell_l)
        state_h = exp.state(eta_h, ell_h)

        f_low_at_low = exp.field(state_l, self._modes_low, w_low)
        f_low_at_high = exp.field(state_l, self._modes_high, w_low)
        delta_at_high = exp.field(state_h, self._modes_high, w_delta)
        f_high = rho * f_low_at_high + delta_at_high

        loglik_low, g_low = bernoulli_loglik_grad(self.labels_low, f_low_at_low)
        loglik_high, g_high = bernoulli_loglik_grad(self.labels_high, f_high)
        logp += loglik_low + loglik_high

        # d f_low / d log eta_L = f_low; likewise for delta and eta_H.
        g[0] += float(g_low @ f_low_at_low) + rho * float(g_high @ f_low_at_high)
        g[2] += float(g_high @ delta_at_high)
        df_ll_low = exp.dfield_dell(state_l, self._modes_low, w_low, f_low_at_low)
        df_ll_high = exp.dfield_dell(state_l, self._modes_high, w_low, f_low_at_high)
        g[1] += ell_l * (float(g_low @ df_ll_low) + rho * float(g_high @ df_ll_high))
        dd_hh = exp.dfield_dell(state_h, self._modes_high, w_delta, delta_at_high)
        g[3] += ell_h * float(g_high @ dd_hh)
        g[4] += float(g_high @ f_low_at_high)
        g[5:5 + n_lat] += exp.weight_grad(state_l, self._modes_low, g_low) \
            + rho * exp.weight_grad(state_l, self._modes_high, g_high)
        g[5 + n_lat:] += exp.weight_grad(state_h, self._modes_high, g_high)
        return logp, g

    def constrain(self, draws: np.ndarray) -> dict:
        n_lat = self.n_lat
        return {
            "eta_low": np.exp(draws[:, 0]),
            "ell_low": np.exp(draws[:, 1]),
            "eta_high": np.exp(draws[:, 2]),
            "ell_high": np.exp(draws[:, 3]),
            "rho": draws[:, 4].copy(),
            "weights_low": draws[:, 5:5 + n_lat].copy(),
            "weights_delta": draws[:, 5 + n_lat:].copy(),
        }


@dataclass
class TrainedMFClassifier:
    basis: SpectralBasis
    idx_low: np.ndarray
    labels_low: np.ndarray
    idx_high: np.ndarray
    labels_high: np.ndarray
    samples: PosteriorSamples
    priors: PriorSpec
    n_lat: int
    nu: float = 1.5
    d: int = 2
    kappa_convention: str = "paper-eq6"
    jitter_initial: float = 1e-6
    jitter_max: float = 1e-2

    def model(self) -> MultiFidelityModel:
        return MultiFidelityModel(
            self.basis, self.idx_low, self.labels_low, self.idx_high,
            self.labels_high, self.priors, n_lat=self.n_lat, nu=self.nu,
            d=self.d, kappa_convention=self.kappa_convention,
        )


def train_mf(mesh: TriangleMesh, basis: SpectralBasis, data: LabeledDataset,
             priors: Optional[PriorSpec] = None, seed: int = 0,
             nuts: NutsConfig = NutsConfig(), n_lat: int = 200,
             nu: float = 1.5,
             kappa_convention: str = "paper-eq6") -> TrainedMFClassifier:
    """Fit the two-fidelity classifier to a mixed dataset."""
    data.validate_for_mesh(mesh)
    low = data.subset("low")
    high = data.subset("high")
    if len(low) == 0 or len(high) == 0:
        raise ValueError(
            "multi-fidelity training needs both fidelity levels; "
            "use gpc.train for a single level"
        )
    if priors is None:
        priors = PriorSpec.multi_fidelity()
    n_lat = min(n_lat, basis.n_eig)

    model = MultiFidelityModel(
        basis, low.vertex_ids, low.labels, high.vertex_ids, high.labels,
        priors, n_lat=n_lat, nu=nu, kappa_convention=kappa_convention,
    )
    samples = run_nuts(model, seed=seed, config=nuts)
    return TrainedMFClassifier(
        basis=basis,
        idx_low=low.vertex_ids.copy(),
        labels_low=low.labels.copy(),
        idx_high=high.vertex_ids.copy(),
        labels_high=high.labels.copy(),
        samples=samples,
        priors=priors,
        n_lat=n_lat,
        nu=nu,
        kappa_convention=kappa_convention,
    )


def predict_mf(classifier: TrainedMFClassifier, query,
               thin: int = 1) -> ClassProbabilityField:
    """High-fidelity prediction conditioning on both label sets."""
    query = np.asarray(query, dtype=np.int64)
    basis = classifier.basis
    if query.size and (query.min() < 0 or query.max() >= basis.n_vertices):
        raise ValueError("query vertices outside the mesh")

    exp = classifier.model().expansion
    modes_low = exp.modes_at(classifier.idx_low)
    modes_high = exp.modes_at(classifier.idx_high)

    con = classifier.samples.constrained
    eta_l = con["eta_low"][::thin]
    ell_l = con["ell_low"][::thin]
    eta_h = con["eta_high"][::thin]
    ell_h = con["ell_high"][::thin]
    rho = con["rho"][::thin]
    w_low = con["weights_low"][::thin]
    w_delta = con["weights_delta"][::thin]
    n_used = eta_l.shape[0]
    if n_used == 0:
        raise ValueError("no posterior draws available")

    mean_acc = np.zeros(query.size)
    var_acc = np.zeros(query.size)
    for s in range(n_used):
        theta_l = exp.params(float(eta_l[s]), float(ell_l[s]))
        theta_h = exp.params(float(eta_h[s]), float(ell_h[s]))
        params = MultiFidelityParams(theta_low=theta_l, theta_high=theta_h,
                                     rho=float(rho[s]))

        state_l = exp.state(float(eta_l[s]), float(ell_l[s]))
        state_h = exp.state(float(eta_h[s]), float(ell_h[s]))
        f_low = exp.field(state_l, modes_low, w_low[s])
        f_high = params.rho * exp.field(state_l, modes_high, w_low[s]) \
            + exp.field(state_h, modes_high, w_delta[s])
        f_joint = np.concatenate([f_low, f_high])

        k_joint = block_covariance(classifier.idx_low, classifier.idx_high,
                                   basis, params)
        scale = float(np.mean(np.diag(k_joint)))
        factor, _ = _solve_with_jitter(
            k_joint, scale, classifier.jitter_initial, classifier.jitter_max,
            draw=s,
        )

        cross_low = params.rho * gram_matrix(query, classifier.idx_low,
                                             basis, theta_l)
        cross_high = params.rho ** 2 * gram_matrix(
            query, classifier.idx_high, basis, theta_l
        ) + gram_matrix(query, classifier.idx_high, basis, theta_h)
        cross = np.hstack([cross_low, cross_high])

        mean_acc += cross @ scipy.linalg.cho_solve(factor, f_joint)
        solved = scipy.linalg.cho_solve(factor, cross.T)
        prior_diag = params.rho ** 2 * kernel_diag(query, basis, theta_l) \
            + kernel_diag(query, basis, theta_h)
        var_acc += prior_diag - np.einsum("ij,ji->i", cross, solved)

    mean = mean_acc / n_used
    variance = np.maximum(var_acc / n_used, 0.0)
    return ClassProbabilityField(
        vertices=query,
        mean=mean,
        variance=variance,
        probability=class_probability(mean),
        samples_used=n_used,
    )


def save_mf_classifier(path, classifier: TrainedMFClassifier,
                       meta: Optional[dict] = None) -> None:
    pr = classifier.priors
    header = {
        "model": "mf",
        "n_lat": classifier.n_lat,
        "nu": classifier.nu,
        "d": classifier.d,
        "kappa_convention": classifier.kappa_convention,
        "priors": {"eta_scale": pr.eta_scale, "ell_shape": pr.ell_shape,
                   "ell_rate": pr.ell_rate, "rho_mean": pr.rho_mean,
                   "rho_scale": pr.rho_scale},
        "n_warmup": classifier.samples.n_warmup,
        "step_size": classifier.samples.step_size,
        "seed": classifier.samples.seed,
        "meta": meta or {},
    }
    arrays = {
        "idx_low": classifier.idx_low.astype(np.float64),
        "labels_low": classifier.labels_low.astype(np.float64),
        "idx_high": classifier.idx_high.astype(np.float64),
        "labels_high": classifier.labels_high.astype(np.float64),
        "draws": classifier.samples.unconstrained,
        "accept_stat": classifier.samples.accept_stat,
        "divergent": classifier.samples.divergent.astype(np.float64),
    }
    write_model_file(path, header, arrays)


def load_mf_classifier(path, basis: SpectralBasis) -> TrainedMFClassifier:
    header, arrays = read_model_file(path)
    if header["model"] != "mf":
        raise ValueError(f"{path}: expected an mf model, found {header['model']!r}")
    draws = arrays["draws"]
    n_lat = int(header["n_lat"])
    pr = header["priors"]
    priors = PriorSpec(eta_scale=pr["eta_scale"], ell_shape=pr["ell_shape"],
                       ell_rate=pr["ell_rate"], rho_mean=pr["rho_mean"],
                       rho_scale=pr["rho_scale"])
    constrained = {
        "eta_low": np.exp(draws[:, 0]),
        "ell_low": np.exp(draws[:, 1]),
        "eta_high": np.exp(draws[:, 2]),
        "ell_high": np.exp(draws[:, 3]),
        "rho": draws[:, 4].copy(),
        "weights_low": draws[:, 5:5 + n_lat].copy(),
        "weights_delta": draws[:, 5 + n_lat:].copy(),
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
    return TrainedMFClassifier(
        basis=basis,
        idx_low=arrays["idx_low"].astype(np.int64),
        labels_low=arrays["labels_low"].astype(np.int64),
        idx_high=arrays["idx_high"].astype(np.int64),
        labels_high=arrays["labels_high"].astype(np.int64),
        samples=samples,
        priors=priors,
        n_lat=n_lat,
        nu=float(header["nu"]),
        d=int(header["d"]),
        kappa_convention=header["kappa_convention"],
    )
