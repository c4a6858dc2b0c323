"""Gradient-based MCMC for the classifier posteriors.

The sampler is Hamiltonian Monte Carlo with No-U-Turn termination and
dual-averaging step-size adaptation. Models expose the unconstrained log
posterior with its analytic gradient; positivity of the amplitude and
length-scale is handled by log transforms whose Jacobian terms are part
of the model density. The latent Gaussian field enters through the
non-centered spectral expansion

    f(x) = (eta / sqrt(C)) * sum_i w_i (kappa^2 + lambda_i)^(-nu/2 - d/4)
           * psi_i(x),      w_i ~ N(0, 1),

which reduces the infinite-dimensional latent function to ``n_lat``
weights with an identity prior covariance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError
from .kernel import KernelParams, spectral_weights

_LOGGER = logging.getLogger(__name__)

_DUAL_GAMMA = 0.05
_DUAL_T0 = 10.0
_DUAL_KAPPA = 0.75


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameter priors.

    eta ~ HalfNormal(eta_scale), ell ~ Gamma(ell_shape, ell_rate) and, for
    the multi-fidelity model only, rho ~ Normal(rho_mean, rho_scale).
    """

    eta_scale: float = 10000.0
    ell_shape: float = 1.0
    ell_rate: float = 1.0
    rho_mean: float = 0.0
    rho_scale: float = 10.0

    def __post_init__(self):
        for name in ("eta_scale", "ell_shape", "ell_rate", "rho_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def single_fidelity(cls) -> "PriorSpec":
        return cls(eta_scale=10000.0, ell_shape=1.0, ell_rate=1.0)

    @classmethod
    def multi_fidelity(cls) -> "PriorSpec":
        return cls(eta_scale=10000.0, ell_shape=2.0, ell_rate=2.0,
                   rho_mean=0.0, rho_scale=10.0)


@dataclass(frozen=True)
class NutsConfig:
    n_warmup: int = 500
    n_samples: int = 500
    target_accept: float = 0.9
    max_tree_depth: int = 10
    initial_step_size: Optional[float] = None  # None: heuristic search
    divergence_threshold: float = 1000.0
    # Windowed diagonal mass-matrix adaptation (needs a long enough warmup;
    # shorter warmups fall back to step-size-only adaptation).
    adapt_mass: bool = True
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25


@dataclass
class PosteriorSamples:
    """Kept draws plus per-draw diagnostics from one chain."""

    unconstrained: np.ndarray          # (n_kept, dim)
    constrained: dict                  # name -> (n_kept, ...) arrays
    n_warmup: int
    n_kept: int
    accept_stat: np.ndarray            # mean trajectory acceptance per draw
    divergent: np.ndarray              # bool per draw
    step_size: float
    seed: int

    @property
    def divergence_fraction(self) -> float:
        return float(self.divergent.mean()) if self.n_kept else 0.0

    def diagnostics_report(self) -> dict:
        """JSON-ready summary: step size, divergences, quantiles."""
        quantiles = {}
        qs = [0.05, 0.25, 0.5, 0.75, 0.95]
        for name, draws in self.constrained.items():
            arr = np.asarray(draws)
            if arr.ndim == 1:
                quantiles[name] = dict(zip(
                    [f"q{int(100 * q)}" for q in qs],
                    np.quantile(arr, qs).tolist(),
                ))
        return {
            "n_warmup": self.n_warmup,
            "n_kept": self.n_kept,
            "step_size": self.step_size,
            "divergences": int(self.divergent.sum()),
            "divergence_fraction": self.divergence_fraction,
            "mean_accept_stat": float(self.accept_stat.mean()),
            "posterior_quantiles": quantiles,
            "seed": self.seed,
        }


def log_posterior(model, params: np.ndarray):
    """Unconstrained log posterior and its analytic gradient."""
    params = np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(params)):
        raise NumericalError("non-finite parameter vector")
    return model.logp_grad(params)


# ---------------------------------------------------------------------------
# NUTS
# ---------------------------------------------------------------------------

def run_nuts(model, seed: int, config: NutsConfig = NutsConfig()) -> PosteriorSamples:
    """Sample the model posterior with one NUTS chain.

    Warmup tunes the step size by dual averaging throughout and, when the
    warmup is long enough, a diagonal metric over expanding windows in
    the middle (variance estimates regularized toward unity). The chain
    is deterministic for a fixed seed: every random quantity flows from
    one seeded generator. Divergent transitions are flagged per draw; a
    fraction above 20% logs a warning but the run still returns.
    """
    rng = np.random.default_rng(seed)
    dim = model.dim

    if hasattr(model, "initial_position"):
        z = np.asarray(model.initial_position(rng), dtype=np.float64)
    else:
        z = 0.1 * rng.standard_normal(dim)
    logp, grad = model.logp_grad(z)
    if not np.isfinite(logp):
        raise NumericalError(f"non-finite initial log density {logp}")

    inv_metric = np.ones(dim)
    window_ends = _adaptation_windows(config)

    if config.initial_step_size is not None:
        eps = float(config.initial_step_size)
    else:
        eps = _find_reasonable_epsilon(model, z, logp, grad, rng, inv_metric)

    averaging = _DualAveraging(eps, config.target_accept)
    welford_count = 0
    welford_mean = np.zeros(dim)
    welford_m2 = np.zeros(dim)

    n_total = config.n_warmup + config.n_samples
    kept = np.empty((config.n_samples, dim))
    accept_stat = np.empty(config.n_samples)
    divergent = np.zeros(config.n_samples, dtype=bool)

    for m in range(1, n_total + 1):
        r0 = rng.standard_normal(dim) / np.sqrt(inv_metric)
        joint0 = logp - 0.5 * float(inv_metric @ (r0 * r0))
        # Slice variable: log u = joint0 - Exp(1).
        log_u = joint0 - rng.exponential()

        state_minus = (z, r0, grad)
        state_plus = (z, r0, grad)
        n_valid = 1
        keep_going = True
        sum_alpha = 0.0
        sum_n_alpha = 0
        diverged = False
        depth = 0

        while keep_going and depth < config.max_tree_depth:
            direction = 1 if rng.random() < 0.5 else -1
            if direction == -1:
                state_minus, _, proposal, n_prime, s_prime, alpha, n_alpha, div = \
                    _build_tree(model, state_minus, log_u, direction, depth,
                                eps, joint0, rng, config.divergence_threshold,
                                inv_metric)
            else:
                _, state_plus, proposal, n_prime, s_prime, alpha, n_alpha, div = \
                    _build_tree(model, state_plus, log_u, direction, depth,
                                eps, joint0, rng, config.divergence_threshold,
                                inv_metric)
            diverged = diverged or div
            if s_prime and n_prime > 0 and rng.random() < min(1.0, n_prime / n_valid):
                z, logp, grad = proposal
            n_valid += n_prime
            sum_alpha += alpha
            sum_n_alpha += n_alpha
            keep_going = s_prime and _no_u_turn(state_minus, state_plus,
                                                inv_metric)
            depth += 1

        avg_alpha = sum_alpha / max(sum_n_alpha, 1)
        if m <= config.n_warmup:
            eps = averaging.update(avg_alpha)
            if window_ends and m > config.init_buffer:
                welford_count += 1
                delta = z - welford_mean
                welford_mean += delta / welford_count
                welford_m2 += delta * (z - welford_mean)
                if m in window_ends:
                    var = welford_m2 / max(welford_count - 1, 1)
                    n = welford_count
                    inv_metric = (n / (n + 5.0)) * var \
                        + 1e-3 * (5.0 / (n + 5.0)) * np.ones(dim)
                    welford_count = 0
                    welford_mean = np.zeros(dim)
                    welford_m2 = np.zeros(dim)
                    eps = _find_reasonable_epsilon(model, z, logp, grad, rng,
                                                   inv_metric)
                    averaging = _DualAveraging(eps, config.target_accept)
            if m == config.n_warmup:
                eps = averaging.final()
        else:
            k = m - config.n_warmup - 1
            kept[k] = z
            accept_stat[k] = avg_alpha
            divergent[k] = diverged

    if config.n_samples and divergent.mean() > 0.2:
        _LOGGER.warning(
            "NUTS: %.0f%% divergent transitions (threshold 20%%); "
            "posterior may be unreliable", 100.0 * divergent.mean(),
        )

    constrained = model.constrain(kept) if hasattr(model, "constrain") else {}
    return PosteriorSamples(
        unconstrained=kept,
        constrained=constrained,
        n_warmup=config.n_warmup,
        n_kept=config.n_samples,
        accept_stat=accept_stat,
        divergent=divergent,
        step_size=eps,
        seed=seed,
    )


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, eps0: float, target: float):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + _DUAL_T0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept)
        log_eps = self.mu - math.sqrt(self.count) / _DUAL_GAMMA * self.h_bar
        step_frac = self.count ** (-_DUAL_KAPPA)
        self.log_eps_bar = step_frac * log_eps \
            + (1.0 - step_frac) * self.log_eps_bar
        return math.exp(log_eps)

    def final(self) -> float:
        return math.exp(self.log_eps_bar) if self.count else math.exp(self.mu) / 10.0


def _adaptation_windows(config: NutsConfig) -> set:
    """Warmup iterations at which the diagonal metric is re-estimated."""
    if not config.adapt_mass:
        return set()
    needed = config.init_buffer + config.base_window + config.term_buffer
    if config.n_warmup < needed:
        return set()
    ends = []
    start = config.init_buffer
    size = config.base_window
    while True:
        end = start + size
        if end + config.term_buffer >= config.n_warmup:
            ends.append(config.n_warmup - config.term_buffer)
            break
        ends.append(end)
        start = end
        size *= 2
    return set(ends)


def _leapfrog(model, z, r, grad, eps, inv_metric):
    r_half = r + 0.5 * eps * grad
    z_new = z + eps * (inv_metric * r_half)
    logp_new, grad_new = model.logp_grad(z_new)
    if not np.isfinite(logp_new):
        return z_new, r_half, np.zeros_like(grad), -np.inf
    r_new = r_half + 0.5 * eps * grad_new
    return z_new, r_new, grad_new, logp_new


def _kinetic(r, inv_metric) -> float:
    return 0.5 * float(inv_metric @ (r * r))


def _find_reasonable_epsilon(model, z, logp, grad, rng, inv_metric) -> float:
    eps = 1.0
    r = rng.standard_normal(z.shape[0]) / np.sqrt(inv_metric)
    joint = logp - _kinetic(r, inv_metric)
    _, r_new, _, logp_new = _leapfrog(model, z, r, grad, eps, inv_metric)
    log_ratio = (logp_new - _kinetic(r_new, inv_metric)) - joint
    while not np.isfinite(log_ratio):
        eps *= 0.5
        if eps < 1e-12:
            raise NumericalError("step size heuristic failed: no finite energy")
        _, r_new, _, logp_new = _leapfrog(model, z, r, grad, eps, inv_metric)
        log_ratio = (logp_new - _kinetic(r_new, inv_metric)) - joint

    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * log_ratio <= -direction * math.log(2.0):
            break
        eps *= 2.0 ** direction
        _, r_new, _, logp_new = _leapfrog(model, z, r, grad, eps, inv_metric)
        log_ratio = (logp_new - _kinetic(r_new, inv_metric)) - joint
        if not np.isfinite(log_ratio):
            log_ratio = -np.inf
    else:
        raise NumericalError("step size heuristic did not terminate")
    return eps


def _no_u_turn(state_minus, state_plus, inv_metric) -> bool:
    z_minus, r_minus, _ = state_minus
    z_plus, r_plus, _ = state_plus
    span = z_plus - z_minus
    return bool((span @ (inv_metric * r_minus)) >= 0.0
                and (span @ (inv_metric * r_plus)) >= 0.0)


def _build_tree(model, state, log_u, direction, depth, eps, joint0, rng,
                div_threshold, inv_metric):
    """Recursive trajectory doubling; returns edge states and the proposal."""
    z, r, grad = state
    if depth == 0:
        z_new, r_new, grad_new, logp_new = _leapfrog(
            model, z, r, grad, direction * eps, inv_metric
        )
        joint = logp_new - _kinetic(r_new, inv_metric) \
            if np.isfinite(logp_new) else -np.inf
        n_prime = int(log_u <= joint)
        diverged = (log_u - joint) > div_threshold if np.isfinite(joint) else True
        s_prime = not diverged
        alpha = min(1.0, math.exp(min(joint - joint0, 0.0))) if np.isfinite(joint) else 0.0
        edge = (z_new, r_new, grad_new)
        return edge, edge, (z_new, logp_new, grad_new), n_prime, s_prime, alpha, 1, diverged

    inner_minus, inner_plus, proposal, n1, s1, a1, na1, div1 = _build_tree(
        model, state, log_u, direction, depth - 1, eps, joint0, rng,
        div_threshold, inv_metric
    )
    n_total, alpha, n_alpha, diverged = n1, a1, na1, div1
    if s1:
        if direction == -1:
            inner_minus, _, proposal2, n2, s2, a2, na2, div2 = _build_tree(
                model, inner_minus, log_u, direction, depth - 1, eps, joint0,
                rng, div_threshold, inv_metric
            )
        else:
            _, inner_plus, proposal2, n2, s2, a2, na2, div2 = _build_tree(
                model, inner_plus, log_u, direction, depth - 1, eps, joint0,
                rng, div_threshold, inv_metric
            )
        if n2 > 0 and rng.random() < n2 / max(n1 + n2, 1):
            proposal = proposal2
        n_total = n1 + n2
        alpha += a2
        n_alpha += na2
        diverged = diverged or div2
        s_prime = s1 and s2 and _no_u_turn(inner_minus, inner_plus, inv_metric)
    else:
        s_prime = False
    return inner_minus, inner_plus, proposal, n_total, s_prime, alpha, n_alpha, diverged


# ---------------------------------------------------------------------------
# Log densities for the hyperparameter priors (unconstrained space)
# ---------------------------------------------------------------------------

def half_normal_logpdf_grad(value: float, scale: float):
    """Density of HalfNormal(scale) at ``value`` plus d/dvalue."""
    logp = 0.5 * math.log(2.0 / math.pi) - math.log(scale) \
        - 0.5 * (value / scale) ** 2
    return logp, -value / scale ** 2


def gamma_logpdf_grad(value: float, shape: float, rate: float):
    """Density of Gamma(shape, rate) at ``value`` plus d/dvalue."""
    logp = shape * math.log(rate) - gammaln(shape) \
        + (shape - 1.0) * math.log(value) - rate * value
    return logp, (shape - 1.0) / value - rate


def normal_logpdf_grad(value: float, mean: float, scale: float):
    logp = -0.5 * math.log(2.0 * math.pi) - math.log(scale) \
        - 0.5 * ((value - mean) / scale) ** 2
    return logp, -(value - mean) / scale ** 2


def bernoulli_loglik_grad(labels: np.ndarray, latent: np.ndarray):
    """Sum of Bernoulli log likelihoods through the logistic link.

    Returns the log likelihood and its gradient wrt the latent values,
    labels - sigmoid(latent).
    """
    # log sigma(f) = -softplus(-f); log(1 - sigma(f)) = -softplus(f)
    loglik = -np.sum(
        labels * np.logaddexp(0.0, -latent)
        + (1.0 - labels) * np.logaddexp(0.0, latent)
    )
    grad = labels - _sigmoid(latent)
    return float(loglik), grad


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# Non-centered spectral expansion shared by the classifier models
# ---------------------------------------------------------------------------

@dataclass
class SpectralState:
    """Quantities depending on (eta, ell) reused across field evaluations."""

    eta: float
    ell: float
    half_weights: np.ndarray     # u_i = (kappa^2 + lambda_i)^(-(nu + d/2)/2), n_lat
    du_dell: np.ndarray          # derivative of u wrt ell
    norm_const: float            # C(ell) over the full basis
    dc_dell: float
    amplitude: float             # eta / sqrt(C)


class SpectralExpansion:
    """Latent-field plumbing for one basis truncated to ``n_lat`` modes."""

    def __init__(self, basis, n_lat: int, nu: float = 1.5, d: int = 2,
                 kappa_convention: str = "paper-eq6"):
        if not 1 <= n_lat <= basis.n_eig:
            raise ValueError(f"n_lat must be in [1, {basis.n_eig}]")
        self.basis = basis
        self.n_lat = n_lat
        self.nu = nu
        self.d = d
        self.kappa_convention = kappa_convention
        self._lam_lat = basis.eigenvalues[:n_lat]
        self._q = basis.diag_weight()

    def params(self, eta: float, ell: float) -> KernelParams:
        return KernelParams(eta=eta, ell=ell, nu=self.nu, d=self.d,
                            kappa_convention=self.kappa_convention)

    def state(self, eta: float, ell: float) -> SpectralState:
        # Hot path inside every leapfrog step: one power over the full
        # spectrum, everything else derived from it.
        if self.kappa_convention == "spde":
            k2 = 2.0 * self.nu / ell ** 2
        else:
            k2 = 1.0 / ell ** 2
        expo = self.nu + self.d / 2.0
        t_full = k2 + self.basis.eigenvalues
        s_full = t_full ** (-expo)
        c = float(self._q @ s_full)
        dc = (2.0 * expo * k2 / ell) * float(self._q @ (s_full / t_full))

        u = np.sqrt(s_full[:self.n_lat])
        # d kappa^2 / d ell = -2 kappa^2 / ell for both conventions.
        du = (expo * k2 / ell) * (u / t_full[:self.n_lat])
        return SpectralState(
            eta=eta, ell=ell, half_weights=u, du_dell=du,
            norm_const=c, dc_dell=dc, amplitude=eta / math.sqrt(c),
        )

    def modes_at(self, idx) -> np.ndarray:
        """Truncated eigenvector block at the given vertices, (n_lat, N)."""
        return self.basis.eigenvectors[:self.n_lat][:, np.asarray(idx, dtype=np.int64)]

    def field(self, state: SpectralState, modes: np.ndarray,
              weights: np.ndarray) -> np.ndarray:
        return state.amplitude * (modes.T @ (state.half_weights * weights))

    def dfield_dell(self, state: SpectralState, modes: np.ndarray,
                    weights: np.ndarray, f: np.ndarray) -> np.ndarray:
        direct = state.amplitude * (modes.T @ (state.du_dell * weights))
        return direct - 0.5 * (state.dc_dell / state.norm_const) * f

    def weight_grad(self, state: SpectralState, modes: np.ndarray,
                    latent_grad: np.ndarray) -> np.ndarray:
        """Chain rule of a latent-space gradient back onto the weights."""
        return state.amplitude * state.half_weights * (modes @ latent_grad)


class LatentClassifierModel:
    """Single-fidelity Bernoulli GP classifier in unconstrained form.

    Parameter vector: [log eta, log ell, w_1 .. w_n_lat].
    """

    def __init__(self, basis, train_idx, labels, priors: PriorSpec,
                 n_lat: int = 200, nu: float = 1.5, d: int = 2,
                 kappa_convention: str = "paper-eq6"):
        train_idx = np.asarray(train_idx, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.float64)
        if train_idx.shape != labels.shape:
            raise ValueError("train_idx and labels must have equal length")
        self.expansion = SpectralExpansion(basis, n_lat, nu=nu, d=d,
                                           kappa_convention=kappa_convention)
        self.train_idx = train_idx
        self.labels = labels
        self.priors = priors
        self._modes = self.expansion.modes_at(train_idx)

    @property
    def dim(self) -> int:
        return 2 + self.expansion.n_lat

    @property
    def n_lat(self) -> int:
        return self.expansion.n_lat

    def logp_grad(self, z: np.ndarray):
        z_eta, z_ell = z[0], z[1]
        w = z[2:]
        eta = math.exp(z_eta)
        ell = math.exp(z_ell)

        pr = self.priors
        lp_eta, d_eta = half_normal_logpdf_grad(eta, pr.eta_scale)
        lp_ell, d_ell = gamma_logpdf_grad(ell, pr.ell_shape, pr.ell_rate)
        # Log-transform Jacobians: + z and unit slope on the gradient.
        logp = lp_eta + z_eta + lp_ell + z_ell
        g_z_eta = d_eta * eta + 1.0
        g_z_ell = d_ell * ell + 1.0

        logp += -0.5 * float(w @ w) - 0.5 * w.size * math.log(2.0 * math.pi)
        g_w = -w

        if self.labels.size:
            state = self.expansion.state(eta, ell)
            f = self.expansion.field(state, self._modes, w)
            loglik, g_f = bernoulli_loglik_grad(self.labels, f)
            logp += loglik
            g_z_eta += float(g_f @ f)   # df/d log eta = f
            df_dell = self.expansion.dfield_dell(state, self._modes, w, f)
            g_z_ell += ell * float(g_f @ df_dell)
            g_w = g_w + self.expansion.weight_grad(state, self._modes, g_f)

        grad = np.concatenate(([g_z_eta, g_z_ell], g_w))
        return logp, grad

    def constrain(self, draws: np.ndarray) -> dict:
        return {
            "eta": np.exp(draws[:, 0]),
            "ell": np.exp(draws[:, 1]),
            "weights": draws[:, 2:].copy(),
        }
