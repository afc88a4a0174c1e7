"""Blocked Gibbs conditionals and the sweep scheduler.

Each update resamples one block of variables from its exact conditional given
the rest of the state.  Within a block all components are conditionally
independent and read the pre-step state; blocks compose sequentially.  The
``*_conditional`` / ``*_posterior`` / ``*_log_probs`` helpers expose the
conditional parameters so tests can check them against closed forms without
going through sampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .distributions import (
    TransformCandidates,
    categorical_sample,
    categorical_sample_rows,
    dirichlet_sample,
    gamma_logpdf,
    inverse_wishart_sample,
    isotropic_logpdf_rows,
    moments_from_precision,
    mvn_logpdf_rows,
    mvn_sample,
    spd_inverse,
)
from .model import induced_velocities
from .parallel import parallel_map
from .types import Assignments, HyperParams, ModelState, Observations, ValidationError

# Step identifiers, in canonical full-sweep order.
ASSIGN_POINTS = "assign_points"
ASSIGN_POINTS_SPATIAL = "assign_points_spatial"
PARTICLE_WEIGHTS = "particle_weights"
PARTICLE_MEANS = "particle_means"
PARTICLE_COVS = "particle_covs"
PARTICLE_VELOCITIES = "particle_velocities"
PARTICLE_VELOCITY_COVS = "particle_velocity_covs"
PARTICLE_FEATURES = "particle_features"
ASSIGN_PARTICLES = "assign_particles"
CLUSTER_WEIGHTS = "cluster_weights"
CLUSTER_MEANS = "cluster_means"
CLUSTER_COVS = "cluster_covs"
CLUSTER_ROTATIONS = "cluster_rotations"
CLUSTER_TRANSLATIONS = "cluster_translations"

STEP_IDS = (
    ASSIGN_POINTS,
    ASSIGN_POINTS_SPATIAL,
    PARTICLE_WEIGHTS,
    PARTICLE_MEANS,
    PARTICLE_COVS,
    PARTICLE_VELOCITIES,
    PARTICLE_VELOCITY_COVS,
    PARTICLE_FEATURES,
    ASSIGN_PARTICLES,
    CLUSTER_WEIGHTS,
    CLUSTER_MEANS,
    CLUSTER_COVS,
    CLUSTER_ROTATIONS,
    CLUSTER_TRANSLATIONS,
)
_STEP_INDEX = {name: i for i, name in enumerate(STEP_IDS)}


# --------------------------------------------------------------------------
# Schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    name: str
    repeat: int = 1


@dataclass(frozen=True)
class Block:
    """A group of schedule items repeated as a unit."""

    items: tuple
    repeat: int = 1


@dataclass(frozen=True)
class SweepSchedule:
    """Ordered Gibbs steps with repeat counts plus behavior flags."""

    steps: tuple
    freeze_Sigma_B: bool = False
    freeze_z_H: bool = False
    enable_outliers: bool = False
    enable_features: bool = False
    position_only_assignment: bool = False

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        self._validate_items(self.steps)

    @classmethod
    def _validate_items(cls, items) -> None:
        for item in items:
            if isinstance(item, Step):
                if item.name not in _STEP_INDEX:
                    raise ValidationError(f"unknown schedule step {item.name!r}")
                if item.repeat < 1:
                    raise ValidationError("step repeat counts must be >= 1")
            elif isinstance(item, Block):
                if item.repeat < 1:
                    raise ValidationError("block repeat counts must be >= 1")
                cls._validate_items(item.items)
            else:
                raise ValidationError(f"schedule items must be Step or Block, got {item!r}")

    def flatten(self) -> tuple[str, ...]:
        out: list[str] = []

        def walk(items):
            for item in items:
                if isinstance(item, Step):
                    out.extend([item.name] * item.repeat)
                else:
                    for _ in range(item.repeat):
                        walk(item.items)

        walk(self.steps)
        return tuple(out)

    def replace_flags(self, **kw) -> "SweepSchedule":
        import dataclasses

        return dataclasses.replace(self, **kw)


def full_sweep_schedule(**flags) -> SweepSchedule:
    """One pass over all twelve conditionals in bottom-up order."""
    names = (
        ASSIGN_POINTS,
        PARTICLE_WEIGHTS,
        PARTICLE_MEANS,
        PARTICLE_COVS,
        PARTICLE_VELOCITIES,
        PARTICLE_VELOCITY_COVS,
        ASSIGN_PARTICLES,
        CLUSTER_WEIGHTS,
        CLUSTER_MEANS,
        CLUSTER_COVS,
        CLUSTER_ROTATIONS,
        CLUSTER_TRANSLATIONS,
    )
    return SweepSchedule(steps=tuple(Step(n) for n in names), **flags)


def tracking_frame_schedule(**flags) -> SweepSchedule:
    """Per-frame order for sequential tracking.

    Spatial anchoring first (position-only assignment of the unordered point
    cloud to propagated particles), then the full assignment and the particle
    and cluster refinements.
    """
    names = (
        ASSIGN_POINTS_SPATIAL,
        PARTICLE_WEIGHTS,
        PARTICLE_MEANS,
        ASSIGN_POINTS,
        PARTICLE_WEIGHTS,
        PARTICLE_COVS,
        PARTICLE_VELOCITIES,
        PARTICLE_VELOCITY_COVS,
        ASSIGN_PARTICLES,
        CLUSTER_WEIGHTS,
        CLUSTER_MEANS,
        CLUSTER_COVS,
        CLUSTER_ROTATIONS,
        CLUSTER_TRANSLATIONS,
    )
    return SweepSchedule(steps=tuple(Step(n) for n in names), **flags)


# --------------------------------------------------------------------------
# Sufficient statistics helpers
# --------------------------------------------------------------------------

def _inlier_counts(z: np.ndarray, L: int) -> np.ndarray:
    return np.bincount(z[z < L], minlength=L)


def _group_sums(z: np.ndarray, L: int, values: np.ndarray) -> np.ndarray:
    out = np.zeros((L, values.shape[1]))
    mask = z < L
    np.add.at(out, z[mask], values[mask])
    return out


def _group_scatter(z: np.ndarray, L: int, values: np.ndarray,
                   centers: np.ndarray) -> np.ndarray:
    """Per-group scatter matrices of values about per-group centers."""
    d = values.shape[1]
    out = np.zeros((L, d, d))
    mask = z < L
    if not np.any(mask):
        return out
    diff = values[mask] - centers[z[mask]]
    np.add.at(out, z[mask], np.einsum("ni,nj->nij", diff, diff))
    return out


# --------------------------------------------------------------------------
# Point-to-particle assignment (with feature and outlier extensions)
# --------------------------------------------------------------------------

def point_assignment_log_probs(state: ModelState, obs: Observations, hyper: HyperParams,
                               *, position_only: bool = False,
                               include_outlier: bool = False,
                               use_features: bool = False) -> np.ndarray:
    """Unnormalized log probabilities over particles (columns) per point (rows).

    With ``include_outlier`` an extra final column scores the outlier
    component: weight p_outlier with a Gamma likelihood on speed.
    """
    if use_features and not position_only:
        if obs.features is None:
            raise ValidationError("feature likelihood requested but observations have no features")
        if state.feat is None:
            raise ValidationError("feature likelihood requested but state has no feature means")
        if hyper.sigma2_F is None:
            raise ValidationError("feature likelihood requested but sigma2_F is unset")
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi_B)

    def column(ell: int) -> np.ndarray:
        ll = mvn_logpdf_rows(obs.positions, state.mu_B[ell], state.Sigma_B[ell])
        if not position_only:
            ll = ll + mvn_logpdf_rows(obs.velocities, state.vel[ell], state.Sigma_V[ell])
            if use_features:
                ll = ll + isotropic_logpdf_rows(obs.features, state.feat[ell], hyper.sigma2_F)
        return log_pi[ell] + ll

    scores = np.column_stack(parallel_map(column, range(state.L)))
    if include_outlier and hyper.p_outlier > 0:
        scores = scores + np.log1p(-hyper.p_outlier)
        speeds = np.linalg.norm(obs.velocities, axis=1)
        out_col = np.log(hyper.p_outlier) + gamma_logpdf(
            speeds, hyper.outlier_gamma_shape, hyper.outlier_gamma_rate)
        scores = np.column_stack([scores, out_col])
    return scores


def assign_points_to_particles(state: ModelState, obs: Observations, hyper: HyperParams,
                               rng: np.random.Generator, *, position_only: bool = False,
                               include_outlier: bool = False,
                               use_features: bool = False) -> np.ndarray:
    scores = point_assignment_log_probs(
        state, obs, hyper, position_only=position_only,
        include_outlier=include_outlier, use_features=use_features)
    return categorical_sample_rows(scores, rng)


# --------------------------------------------------------------------------
# Mixture weights
# --------------------------------------------------------------------------

def update_particle_weights(state: ModelState, hyper: HyperParams,
                            rng: np.random.Generator) -> np.ndarray:
    counts = _inlier_counts(state.z_B, state.L)
    return dirichlet_sample(hyper.beta_vec(state.L) + counts, rng)


def update_cluster_weights(state: ModelState, hyper: HyperParams,
                           rng: np.random.Generator) -> np.ndarray:
    counts = np.bincount(state.z_H, minlength=state.K)
    return dirichlet_sample(hyper.alpha_vec(state.K) + counts, rng)


# --------------------------------------------------------------------------
# Particle parameter conditionals
# --------------------------------------------------------------------------

def particle_mean_conditional(state: ModelState, obs: Observations, hyper: HyperParams,
                              ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of one particle's spatial mean.

    Combines the cluster spatial prior, position likelihoods of assigned
    points, and the rigid-motion velocity constraint, which is linear in the
    mean.  Empty particles keep prior plus velocity terms only.
    """
    d = state.dim
    k = state.z_H[ell]
    A = state.rot[k] - np.eye(d)
    b = state.trans[k] - A @ state.mu_H[k]
    inv_sh = spd_inverse(state.Sigma_H[k])
    inv_sb = spd_inverse(state.Sigma_B[ell])
    mask = state.z_B == ell
    n_ell = int(mask.sum())
    sum_x = obs.positions[mask].sum(axis=0) if n_ell else np.zeros(d)
    precision = inv_sh + n_ell * inv_sb + (A.T @ A) / hyper.sigma2_V
    m_vec = inv_sh @ state.mu_H[k] + inv_sb @ sum_x + A.T @ (state.vel[ell] - b) / hyper.sigma2_V
    return moments_from_precision(m_vec, precision)


def update_particle_means(state: ModelState, obs: Observations, hyper: HyperParams,
                          rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.mu_B)
    conds = parallel_map(lambda ell: particle_mean_conditional(state, obs, hyper, ell),
                         range(state.L))
    for ell, (mean, cov) in enumerate(conds):
        out[ell] = mvn_sample(mean, cov, rng)
    return out


def particle_cov_posterior(state: ModelState, obs: Observations, hyper: HyperParams,
                           ell: int) -> tuple[np.ndarray, float]:
    """Inverse-Wishart posterior parameters for one particle's spatial covariance."""
    mask = state.z_B == ell
    diff = obs.positions[mask] - state.mu_B[ell]
    scatter = diff.T @ diff
    return hyper.Psi_B + scatter, hyper.nu_B + int(mask.sum())


def update_particle_covariances(state: ModelState, obs: Observations, hyper: HyperParams,
                                rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.Sigma_B)
    for ell in range(state.L):
        psi, nu = particle_cov_posterior(state, obs, hyper, ell)
        out[ell] = inverse_wishart_sample(psi, nu, rng)
    return out


def velocity_mean_conditional(state: ModelState, obs: Observations, hyper: HyperParams,
                              ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of one particle's velocity mean."""
    d = state.dim
    k = state.z_H[ell]
    vbar = induced_velocities(state.rot[k], state.trans[k], state.mu_H[k],
                              state.mu_B[ell][None])[0]
    inv_sv = spd_inverse(state.Sigma_V[ell])
    mask = state.z_B == ell
    n_ell = int(mask.sum())
    sum_v = obs.velocities[mask].sum(axis=0) if n_ell else np.zeros(d)
    precision = np.eye(d) / hyper.sigma2_V + n_ell * inv_sv
    m_vec = vbar / hyper.sigma2_V + inv_sv @ sum_v
    return moments_from_precision(m_vec, precision)


def update_particle_velocity_means(state: ModelState, obs: Observations, hyper: HyperParams,
                                   rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.vel)
    conds = parallel_map(lambda ell: velocity_mean_conditional(state, obs, hyper, ell),
                         range(state.L))
    for ell, (mean, cov) in enumerate(conds):
        out[ell] = mvn_sample(mean, cov, rng)
    return out


def velocity_cov_posterior(state: ModelState, obs: Observations, hyper: HyperParams,
                           ell: int) -> tuple[np.ndarray, float]:
    mask = state.z_B == ell
    diff = obs.velocities[mask] - state.vel[ell]
    scatter = diff.T @ diff
    return hyper.Psi_V + scatter, hyper.nu_V + int(mask.sum())


def update_particle_velocity_covariances(state: ModelState, obs: Observations,
                                         hyper: HyperParams,
                                         rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.Sigma_V)
    for ell in range(state.L):
        psi, nu = velocity_cov_posterior(state, obs, hyper, ell)
        out[ell] = inverse_wishart_sample(psi, nu, rng)
    return out


def update_particle_features(state: ModelState, obs: Observations) -> np.ndarray:
    """Empirical feature means over assigned points; empty particles keep theirs."""
    if state.feat is None or obs.features is None:
        raise ValidationError("feature update requires features on both state and observations")
    z = state.z_B
    counts = _inlier_counts(z, state.L)
    sums = _group_sums(z, state.L, obs.features)
    out = state.feat.copy()
    nonzero = counts > 0
    out[nonzero] = sums[nonzero] / counts[nonzero, None]
    return out


# --------------------------------------------------------------------------
# Particle-to-cluster assignment
# --------------------------------------------------------------------------

def cluster_assignment_log_probs(state: ModelState, hyper: HyperParams) -> np.ndarray:
    """(L, K) log scores: cluster weight x spatial fit x rigid-motion velocity fit."""
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi_H)

    def column(k: int) -> np.ndarray:
        spatial = mvn_logpdf_rows(state.mu_B, state.mu_H[k], state.Sigma_H[k])
        vbar = induced_velocities(state.rot[k], state.trans[k], state.mu_H[k], state.mu_B)
        velocity = isotropic_logpdf_rows(state.vel, vbar, hyper.sigma2_V)
        return log_pi[k] + spatial + velocity

    return np.column_stack(parallel_map(column, range(state.K)))


def assign_particles_to_clusters(state: ModelState, hyper: HyperParams,
                                 rng: np.random.Generator) -> np.ndarray:
    return categorical_sample_rows(cluster_assignment_log_probs(state, hyper), rng)


# --------------------------------------------------------------------------
# Cluster parameter conditionals
# --------------------------------------------------------------------------

def cluster_mean_conditional(state: ModelState, hyper: HyperParams,
                             k: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of one cluster's spatial mean.

    Integrates the global location prior, assigned particle centers, and the
    velocity residuals of the rigid-motion model (linear in the mean through
    A = I - R).
    """
    d = state.dim
    A = np.eye(d) - state.rot[k]
    mask = state.z_H == k
    n_k = int(mask.sum())
    inv_sh = spd_inverse(state.Sigma_H[k])
    sum_mu = state.mu_B[mask].sum(axis=0) if n_k else np.zeros(d)
    if n_k:
        b = state.trans[k] - state.mu_B[mask] @ A.T
        resid_sum = (state.vel[mask] - b).sum(axis=0)
    else:
        resid_sum = np.zeros(d)
    precision = np.eye(d) / hyper.sigma2_mu_H + n_k * (inv_sh + (A.T @ A) / hyper.sigma2_V)
    m_vec = (hyper.mu_H_prior / hyper.sigma2_mu_H + inv_sh @ sum_mu
             + A.T @ resid_sum / hyper.sigma2_V)
    return moments_from_precision(m_vec, precision)


def update_cluster_means(state: ModelState, hyper: HyperParams,
                         rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.mu_H)
    for k in range(state.K):
        mean, cov = cluster_mean_conditional(state, hyper, k)
        out[k] = mvn_sample(mean, cov, rng)
    return out


def cluster_cov_posterior(state: ModelState, hyper: HyperParams,
                          k: int) -> tuple[np.ndarray, float]:
    mask = state.z_H == k
    diff = state.mu_B[mask] - state.mu_H[k]
    scatter = diff.T @ diff
    return hyper.Psi_H + scatter, hyper.nu_H + int(mask.sum())


def update_cluster_covariances(state: ModelState, hyper: HyperParams,
                               rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.Sigma_H)
    for k in range(state.K):
        psi, nu = cluster_cov_posterior(state, hyper, k)
        out[k] = inverse_wishart_sample(psi, nu, rng)
    return out


# --------------------------------------------------------------------------
# Discrete rigid transforms
# --------------------------------------------------------------------------

def rotation_log_probs(state: ModelState, hyper: HyperParams,
                       candidates: TransformCandidates, k: int) -> np.ndarray:
    """Log scores over rotation candidates for cluster k."""
    mask = state.z_H == k
    if not np.any(mask):
        return candidates.rotation_log_prior.copy()
    offsets = state.mu_B[mask] - state.mu_H[k]
    vel = state.vel[mask]
    d = state.dim
    eye = np.eye(d)

    def score(j: int) -> float:
        pred = state.trans[k] + offsets @ (candidates.rotations[j] - eye).T
        return float(isotropic_logpdf_rows(vel, pred, hyper.sigma2_V).sum())

    loglik = np.array(parallel_map(score, range(candidates.num_rotations)))
    return candidates.rotation_log_prior + loglik


def update_cluster_rotations(state: ModelState, hyper: HyperParams,
                             candidates: TransformCandidates,
                             rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.rot)
    for k in range(state.K):
        idx = categorical_sample(rotation_log_probs(state, hyper, candidates, k), rng)
        out[k] = candidates.rotations[idx]
    return out


def translation_log_probs(state: ModelState, hyper: HyperParams,
                          candidates: TransformCandidates, k: int) -> np.ndarray:
    """Log scores over translation candidates for cluster k."""
    mask = state.z_H == k
    if not np.any(mask):
        return candidates.translation_log_prior.copy()
    offsets = state.mu_B[mask] - state.mu_H[k]
    rotated = offsets @ (state.rot[k] - np.eye(state.dim)).T
    vel = state.vel[mask]

    def score(m: int) -> float:
        pred = candidates.translations[m] + rotated
        return float(isotropic_logpdf_rows(vel, pred, hyper.sigma2_V).sum())

    loglik = np.array(parallel_map(score, range(candidates.num_translations)))
    return candidates.translation_log_prior + loglik


def update_cluster_translations(state: ModelState, hyper: HyperParams,
                                candidates: TransformCandidates,
                                rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(state.trans)
    for k in range(state.K):
        idx = categorical_sample(translation_log_probs(state, hyper, candidates, k), rng)
        out[k] = candidates.translations[idx]
    return out


# --------------------------------------------------------------------------
# Sweep
# --------------------------------------------------------------------------

def _apply_step(name: str, state: ModelState, obs: Observations, hyper: HyperParams,
                schedule: SweepSchedule, candidates: TransformCandidates,
                rng: np.random.Generator) -> ModelState:
    if name == ASSIGN_POINTS:
        z = assign_points_to_particles(
            state, obs, hyper, rng,
            position_only=schedule.position_only_assignment,
            include_outlier=schedule.enable_outliers,
            use_features=schedule.enable_features and not schedule.position_only_assignment)
        return state.replace(assignments=Assignments(z, state.z_H))
    if name == ASSIGN_POINTS_SPATIAL:
        z = assign_points_to_particles(state, obs, hyper, rng, position_only=True)
        return state.replace(assignments=Assignments(z, state.z_H))
    if name == PARTICLE_WEIGHTS:
        return state.replace(pi_B=update_particle_weights(state, hyper, rng))
    if name == PARTICLE_MEANS:
        return state.replace(mu_B=update_particle_means(state, obs, hyper, rng))
    if name == PARTICLE_COVS:
        return state.replace(Sigma_B=update_particle_covariances(state, obs, hyper, rng))
    if name == PARTICLE_VELOCITIES:
        return state.replace(vel=update_particle_velocity_means(state, obs, hyper, rng))
    if name == PARTICLE_VELOCITY_COVS:
        return state.replace(Sigma_V=update_particle_velocity_covariances(state, obs, hyper, rng))
    if name == PARTICLE_FEATURES:
        return state.replace(feat=update_particle_features(state, obs))
    if name == ASSIGN_PARTICLES:
        z_h = assign_particles_to_clusters(state, hyper, rng)
        return state.replace(assignments=Assignments(state.z_B, z_h))
    if name == CLUSTER_WEIGHTS:
        return state.replace(pi_H=update_cluster_weights(state, hyper, rng))
    if name == CLUSTER_MEANS:
        return state.replace(mu_H=update_cluster_means(state, hyper, rng))
    if name == CLUSTER_COVS:
        return state.replace(Sigma_H=update_cluster_covariances(state, hyper, rng))
    if name == CLUSTER_ROTATIONS:
        return state.replace(rot=update_cluster_rotations(state, hyper, candidates, rng))
    if name == CLUSTER_TRANSLATIONS:
        return state.replace(trans=update_cluster_translations(state, hyper, candidates, rng))
    raise ValidationError(f"unknown schedule step {name!r}")


def sweep(state: ModelState, obs: Observations, hyper: HyperParams,
          schedule: SweepSchedule, candidates: TransformCandidates) -> ModelState:
    """Execute the schedule once, each step reading the latest state.

    Freeze flags skip the corresponding steps so the frozen arrays pass
    through bitwise unchanged.  Each step draws from a stream keyed by the
    state's rng cursor and the step position, so results are independent of
    thread count; the cursor advances once per sweep.
    """
    names = schedule.flatten()
    for pos, name in enumerate(names):
        if name == PARTICLE_COVS and schedule.freeze_Sigma_B:
            continue
        if name == ASSIGN_PARTICLES and schedule.freeze_z_H:
            continue
        rng = state.rng.stream(rngmod.SWEEP, _STEP_INDEX[name], pos)
        state = _apply_step(name, state, obs, hyper, schedule, candidates, rng)
    return state.replace(rng=state.rng.tick())
