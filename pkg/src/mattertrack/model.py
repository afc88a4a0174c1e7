"""Forward sampler and exact joint log density.

The generative process: draw mixture weights for clusters and particles, give
each cluster a spatial Gaussian and a rigid transform from discretized priors,
give each particle a cluster, a spatial Gaussian, and a velocity Gaussian
centered at the cluster-induced rigid velocity, then emit observed points from
their particles.  ``log_joint`` scores a full (state, observations) pair term
by term and serves as the independent oracle for the Gibbs conditionals.
"""
from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .distributions import (
    TransformCandidates,
    categorical_sample,
    categorical_sample_rows,
    dirichlet_logpdf,
    dirichlet_sample,
    gamma_logpdf,
    inverse_wishart_logpdf,
    inverse_wishart_sample,
    isotropic_logpdf_rows,
    make_transform_candidates,
    mvn_logpdf,
    mvn_logpdf_rows,
    mvn_sample,
)
from .rng import RngState, substream
from .types import (
    Assignments,
    ClusterState,
    HyperParams,
    ModelState,
    Observations,
    ValidationError,
)


def cluster_induced_velocity(cluster: ClusterState, particle_mean: np.ndarray) -> np.ndarray:
    """Velocity a cluster's rigid transform induces at a particle location.

    Equals t + (R - I)(mu - mu_H): translation plus the first-order effect of
    rotating about the cluster center.
    """
    particle_mean = np.asarray(particle_mean, dtype=np.float64)
    offset = particle_mean - cluster.mu_H
    return cluster.t + (cluster.R - np.eye(len(particle_mean))) @ offset


def induced_velocities(rot: np.ndarray, trans: np.ndarray, mu_H: np.ndarray,
                       means: np.ndarray) -> np.ndarray:
    """Rowwise cluster-induced velocities of ``means`` under one transform."""
    A = rot - np.eye(rot.shape[0])
    return trans + (means - mu_H) @ A.T


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed), rngmod.FORWARD)


def sample_forward(hyper: HyperParams, K: int, L: int, N: int, seed,
                   candidates: TransformCandidates | None = None,
                   ) -> tuple[ModelState, Observations]:
    """Sample latents and observations from the generative model.

    ``seed`` may be an int or a Generator.  Rigid transforms are drawn from
    the same finite candidate sets used during inference, so forward sampling
    and Gibbs updates share identical support.
    """
    if min(K, L, N) < 1:
        raise ValidationError(f"K, L, N must be at least 1, got {(K, L, N)}")
    if L < K:
        raise ValidationError(f"need L >= K, got L={L}, K={K}")
    dim = int(np.asarray(hyper.mu_H_prior).shape[0])
    hyper.validate(dim)
    if candidates is None:
        candidates = make_transform_candidates(dim, hyper)
    rng = _as_generator(seed)
    eye = np.eye(dim)

    pi_H = dirichlet_sample(hyper.alpha_vec(K), rng)
    pi_B = dirichlet_sample(hyper.beta_vec(L), rng)

    Sigma_H = np.empty((K, dim, dim))
    mu_H = np.empty((K, dim))
    trans = np.empty((K, dim))
    rot = np.empty((K, dim, dim))
    for k in range(K):
        Sigma_H[k] = inverse_wishart_sample(hyper.Psi_H, hyper.nu_H, rng)
        mu_H[k] = mvn_sample(hyper.mu_H_prior, hyper.sigma2_mu_H * eye, rng)
        trans[k] = candidates.translations[categorical_sample(candidates.translation_log_prior, rng)]
        rot[k] = candidates.rotations[categorical_sample(candidates.rotation_log_prior, rng)]

    z_H = np.empty(L, dtype=np.int64)
    Sigma_B = np.empty((L, dim, dim))
    mu_B = np.empty((L, dim))
    vel = np.empty((L, dim))
    Sigma_V = np.empty((L, dim, dim))
    log_pi_H = np.log(pi_H)
    for ell in range(L):
        k = categorical_sample(log_pi_H, rng)
        z_H[ell] = k
        Sigma_B[ell] = inverse_wishart_sample(hyper.Psi_B, hyper.nu_B, rng)
        mu_B[ell] = mvn_sample(mu_H[k], Sigma_H[k], rng)
        vbar = induced_velocities(rot[k], trans[k], mu_H[k], mu_B[ell][None])[0]
        vel[ell] = mvn_sample(vbar, hyper.sigma2_V * eye, rng)
        Sigma_V[ell] = inverse_wishart_sample(hyper.Psi_V, hyper.nu_V, rng)

    with np.errstate(divide="ignore"):
        z_B = categorical_sample_rows(np.broadcast_to(np.log(pi_B), (N, L)), rng)
    positions = np.empty((N, dim))
    velocities = np.empty((N, dim))
    for ell in range(L):
        idx = np.where(z_B == ell)[0]
        if idx.size == 0:
            continue
        positions[idx] = mvn_sample(mu_B[ell], Sigma_B[ell], rng, size=idx.size)
        velocities[idx] = mvn_sample(vel[ell], Sigma_V[ell], rng, size=idx.size)

    base_seed = int(seed) if not isinstance(seed, np.random.Generator) else 0
    state = ModelState(
        dim=dim, mu_B=mu_B, Sigma_B=Sigma_B, vel=vel, Sigma_V=Sigma_V, pi_B=pi_B,
        mu_H=mu_H, Sigma_H=Sigma_H, rot=rot, trans=trans, pi_H=pi_H,
        assignments=Assignments(z_B, z_H), rng=RngState(base_seed),
    )
    return state, Observations(positions, velocities)


def resample_observations(state: ModelState, hyper: HyperParams,
                          rng: np.random.Generator) -> Observations:
    """Redraw observations given the current latents (assignments fixed).

    Used by the forward/Gibbs consistency check.  States holding outlier
    assignments cannot be resampled: the outlier component has no positional
    model.
    """
    z = state.z_B
    if np.any(z >= state.L):
        raise ValidationError("cannot resample observations for outlier assignments")
    N, dim = z.shape[0], state.dim
    positions = np.empty((N, dim))
    velocities = np.empty((N, dim))
    for ell in range(state.L):
        idx = np.where(z == ell)[0]
        if idx.size == 0:
            continue
        positions[idx] = mvn_sample(state.mu_B[ell], state.Sigma_B[ell], rng, size=idx.size)
        velocities[idx] = mvn_sample(state.vel[ell], state.Sigma_V[ell], rng, size=idx.size)
    features = None
    if state.feat is not None and hyper.sigma2_F is not None:
        F = state.feat.shape[1]
        features = state.feat[z] + np.sqrt(hyper.sigma2_F) * rng.standard_normal((N, F))
    return Observations(positions, velocities, features)


def log_joint(state: ModelState, obs: Observations, hyper: HyperParams,
              candidates: TransformCandidates | None = None) -> float:
    """Sum of the log densities of every sampled quantity in the model.

    When ``candidates`` is given, the discrete rigid-transform priors are
    included (each cluster's transform must be a member of the set); without
    it those constant-support terms are omitted.  Feature and outlier terms
    enter whenever the state/observations/hyperparameters carry them.
    """
    dim = state.dim
    eye = np.eye(dim)
    K, L = state.K, state.L
    z_B, z_H = state.z_B, state.z_H

    total = dirichlet_logpdf(state.pi_H, hyper.alpha_vec(K))
    total += dirichlet_logpdf(state.pi_B, hyper.beta_vec(L))

    for k in range(K):
        total += inverse_wishart_logpdf(state.Sigma_H[k], hyper.Psi_H, hyper.nu_H)
        total += mvn_logpdf(state.mu_H[k], hyper.mu_H_prior, hyper.sigma2_mu_H * eye)
        if candidates is not None:
            total += float(candidates.rotation_log_prior[candidates.rotation_index(state.rot[k])])
            total += float(candidates.translation_log_prior[candidates.translation_index(state.trans[k])])

    with np.errstate(divide="ignore"):
        log_pi_H = np.log(state.pi_H)
        log_pi_B = np.log(state.pi_B)
    for ell in range(L):
        k = z_H[ell]
        total += float(log_pi_H[k])
        total += inverse_wishart_logpdf(state.Sigma_B[ell], hyper.Psi_B, hyper.nu_B)
        total += mvn_logpdf(state.mu_B[ell], state.mu_H[k], state.Sigma_H[k])
        vbar = induced_velocities(state.rot[k], state.trans[k], state.mu_H[k],
                                  state.mu_B[ell][None])[0]
        total += mvn_logpdf(state.vel[ell], vbar, hyper.sigma2_V * eye)
        total += inverse_wishart_logpdf(state.Sigma_V[ell], hyper.Psi_V, hyper.nu_V)

    inlier = z_B < L
    use_features = (state.feat is not None and obs.features is not None
                    and hyper.sigma2_F is not None)
    p_out = float(hyper.p_outlier)
    if np.any(~inlier) and p_out <= 0:
        raise ValidationError("state holds outlier assignments but p_outlier is 0")
    for ell in range(L):
        idx = np.where(z_B == ell)[0]
        if idx.size == 0:
            continue
        total += idx.size * float(log_pi_B[ell])
        total += float(mvn_logpdf_rows(obs.positions[idx], state.mu_B[ell], state.Sigma_B[ell]).sum())
        total += float(mvn_logpdf_rows(obs.velocities[idx], state.vel[ell], state.Sigma_V[ell]).sum())
        if use_features:
            total += float(isotropic_logpdf_rows(obs.features[idx], state.feat[ell],
                                                 hyper.sigma2_F).sum())
    if p_out > 0:
        n_out = int(np.sum(~inlier))
        total += (len(obs) - n_out) * float(np.log1p(-p_out))
        if n_out:
            speeds = np.linalg.norm(obs.velocities[~inlier], axis=1)
            total += n_out * float(np.log(p_out))
            total += float(gamma_logpdf(speeds, hyper.outlier_gamma_shape,
                                        hyper.outlier_gamma_rate).sum())
    if not np.isfinite(total):
        raise ValidationError("log joint is not finite for this state")
    return float(total)
