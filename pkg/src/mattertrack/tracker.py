"""Sequential multi-frame inference: propagate, anchor, refine.

Frame 0 is initialized by hierarchical K-means plus full Gibbs sweeps.  Every
later frame propagates particle means by their velocities, re-anchors the
unordered point cloud to particles by position alone, then refines particle
and cluster variables bottom-up.  Frozen quantities pass through bitwise
unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .distributions import TransformCandidates, make_transform_candidates
from .gibbs import (
    Block,
    Step,
    SweepSchedule,
    full_sweep_schedule,
    sweep,
    tracking_frame_schedule,
)
from .gibbs import (
    ASSIGN_POINTS,
    ASSIGN_POINTS_SPATIAL,
    CLUSTER_COVS,
    CLUSTER_MEANS,
    CLUSTER_ROTATIONS,
    CLUSTER_TRANSLATIONS,
    CLUSTER_WEIGHTS,
    PARTICLE_FEATURES,
    PARTICLE_MEANS,
    PARTICLE_VELOCITIES,
    PARTICLE_VELOCITY_COVS,
    PARTICLE_WEIGHTS,
)
from .initialization import data_dependent_hyperparams, init_state
from .rng import substream
from .types import HyperParams, ModelState, Observations, ValidationError


@dataclass(frozen=True)
class TrackConfig:
    """Knobs of the sequential tracking procedure."""

    init_sweeps: int = 50
    per_frame_schedule: SweepSchedule | None = None
    freeze_z_H: bool = False
    freeze_Sigma_B: bool = True
    subsample_rate: float = 1.0
    enable_outliers: bool = False
    enable_features: bool = False

    def __post_init__(self):
        if self.init_sweeps < 0:
            raise ValidationError("init_sweeps must be non-negative")
        if not 0 < self.subsample_rate <= 1:
            raise ValidationError(f"subsample_rate must be in (0, 1], got {self.subsample_rate}")

    def frame_schedule(self) -> SweepSchedule:
        base = self.per_frame_schedule
        if base is None:
            base = tracking_frame_schedule()
        return base.replace_flags(
            freeze_z_H=self.freeze_z_H,
            freeze_Sigma_B=self.freeze_Sigma_B,
            enable_outliers=self.enable_outliers,
            enable_features=self.enable_features,
        )


def propagate(state: ModelState) -> ModelState:
    """Advance particle spatial means by exactly their velocity means."""
    return state.replace(mu_B=state.mu_B + state.vel)


def subsample_frame(obs: Observations, rate: float, rng: np.random.Generator) -> Observations:
    """Uniformly keep ceil(rate * N) points, preserving original order."""
    if rate >= 1.0:
        return obs
    m = max(1, math.ceil(rate * len(obs)))
    idx = np.sort(rng.choice(len(obs), size=m, replace=False))
    return obs.take(idx)


def track(frames: list[Observations], K: int, L: int, hyper: HyperParams,
          cfg: TrackConfig, seed: int,
          candidates: TransformCandidates | None = None,
          derive_hyper: bool = True,
          initial_state: ModelState | None = None,
          start_frame: int = 0,
          init_proposal=None) -> list[ModelState]:
    """Run sequential inference over a frame list.

    Returns one posterior state per frame.  ``initial_state`` resumes an
    earlier run: pass the state dumped after frame ``start_frame - 1``
    together with the hyperparameters in effect (set ``derive_hyper=False``)
    and the continuation is bit-identical to the uninterrupted run.
    ``init_proposal`` is an optional burn-in accelerator applied to the
    frame-0 state before the init sweeps, called as
    ``proposal(state, obs, hyper, candidates)``.
    """
    if len(frames) < 1:
        raise ValidationError("track requires at least one frame")
    for t, f in enumerate(frames):
        if len(f) == 0:
            raise ValidationError(f"frame {t} is empty")
    dim = frames[0].dim
    if candidates is None:
        candidates = make_transform_candidates(dim, hyper)

    states: list[ModelState] = []
    if initial_state is None:
        obs0 = subsample_frame(frames[0], cfg.subsample_rate,
                               substream(seed, rngmod.SUBSAMPLE, 0))
        state = init_state(obs0, K, L, hyper, seed)
        if derive_hyper:
            hyper = data_dependent_hyperparams(obs0, state, base=hyper)
        if init_proposal is not None:
            state = init_proposal(state, obs0, hyper, candidates)
        # frame-0 sweeps establish the segmentation, so z_H stays live here;
        # frozen spatial covariances keep their empirical per-cell extent
        init_sched = full_sweep_schedule(
            freeze_Sigma_B=cfg.freeze_Sigma_B,
            enable_features=cfg.enable_features)
        for _ in range(cfg.init_sweeps):
            state = sweep(state, obs0, hyper, init_sched, candidates)
        states.append(state)
        first = 1
    else:
        if derive_hyper:
            raise ValidationError("resume requires derive_hyper=False with explicit hyper")
        state = initial_state
        first = start_frame
        if first < 1:
            raise ValidationError("start_frame must be >= 1 when resuming")

    sched = cfg.frame_schedule()
    for t in range(first, len(frames)):
        obs_t = subsample_frame(frames[t], cfg.subsample_rate,
                                substream(seed, rngmod.SUBSAMPLE, t))
        state = propagate(state)
        state = sweep(state, obs_t, hyper, sched, candidates)
        states.append(state)
    return states


def gestalt_track_config(init_sweeps: int = 50, velocity_iters: int = 20,
                         full_sweeps: int = 500) -> TrackConfig:
    """Preset for camouflaged structure-from-motion scenes.

    Per frame: velocity-focused iterations first, then full refinement
    sweeps; particle spatial covariances and particle-to-cluster assignments
    stay fixed after frame 0.
    """
    velocity_block = Block(
        items=(
            Step(ASSIGN_POINTS),
            Step(PARTICLE_WEIGHTS),
            Step(PARTICLE_VELOCITIES),
            Step(PARTICLE_VELOCITY_COVS),
            Step(CLUSTER_ROTATIONS),
            Step(CLUSTER_TRANSLATIONS),
        ),
        repeat=velocity_iters,
    )
    full_block = Block(items=tuple(tracking_frame_schedule().steps), repeat=full_sweeps)
    schedule = SweepSchedule(steps=(
        Step(ASSIGN_POINTS_SPATIAL),
        Step(PARTICLE_WEIGHTS),
        Step(PARTICLE_MEANS),
        velocity_block,
        full_block,
    ))
    return TrackConfig(init_sweeps=init_sweeps, per_frame_schedule=schedule,
                       freeze_z_H=True, freeze_Sigma_B=True)


def rgb_track_config(init_sweeps: int = 30, refine_iters: int = 3) -> TrackConfig:
    """Preset for feature-augmented natural-video tracking.

    Per frame: rigid transforms first, a position-only anchoring assignment
    with outliers disabled, a full position-velocity-feature assignment with
    the outlier component enabled, repeated spatial/velocity refinements, and
    a feature-mean refresh.  The hyperparameters must carry ``sigma2_F`` and
    a positive ``p_outlier`` (0.1 is the reference weight).
    """
    refine_block = Block(
        items=(
            Step(PARTICLE_MEANS),
            Step(PARTICLE_VELOCITIES),
            Step(PARTICLE_VELOCITY_COVS),
        ),
        repeat=refine_iters,
    )
    schedule = SweepSchedule(steps=(
        Step(CLUSTER_ROTATIONS),
        Step(CLUSTER_TRANSLATIONS),
        Step(ASSIGN_POINTS_SPATIAL),
        Step(PARTICLE_WEIGHTS),
        Step(ASSIGN_POINTS),
        Step(PARTICLE_WEIGHTS),
        refine_block,
        Step(PARTICLE_FEATURES),
        Step(CLUSTER_WEIGHTS),
        Step(CLUSTER_MEANS),
        Step(CLUSTER_COVS),
    ))
    return TrackConfig(init_sweeps=init_sweeps, per_frame_schedule=schedule,
                       freeze_z_H=True, freeze_Sigma_B=True,
                       enable_outliers=True, enable_features=True)
