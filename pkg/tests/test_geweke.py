"""Forward/Gibbs consistency smoke checks (the full-length run lives in the
acceptance suite)."""
import numpy as np
import pytest

from mattertrack.geweke import default_check_hyper, run_geweke
from mattertrack.types import ValidationError


def test_geweke_smoke_passes():
    hyper = default_check_hyper(2)
    report = run_geweke(hyper, K=2, L=4, N=16, iterations=1500, seed=0,
                        sweeps_per_iter=2)
    assert report.max_abs_z < 5.0
    assert len(report.stats) == 2 * 4 * 2 + 4
    assert "max |z|" in report.summary()


def test_geweke_detects_broken_kernel():
    # sanity: biasing the velocity observations must blow the z-scores up
    import mattertrack.geweke as gw

    orig = gw.resample_observations

    def biased(state, hyper, rng):
        obs = orig(state, hyper, rng)
        return type(obs)(obs.positions, obs.velocities + 0.4)

    gw.resample_observations = biased
    try:
        hyper = default_check_hyper(2)
        report = run_geweke(hyper, K=2, L=4, N=16, iterations=800, seed=1,
                            sweeps_per_iter=2)
    finally:
        gw.resample_observations = orig
    assert report.max_abs_z > 6.0


def test_geweke_rejects_outliers_and_short_runs():
    hyper = default_check_hyper(2)
    with pytest.raises(ValidationError):
        run_geweke(hyper.replace(p_outlier=0.2), K=1, L=2, N=8,
                   iterations=500, seed=0)
    with pytest.raises(ValidationError):
        run_geweke(hyper, K=1, L=2, N=8, iterations=50, seed=0)
