"""Shared fixtures: models trained once per session on the cheap 1D task.

The canonical 2D pipeline at full training budget lives in the acceptance
suite only; everything else reuses these to stay fast.
"""

from types import SimpleNamespace

import pytest

from prefdiff.classifier import PcLossConfig, make_classifier, train_classifier
from prefdiff.data import make_mixture, make_preference_pairs, task
from prefdiff.ddpm import make_diffusion_model, make_schedule, train_ddpm
from prefdiff.nn import RngStream, make_adamw, mlp_params


@pytest.fixture(scope="session")
def sched():
    return make_schedule()


@pytest.fixture(scope="session")
def setup_1d(sched):
    """Briefly trained diffusion model and classifier on two-mode-1d.

    Training budgets are a fraction of the defaults; tests against these
    assert qualitative behavior (ordering, steering direction, rough
    distribution match), not the headline thresholds.
    """
    spec, reward = task("two-mode-1d")
    master = RngStream(11)
    ds = make_mixture(spec, 4000, master.spawn(0))
    model = make_diffusion_model(spec.dim, sched, master.spawn(1))
    diffusion_curve = train_ddpm(
        ds.points, model, make_adamw(mlp_params(model.net), lr=1e-3), 4000, 128, master.spawn(2)
    )

    pair_rng = RngStream(12)
    pairs = make_preference_pairs(ds, reward, 1500, pair_rng.spawn(3))
    clf = make_classifier(spec.dim, sched.T, pair_rng.spawn(1), hidden=(64, 64))
    classifier_curve = train_classifier(
        clf,
        pairs,
        sched,
        PcLossConfig(beta=0.1, T=sched.T),
        make_adamw(mlp_params(clf.trunk), lr=3e-4),
        800,
        64,
        pair_rng.spawn(2),
    )
    return SimpleNamespace(
        spec=spec,
        reward=reward,
        ds=ds,
        pairs=pairs,
        model=model,
        clf=clf,
        diffusion_curve=diffusion_curve,
        classifier_curve=classifier_curve,
    )


@pytest.fixture(scope="session")
def model_1d(setup_1d):
    return setup_1d.model


@pytest.fixture(scope="session")
def clf_1d(setup_1d):
    return setup_1d.clf
