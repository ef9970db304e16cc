import math
from dataclasses import replace

import numpy as np
import pytest

from circlefit.analysis import TruePointFrame
from circlefit.bench import (
    ConfigError,
    ExperimentConfig,
    algebraic_batch,
    arc_angles,
    chunk_bounds,
    generate_arc_points,
    parse_config_text,
    perturb,
    run_experiment,
    standard_normal_pairs,
    sweep_n,
    thread_count,
)
from circlefit.algebraic import fit_algebraic
from circlefit.errors import CircleFitError, InputError
from circlefit.geometric import LmOptions
from circlefit.geometry import CircleGeom

from helpers import noisy_arc


def test_arc_angles_conventions():
    assert np.degrees(arc_angles(2, 180)) == pytest.approx([-90, 90])
    a = arc_angles(5, 90, 45)
    assert np.degrees(a) == pytest.approx([0, 22.5, 45, 67.5, 90])
    full = arc_angles(4, 360)
    assert full == pytest.approx([0, math.pi / 2, math.pi, 3 * math.pi / 2])


def test_generated_points_lie_on_circle():
    cfg = ExperimentConfig(n=37, circle=CircleGeom(2, -3, 4.5), arc_degrees=123, arc_center_degrees=17)
    frame = generate_arc_points(cfg)
    d = (frame.points[:, 0] - 2) ** 2 + (frame.points[:, 1] + 3) ** 2
    assert np.abs(d - 4.5**2).max() <= 1e-12 * 4.5**2


def test_perturb_zero_sigma_is_exact():
    frame = TruePointFrame(CircleGeom(0, 0, 1), arc_angles(10, 180))
    assert np.array_equal(perturb(frame, 0.0, 1, 2), frame.points)


def test_perturb_is_pure_function_of_seed_and_trial():
    frame = TruePointFrame(CircleGeom(0, 0, 1), arc_angles(10, 180))
    a = perturb(frame, 0.1, 42, 7)
    assert np.array_equal(a, perturb(frame, 0.1, 42, 7))
    assert not np.array_equal(a, perturb(frame, 0.1, 42, 8))
    assert not np.array_equal(a, perturb(frame, 0.1, 43, 7))
    # point i does not depend on how many points the trial has
    assert np.array_equal(standard_normal_pairs(42, 7, 5), standard_normal_pairs(42, 7, 10)[:5])


def test_noise_variance_law_of_large_numbers():
    d = np.concatenate([standard_normal_pairs(5, t, 50_000).ravel() for t in range(10)])
    assert d.size == 10**6
    assert (0.05 * d).var() == pytest.approx(0.05**2, rel=5e-3)
    assert abs(d.mean()) < 5 / math.sqrt(d.size)


@pytest.mark.parametrize("method", ["kasa", "pratt", "taubin", "hyper"])
def test_batch_fits_match_single_fits(method):
    rng = np.random.default_rng(3)
    sets = np.stack([noisy_arc(rng, 30, (1, -1, 2), sigma=0.1) for _ in range(40)])
    got, ok = algebraic_batch(sets[..., 0], sets[..., 1], method)
    assert ok.all()
    ref = np.array([fit_algebraic(s, method).circle.as_array() for s in sets])
    assert got == pytest.approx(ref, abs=1e-10)


def test_batch_falls_back_on_exact_data():
    t = np.linspace(0, 2, 10)
    pts = np.column_stack([np.cos(t), np.sin(t)])
    got, ok = algebraic_batch(pts[None, :, 0], pts[None, :, 1], "pratt")
    assert ok.all() and got[0] == pytest.approx([0, 0, 1], abs=1e-12)


def test_zero_noise_single_trial_is_exact():
    cfg = ExperimentConfig(n=20, sigma=0.0, trials=1, methods=("kasa", "pratt", "taubin", "hyper", "geom"))
    rep = run_experiment(cfg, threads=1)
    assert [r.method for r in rep.rows] == ["kasa", "pratt", "taubin", "hyper", "geometric"]
    for r in rep.rows:
        assert r.total_mse == pytest.approx(0, abs=1e-24) and r.excluded == 0


def test_positive_mse_and_variance():
    rep = run_experiment(ExperimentConfig(n=30, sigma=0.05, trials=200, seed=9), threads=2)
    for r in rep.rows:
        assert r.total_mse > 0 and r.variance_theory > 0
        assert r.remainder == r.total_mse - r.variance_theory - r.ess_bias_sq
    assert rep.trials_completed == 200 and rep.status == "ok"


def test_report_identical_across_thread_counts():
    cfg = ExperimentConfig(n=50_000, sigma=0.05, trials=60, seed=11)
    assert len(chunk_bounds(cfg.trials, cfg.n)) == 3
    one = run_experiment(cfg, threads=1)
    four = run_experiment(cfg, threads=4)
    for a, b in zip(one.rows, four.rows):
        assert a.total_mse == b.total_mse
        assert np.array_equal(a.mse_matrix, b.mse_matrix)
        assert np.array_equal(a.mean_error, b.mean_error)


def test_failed_geometric_trials_are_excluded_and_flagged():
    cfg = ExperimentConfig(n=20, sigma=0.05, trials=50, methods=("hyper", "geom"))
    rep = run_experiment(cfg, threads=1, lm_opts=LmOptions(max_iterations=5))
    geo = rep.row("geometric")
    assert geo.excluded > 0 and geo.trials + geo.excluded == 50
    assert rep.row("hyper").excluded == 0
    assert rep.status == "warning" and any("geometric" in w for w in rep.warnings)


def test_all_trials_failing_raises():
    cfg = ExperimentConfig(n=20, sigma=0.05, trials=5, methods=("geom",))
    with pytest.raises(CircleFitError):
        run_experiment(cfg, threads=1, lm_opts=LmOptions(max_iterations=1))


def test_sweep_reports_each_n():
    reps = sweep_n(ExperimentConfig(trials=20, seed=1), [10, 40])
    assert [r.config.n for r in reps] == [10, 40]


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CIRCLEFIT_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(2) == 2
    monkeypatch.setenv("CIRCLEFIT_THREADS", "many")
    with pytest.raises(InputError):
        thread_count()


def test_config_parsing():
    cfg = parse_config_text(
        "# table one\nn = 50\nsigma: 0.1\nradius = 2\ncenter_x = 1\ncenter_y=-1\n"
        "arc_degrees = 90\narc_center_degrees = 10\ntrials = 7\nseed = 99\nmethods = hyper, geom\n"
    )
    assert cfg.n == 50 and cfg.sigma == 0.1 and cfg.trials == 7 and cfg.seed == 99
    assert cfg.circle == CircleGeom(1, -1, 2)
    assert cfg.methods == ("hyper", "geometric")
    assert parse_config_text("").n == 100


@pytest.mark.parametrize(
    "text, key",
    [("bogus = 1", "bogus"), ("n = ten", "n"), ("n = 2", "n"), ("sigma = -1", "sigma"),
     ("arc_degrees = 400", "arc_degrees"), ("trials = 0", "trials"), ("methods = ellipse", "methods"),
     ("radius = 0", "radius"), ("seed = 1.5", "seed")],
)
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key


def test_config_round_trips_through_dict():
    cfg = ExperimentConfig(n=12, sigma=0.2, trials=3, seed=4)
    text = "\n".join(f"{k} = {v}" for k, v in cfg.as_dict().items())
    assert parse_config_text(text) == replace(cfg)
