import math

import numpy as np
import pytest

from circlefit.algebraic import PRATT_MATRIX
from circlefit.analysis import (
    TruePointFrame,
    algebraic_bias_full,
    algebraic_bias_natural,
    essential_bias,
    geometric_bias_full,
    geometric_bias_terms,
    kasa_essential_bias_arc,
    kcr_covariance,
    kernel_pseudoinverse,
    method_essential_bias,
    mse_decompose,
    transition_jacobian,
    true_algebraic,
    w_matrix,
)
from circlefit.bench import arc_angles
from circlefit.errors import (
    ArcTooSmallError,
    DegenerateConicError,
    DegenerateFrameError,
    InputError,
    UnsupportedMethodError,
)
from circlefit.geometry import CircleGeom, alg_to_geom, geom_to_alg

UNIT = CircleGeom(0, 0, 1)


def semicircle(n=100, R=1.0):
    return TruePointFrame(CircleGeom(0, 0, R), arc_angles(n, 180))


def random_frame(rng, n=None):
    n = n or int(rng.integers(5, 60))
    c = CircleGeom(*rng.uniform(-5, 5, 2), rng.uniform(0.2, 5))
    return TruePointFrame(c, rng.uniform(0, 2 * math.pi, n))


def test_w_matrix_square_frame():
    W = w_matrix(TruePointFrame(UNIT, [0, math.pi / 2, math.pi, 3 * math.pi / 2]))
    assert W.T @ W == pytest.approx(np.diag([2.0, 2, 4]), abs=1e-15)


def test_w_matrix_rejects_degenerate_frames():
    with pytest.raises(DegenerateFrameError):
        w_matrix(TruePointFrame(UNIT, [0.3, 0.3, 0.3]))
    with pytest.raises(DegenerateFrameError):
        w_matrix(TruePointFrame(UNIT, [0, math.pi]))


def test_kcr_examples():
    W = w_matrix(TruePointFrame(UNIT, [0, math.pi / 2, math.pi, 3 * math.pi / 2]))
    assert kcr_covariance(W, 0.1) == pytest.approx(0.01 * np.diag([0.5, 0.5, 0.25]))
    V = kcr_covariance(w_matrix(semicircle()), 0.05)
    assert V[2, 2] == pytest.approx(1.2647e-4, rel=5e-3)


def test_kcr_symmetric_pd(rng):
    for _ in range(20):
        V = kcr_covariance(w_matrix(random_frame(rng)), rng.uniform(0.01, 1))
        assert np.array_equal(V, V.T) and np.linalg.eigvalsh(V).min() > 0


def test_least_squares_of_ones_is_third_axis(rng):
    for _ in range(50):
        W = w_matrix(random_frame(rng))
        x = np.linalg.solve(W.T @ W, W.T @ np.ones(W.shape[0]))
        assert x == pytest.approx([0, 0, 1], abs=1e-12)


def test_essential_bias_values():
    assert essential_bias("pratt", 0.05, 1).components == pytest.approx([0, 0, 0.005])
    assert essential_bias("pratt", 0.05, 1).components[2] ** 2 == pytest.approx(0.25e-4)
    assert essential_bias("taubin", 0.05, 1).components[2] == pytest.approx(0.0025)
    assert essential_bias("geometric", 0.05, 1).components[2] ** 2 == pytest.approx(0.015625e-4)
    assert not np.any(essential_bias("hyper", 0.3, 2).components)
    with pytest.raises(UnsupportedMethodError):
        essential_bias("kasa", 0.05, 1)


def test_essential_bias_ordering():
    p, t, g = (essential_bias(m, 0.07, 1.7).components[2] for m in ("pratt", "taubin", "geometric"))
    assert p == pytest.approx(2 * t) and p == pytest.approx(4 * g)


def test_kasa_arc_full_circle():
    frame = TruePointFrame(UNIT, arc_angles(64, 360))
    b = kasa_essential_bias_arc(frame, 0.1).components
    assert b == pytest.approx([0, 0, 0.01], abs=1e-15)


def test_kasa_arc_blows_up_as_arc_shrinks():
    mags = [abs(kasa_essential_bias_arc(TruePointFrame(UNIT, arc_angles(20, d)), 0.01).components[2])
            for d in (90, 45, 20, 10, 5)]
    assert all(b > a for a, b in zip(mags, mags[1:]))
    with pytest.raises(ArcTooSmallError):
        kasa_essential_bias_arc(TruePointFrame(UNIT, arc_angles(20, 1e-5)), 0.01)


def test_kasa_arc_requires_symmetric_pose():
    with pytest.raises(DegenerateFrameError):
        kasa_essential_bias_arc(TruePointFrame(UNIT, arc_angles(20, 90, 30)), 0.01)


@pytest.mark.parametrize("deg", [30, 90, 180, 270])
def test_kasa_closed_form_matches_general_formula(deg):
    frame = TruePointFrame(CircleGeom(0, 0, 2.5), arc_angles(40, deg))
    closed = kasa_essential_bias_arc(frame, 0.02).components
    general = algebraic_bias_natural(frame, "kasa", 0.02, essential_only=True).components
    assert closed == pytest.approx(general, abs=1e-12)


def test_geometric_bias_first_term_and_symmetry():
    frame = semicircle()
    first, _ = geometric_bias_terms(frame, 0.05)
    assert first == pytest.approx([0, 0, 0.05**2 / 2], abs=1e-15)
    full = TruePointFrame(UNIT, arc_angles(16, 360))
    W = w_matrix(full)
    G = np.linalg.inv(W.T @ W)
    q = np.column_stack([-full.v, full.u, np.zeros(16)])
    s = np.einsum("ij,jk,ik->i", q, G, q)
    assert np.ptp(s) < 1e-14


def test_geometric_bias_correction_decays_like_one_over_n():
    ess = essential_bias("geometric", 0.05, 1).components
    gaps = [np.linalg.norm(geometric_bias_full(semicircle(n), 0.05).components - ess)
            for n in (200, 400, 800)]
    assert gaps[0] / gaps[1] == pytest.approx(2, rel=0.02)
    assert gaps[1] / gaps[2] == pytest.approx(2, rel=0.02)


def test_transition_jacobian_against_differences(rng):
    for _ in range(30):
        c = CircleGeom(*rng.uniform(-3, 3, 2), rng.uniform(0.3, 4))
        p = geom_to_alg(c).as_array()
        J = transition_jacobian(p)
        h = 1e-6
        fd = np.column_stack([
            (alg_to_geom(p + h * e).as_array() - alg_to_geom(p - h * e).as_array()) / (2 * h)
            for e in np.eye(4)
        ])
        assert np.abs(J - fd).max() <= 1e-6 * max(1, np.abs(J).max())


def test_transition_jacobian_unit_circle_entry():
    s = 1 / math.sqrt(2)
    J = transition_jacobian([s, 0, 0, -s])
    assert (J @ [0, 1e-3, 0, 0])[0] == pytest.approx(-1e-3 / (2 * s))
    with pytest.raises(DegenerateConicError):
        transition_jacobian([0, 1, 0, 0])


def test_pseudoinverse_needs_one_dim_kernel():
    with pytest.raises(DegenerateFrameError):
        kernel_pseudoinverse(np.diag([1.0, 0, 0, 2]))
    P = kernel_pseudoinverse(np.diag([1.0, 2, 4, 0]))
    assert P == pytest.approx(np.diag([1, 0.5, 0.25, 0]))


def test_pratt_essential_vector(rng):
    frame = random_frame(rng, 30)
    ta = true_algebraic(frame)
    A = ta.A
    got = algebraic_bias_full(frame, "pratt", 0.1, essential_only=True)
    proj = np.eye(4) - np.outer(A, A)
    assert proj @ got == pytest.approx(proj @ (-4 * 0.01 * A[0] * np.eye(4)[3]), abs=1e-12)
    mapped = algebraic_bias_natural(frame, "pratt", 0.1, essential_only=True).components
    assert mapped == pytest.approx([0, 0, 2 * 0.01 / frame.circle.R], abs=1e-10)


def test_hyper_essential_vanishes(rng):
    frame = random_frame(rng, 25)
    assert np.abs(algebraic_bias_full(frame, "hyper", 0.1, essential_only=True)).max() < 1e-12


@pytest.mark.parametrize("method", ["pratt", "taubin", "hyper"])
def test_essential_part_of_full_formula(method, rng):
    for _ in range(20):
        frame = random_frame(rng)
        got = algebraic_bias_natural(frame, method, 0.05, essential_only=True).components
        want = essential_bias(method, 0.05, frame.circle.R).components
        assert got == pytest.approx(want, abs=1e-10)


def test_full_bias_rejects_geometric():
    with pytest.raises(UnsupportedMethodError):
        algebraic_bias_full(semicircle(), "geometric", 0.05)


def test_identities_on_random_frames(rng):
    for _ in range(100):
        frame = random_frame(rng)
        ta = true_algebraic(frame)
        W = w_matrix(frame)
        G = np.linalg.inv(W.T @ W)
        n, R, A0 = frame.n, frame.circle.R, ta.A[0]
        lhs = 2 * A0 * R * ta.J @ ta.M_pinv @ ta.Z.T
        assert np.abs(lhs + n * G @ W.T).max() <= 1e-9
        assert np.abs(4 * A0**2 * R**2 * ta.J @ ta.M_pinv @ ta.J.T - n * G).max() <= 1e-9
        var = (ta.A @ PRATT_MATRIX @ ta.A) / n * ta.J @ ta.M_pinv @ ta.J.T
        assert np.abs(var - G).max() <= 1e-9


def test_mse_decompose_exact_estimates():
    frame = semicircle()
    br = mse_decompose([UNIT] * 5, frame, 0.05, "pratt")
    assert br.total_mse == 0
    assert br.remainder == -br.variance_theory - br.ess_bias_sq
    with pytest.raises(InputError):
        mse_decompose([], frame, 0.05, "pratt")


def test_mse_decompose_remainder_identity(rng):
    frame = semicircle()
    est = [CircleGeom(0, 0, 1 + e) for e in rng.normal(0.001, 0.01, 50)]
    br = mse_decompose(est, frame, 0.05, "hyper")
    assert br.total_mse == pytest.approx(np.mean([(c.R - 1) ** 2 for c in est]))
    assert br.remainder == br.total_mse - br.variance_theory - br.ess_bias_sq
    assert br.empirical_bias == pytest.approx(np.mean([c.R - 1 for c in est]))


def test_method_essential_bias_includes_kasa():
    frame = TruePointFrame(UNIT, arc_angles(20, 45))
    assert method_essential_bias(frame, "kasa", 0.01) == pytest.approx(
        kasa_essential_bias_arc(frame, 0.01).components, abs=1e-12
    )
