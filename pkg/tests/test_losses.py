import numpy as np
import pytest

from gradeq.errors import DimensionError, NumericError, ParameterError
from gradeq.gradstats import GradStats, MappingFn
from gradeq.losses import (
    VARIANTS,
    LossConfig,
    QualityTargets,
    calibration_offsets,
    compose_objectness,
    evaluate_loss,
    focusing_terms,
    loss_terms,
    reweight_terms,
)

LN2 = 0.6931471805599453


def stats_with(g_pos, g_neg):
    st = GradStats(len(g_pos))
    st.g_pos[:] = g_pos
    st.g_neg[:] = g_neg
    return st


def quality_cfg(variant, **kw):
    return LossConfig(variant=variant, **kw)


# ---------------------------------------------------------------------------
# frozen single-point values
# ---------------------------------------------------------------------------


def test_bce_single_positive():
    out = evaluate_loss([[0.0]], [0], LossConfig(variant="bce", reduction="sum"))
    assert out.value == pytest.approx(LN2, rel=1e-15)
    assert out.grad[0, 0] == pytest.approx(-0.5, rel=1e-15)


def test_bce_mean_reduction_divides_by_bc():
    # 2x2 zeros: every term is ln2, mean divides by B*C = 4
    out = evaluate_loss(np.zeros((2, 2)), [0, 1], LossConfig(variant="bce"))
    assert out.value == pytest.approx(LN2, rel=1e-15)
    np.testing.assert_allclose(np.abs(out.grad), 0.125, rtol=1e-15)
    total = evaluate_loss(np.zeros((2, 2)), [0, 1], LossConfig(variant="bce", reduction="sum"))
    assert total.value == pytest.approx(4 * LN2, rel=1e-15)


def test_ce_extreme_logit_stays_finite():
    """-log p for a confident correct prediction: tiny, not zero."""
    out = evaluate_loss([[10.0, 0.0]], [0], LossConfig(variant="ce"))
    assert out.value == pytest.approx(4.5398899216870535e-05, rel=1e-10)
    assert out.grad[0, 0] == pytest.approx(-4.5397868702434395e-05, rel=1e-10)
    assert out.grad[0, 1] == pytest.approx(4.5397868702434395e-05, rel=1e-10)


def test_ce_mean_reduction_divides_by_rows():
    z = np.array([[1.0, -0.5, 0.0], [0.2, 0.2, 0.2]])
    lab = [2, 0]
    m = evaluate_loss(z, lab, LossConfig(variant="ce"))
    s = evaluate_loss(z, lab, LossConfig(variant="ce", reduction="sum"))
    assert m.value == pytest.approx(s.value / 2.0, rel=1e-15)


def test_softmax_eql_calibrated_probabilities():
    # offsets pi*log(g/max): [0.5*log(1/4), 0] shift z=[0,0] into
    # probabilities [1/3, 2/3]
    st = stats_with([1.0, 4.0], [0.0, 0.0])
    out = evaluate_loss([[0.0, 0.0]], [1],
                        LossConfig(variant="softmax_eql", pi=0.5), stats=st)
    assert out.value == pytest.approx(0.4054651081081644, rel=1e-9)
    np.testing.assert_allclose(out.grad, [[1.0 / 3.0, -1.0 / 3.0]], rtol=1e-9)


def test_focal_midpoint_value():
    out = evaluate_loss([[0.0]], [0],
                        LossConfig(variant="focal", reduction="sum"))
    # alpha_t * (1-p_t)^2 * (-log p_t) at p_t = 0.5
    assert out.value == pytest.approx(0.25 * 0.25 * LN2, rel=1e-12)


def test_efl_fully_unbalanced_category():
    # ratio 0 -> gamma^j = gamma_b + s = 10, w^j = 5
    st = stats_with([0.0], [1.0])
    out = evaluate_loss([[0.0]], [0],
                        LossConfig(variant="efl", alpha_weighting=False, reduction="sum"),
                        stats=st)
    assert out.value == pytest.approx(5.0 * LN2 / 1024.0, rel=1e-9)


def test_qfl_hard_positive_midpoint():
    out = evaluate_loss([[0.0]], [0],
                        LossConfig(variant="qfl", reduction="sum"))
    assert out.value == pytest.approx(0.25 * LN2, rel=1e-12)


def test_eqfl_half_ratio():
    st = stats_with([1.0], [2.0])  # ratio ~ 0.5 -> gamma^j ~ 6, w ~ 3
    out = evaluate_loss([[0.0]], [0],
                        LossConfig(variant="eqfl", reduction="sum"), stats=st)
    assert out.value == pytest.approx(3.0 * 0.5**6 * LN2, rel=1e-9)


def test_compose_objectness():
    out = compose_objectness([[0.8, 0.4]], [0.5])
    np.testing.assert_allclose(out, [[0.4, 0.2]], rtol=1e-15)
    with pytest.raises(DimensionError):
        compose_objectness([[0.8, 0.4]], [0.5, 0.5])


# ---------------------------------------------------------------------------
# exact reductions between variants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["linear", "sqrt", "exp"])
def test_sigmoid_eql_equals_bce_at_ratio_one(kind):
    """Fresh stats report ratio 1; endpoint-fixing maps give r=q=1."""
    rng = np.random.default_rng(5)
    z = rng.uniform(-4, 4, (6, 3))
    lab = rng.integers(0, 3, 6)
    eq = evaluate_loss(z, lab,
                       LossConfig(variant="sigmoid_eql", mapping=MappingFn(kind=kind)),
                       stats=GradStats(3))
    plain = evaluate_loss(z, lab, LossConfig(variant="bce"))
    assert eq.value == plain.value
    np.testing.assert_array_equal(eq.grad, plain.grad)


def test_sigmoid_like_map_does_not_fix_endpoint():
    # f(1) = sigmoid(2.4) != 1, so balanced sigmoid_eql with the
    # sigmoid_like map deliberately differs from plain bce
    z = np.full((2, 2), 0.5)
    eq = evaluate_loss(z, [0, 1], LossConfig(variant="sigmoid_eql"), stats=GradStats(2))
    plain = evaluate_loss(z, [0, 1], LossConfig(variant="bce"))
    assert abs(eq.value - plain.value) > 1e-4


def test_softmax_eql_equals_ce_at_pi_zero():
    rng = np.random.default_rng(6)
    z = rng.uniform(-4, 4, (5, 4))
    lab = rng.integers(0, 4, 5)
    st = stats_with(rng.uniform(0.1, 9, 4), rng.uniform(0.1, 9, 4))
    eq = evaluate_loss(z, lab, LossConfig(variant="softmax_eql", pi=0.0), stats=st)
    plain = evaluate_loss(z, lab, LossConfig(variant="ce"))
    assert eq.value == plain.value
    np.testing.assert_array_equal(eq.grad, plain.grad)


def test_efl_equals_focal_when_balanced_or_s_zero():
    rng = np.random.default_rng(7)
    z = rng.uniform(-5, 5, (6, 4))
    lab = rng.integers(0, 4, 6)
    plain = evaluate_loss(z, lab, LossConfig(variant="focal"))
    balanced = evaluate_loss(z, lab, LossConfig(variant="efl"), stats=GradStats(4))
    assert balanced.value == plain.value
    np.testing.assert_array_equal(balanced.grad, plain.grad)
    st = stats_with(rng.uniform(0, 5, 4), rng.uniform(0, 5, 4))
    s_zero = evaluate_loss(z, lab, LossConfig(variant="efl", s=0.0), stats=st)
    assert abs(s_zero.value - plain.value) <= 1e-12
    np.testing.assert_allclose(s_zero.grad, plain.grad, atol=1e-12)


def test_eqfl_equals_qfl_when_balanced_or_s_zero():
    rng = np.random.default_rng(8)
    z = rng.uniform(-5, 5, (6, 3))
    lab = rng.integers(0, 3, 6)
    yq = rng.uniform(0, 1, 6)
    plain = evaluate_loss(z, lab, LossConfig(variant="qfl"), quality=yq)
    balanced = evaluate_loss(z, lab, LossConfig(variant="eqfl"), stats=GradStats(3), quality=yq)
    assert balanced.value == plain.value
    np.testing.assert_array_equal(balanced.grad, plain.grad)
    st = stats_with(rng.uniform(0, 5, 3), rng.uniform(0, 5, 3))
    s_zero = evaluate_loss(z, lab, LossConfig(variant="eqfl", s=0.0), stats=st, quality=yq)
    assert abs(s_zero.value - plain.value) <= 1e-12


def test_focal_reduces_to_bce():
    rng = np.random.default_rng(9)
    z = rng.uniform(-4, 4, (5, 3))
    lab = rng.integers(0, 3, 5)
    f = evaluate_loss(z, lab, LossConfig(variant="focal", gamma_b=0.0, alpha_weighting=False))
    b = evaluate_loss(z, lab, LossConfig(variant="bce"))
    assert f.value == pytest.approx(b.value, abs=1e-14)
    np.testing.assert_allclose(f.grad, b.grad, atol=1e-14)


# ---------------------------------------------------------------------------
# weights, offsets, targets
# ---------------------------------------------------------------------------


def test_reweight_terms_ranges_and_direction():
    cfg = LossConfig(variant="sigmoid_eql", alpha=4.0, mapping=MappingFn(kind="linear"))
    st = stats_with([0.0, 1.0, 5.0], [10.0, 1.0, 1.0])
    r, q = reweight_terms(cfg, st)
    assert np.all((r >= 0) & (r <= 1))
    assert np.all((q >= 1) & (q <= 5))
    # the unbalanced category gets the small r and the big q
    assert r[0] < r[2] and q[0] > q[2]
    assert q[0] == pytest.approx(1 + 4.0 * (1 - r[0]), rel=1e-12)


def test_focusing_terms_ranges():
    cfg = LossConfig(variant="efl", gamma_b=2.0, s=8.0)
    st = stats_with([0.0, 5.0], [7.0, 1.0])
    gamma_j, w = focusing_terms(cfg, st)
    assert gamma_j[0] == pytest.approx(10.0, rel=1e-9)
    assert gamma_j[1] == pytest.approx(2.0, rel=1e-9)
    np.testing.assert_allclose(w, gamma_j / 2.0, rtol=1e-12)
    assert np.all(w >= 1.0)


def test_focusing_terms_need_positive_gamma_b():
    cfg = LossConfig(variant="efl", gamma_b=0.0)
    with pytest.raises(ParameterError):
        focusing_terms(cfg, GradStats(2))


def test_calibration_offsets_zero_pi():
    np.testing.assert_array_equal(calibration_offsets(np.array([1.0, 9.0]), 0.0), np.zeros(2))


def test_calibration_offsets_scale_cancels():
    g = np.array([2.0, 8.0, 0.5])
    a = calibration_offsets(g, 1.5)
    b = calibration_offsets(g * 1e6, 1.5)
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_quality_targets_validation():
    with pytest.raises(ParameterError):
        QualityTargets([0], [1.5])
    with pytest.raises(DimensionError):
        QualityTargets([0, 1], [0.5])
    hard = QualityTargets.hard([0, 2, 1])
    np.testing.assert_array_equal(hard.y_prime, np.ones(3))


def test_qfl_gradient_vanishes_at_kink():
    p = 1.0 / (1.0 + np.exp(-0.3))
    out = evaluate_loss([[0.3]], [0],
                        LossConfig(variant="qfl", reduction="sum"),
                        quality=np.array([p]))
    assert out.grad[0, 0] == 0.0


# ---------------------------------------------------------------------------
# dispatch plumbing
# ---------------------------------------------------------------------------


def test_stats_required_for_equalized_variants():
    z = np.zeros((1, 2))
    for v in ("sigmoid_eql", "softmax_eql", "efl", "eqfl"):
        with pytest.raises(ParameterError):
            evaluate_loss(z, [0], LossConfig(variant=v))


def test_stats_category_mismatch():
    with pytest.raises(DimensionError):
        evaluate_loss(np.zeros((1, 3)), [0],
                      LossConfig(variant="sigmoid_eql"), stats=GradStats(2))


def test_input_validation():
    cfg = LossConfig(variant="bce")
    with pytest.raises(NumericError):
        evaluate_loss([[np.inf, 0.0]], [0], cfg)
    with pytest.raises(ParameterError):
        evaluate_loss(np.zeros((1, 2)), [5], cfg)
    with pytest.raises(DimensionError):
        evaluate_loss(np.zeros((2, 2)), [0], cfg)


def test_config_validation():
    with pytest.raises(ParameterError):
        LossConfig(variant="hinge")
    with pytest.raises(ParameterError):
        LossConfig(alpha=-1.0)
    with pytest.raises(ParameterError):
        LossConfig(pi=-0.5)
    with pytest.raises(ParameterError):
        LossConfig(gamma_b=-1.0)
    with pytest.raises(ParameterError):
        LossConfig(s=-1.0)
    with pytest.raises(ParameterError):
        LossConfig(alpha_t=0.0)
    with pytest.raises(ParameterError):
        LossConfig(reduction="median")


@pytest.mark.parametrize("variant", VARIANTS)
def test_loss_terms_reduce_to_value(variant):
    """The unreduced terms are the same computation as the value."""
    rng = np.random.default_rng(11)
    b, c = 5, 4
    z = rng.uniform(-4, 4, (b, c))
    lab = rng.integers(0, c, b)
    st = stats_with(rng.uniform(0, 6, c), rng.uniform(0, 6, c))
    yq = rng.uniform(0, 1, b)
    cfg = LossConfig(variant=variant)
    out = evaluate_loss(z, lab, cfg, stats=st, quality=yq)
    terms = loss_terms(z, lab, cfg, stats=st, quality=yq)
    expected_shape = (b,) if variant in ("ce", "softmax_eql") else (b, c)
    assert terms.shape == expected_shape
    denom = b if variant in ("ce", "softmax_eql") else b * c
    assert float(terms.sum()) / denom == pytest.approx(out.value, rel=1e-12)


def test_loss_terms_follow_longdouble():
    z = np.array([[0.5, -1.0]], dtype=np.longdouble)
    t = loss_terms(z, [0], LossConfig(variant="bce"))
    assert t.dtype == np.longdouble
