import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selectcond.service.ancillarity import (
    FiniteModel,
    FiniteSelection,
    apply_selection,
    check_G_preservation,
    check_M_preservation,
    g_counterexample,
    is_G_ancillary,
    is_M_ancillary,
    point_mass_model,
    rank_over_support,
    relaxed_epsilon,
    selection_totals,
)
from selectcond.service.errors import UnsupportedSelectionError


def test_table_validation():
    with pytest.raises(ValueError):
        FiniteModel.from_table([[[0.5, 0.4]]])
    with pytest.raises(ValueError):
        FiniteModel.from_table([[[1.5, -0.5]]])
    with pytest.raises(ValueError):
        FiniteSelection([[0.5, 1.2]])


def test_selection_shape_must_match():
    model = point_mass_model(3)
    with pytest.raises(ValueError):
        selection_totals(model, FiniteSelection.constant(1, 2))


def test_point_mass_family_is_complete():
    check = is_G_ancillary(point_mass_model(4), 0)
    assert check.holds
    assert check.rank == 4
    assert check.witness is None


def test_single_distribution_is_incomplete():
    model = FiniteModel.from_table([[[0.2, 0.3, 0.5]]])
    check = is_G_ancillary(model, 0)
    assert not check.holds
    assert np.dot(model.table[0, 0], check.witness) == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(check.witness) == pytest.approx(1.0)


def test_rank_ignores_points_outside_support():
    rank, support, _ = rank_over_support([[0.5, 0.0, 0.5], [0.25, 0.0, 0.75]])
    assert rank == 2
    assert list(support) == [0, 2]


def test_selected_table_is_normalized(rng):
    model = FiniteModel.random(rng, 2, 3, 4)
    sel = FiniteSelection.random(rng, 2, 4)
    selective = apply_selection(model, sel)
    assert selective.table.sum(axis=2) == pytest.approx(np.ones((2, 3)), abs=1e-12)
    expected = model.table[1, 2] * sel.phi_psi_a[1] / selection_totals(model, sel)[1, 2]
    assert selective.table[1, 2] == pytest.approx(expected, abs=1e-14)


def test_zero_selection_total_is_unsupported():
    model = FiniteModel.from_table([[[1.0, 0.0]]])
    with pytest.raises(UnsupportedSelectionError):
        apply_selection(model, FiniteSelection([[0.0, 1.0]]))


def test_random_models_preserve_grid_completeness(rng):
    for _ in range(200):
        P, C, K = (int(v) for v in rng.integers(1, 5, size=3))
        model = FiniteModel.random(rng, P, C, K, sparsity=float(rng.choice([0.0, 0.3])))
        report = check_G_preservation(model, FiniteSelection.random(rng, P, K))
        assert report.status == "preserved"
        assert len(report.per_psi) == P


def test_zero_selection_skips_preservation_check():
    model = point_mass_model(2)
    report = check_G_preservation(model, FiniteSelection([[1.0, 0.0]]))
    assert report.status == "hypothesis-violated"
    assert not report.holds


def test_counterexample_breaks_preservation():
    model, sel = g_counterexample()
    before = is_G_ancillary(model, 0)
    assert not before.holds
    assert abs(before.witness[0]) == pytest.approx(abs(before.witness[1]))
    assert before.witness[0] * before.witness[1] < 0

    report = check_G_preservation(model, sel, allow_zero=True)
    assert report.status == "violated"
    assert report.counterexample_mode
    assert report.per_psi[0].before is False
    assert report.per_psi[0].after is True


def test_mode_condition():
    model = FiniteModel.from_table([[[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]])
    assert not is_M_ancillary(model, 0, 0.3).holds
    assert is_M_ancillary(model, 0, 0.3).failing_points == [1]
    assert is_M_ancillary(model, 0, 0.6).holds
    with pytest.raises(ValueError):
        is_M_ancillary(model, 0, 1.0)


def test_relaxed_epsilon_formula():
    sel = FiniteSelection([[0.2, 0.5, 1.0]])
    assert relaxed_epsilon(sel, 0, 0.1) == pytest.approx(1.0 - 0.9 * 0.2)
    assert relaxed_epsilon(FiniteSelection.constant(1, 3, 0.4), 0, 0.1) == pytest.approx(0.1)


@given(seed=st.integers(0, 2 ** 32 - 1), epsilon=st.floats(0.01, 0.5))
def test_mode_condition_survives_selection(seed, epsilon):
    rng = np.random.default_rng(seed)
    P, C, K = 2, int(rng.integers(1, 5)), int(rng.integers(2, 6))
    model = FiniteModel.random(rng, P, C, K)
    report = check_M_preservation(model, FiniteSelection.random(rng, P, K), epsilon)
    assert report.status == "preserved"
    for row in report.per_psi:
        assert row.epsilon_prime >= epsilon


@given(seed=st.integers(0, 2 ** 32 - 1), value=st.floats(0.05, 1.0))
def test_constant_selection_is_equivalent(seed, value):
    rng = np.random.default_rng(seed)
    model = FiniteModel.random(rng, 1, 3, 4)
    report = check_M_preservation(model, FiniteSelection.constant(1, 4, value), 0.2)
    assert report.per_psi[0].equivalence_checked
    assert report.per_psi[0].before == report.per_psi[0].after
