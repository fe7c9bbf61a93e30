from itertools import pairwise

import numpy as np
import pytest

from right_reasons.datasets.schema import GridKind, TabularKind, TextKind
from right_reasons.errors.explain import CutoffError, ExplanationTargetError, RenderError
from right_reasons.explain.explanations import ExplanationSet, ExplanationTarget, explain, magnitude_ratios, mask_top
from right_reasons.explain.render import load_artifact, render
from right_reasons.model.mlp import init_params, input_logprob_gradients, predict_proba


def explanation_of(gradients):
    return ExplanationSet(gradients=np.asarray(gradients, dtype=float), target=ExplanationTarget.SUM_LOGPROB, params_fingerprint="test")


def test_sum_logprob_matches_model_gradients(small_params, small_batch):
    X, _, _ = small_batch
    np.testing.assert_array_equal(explain(small_params, X).gradients, input_logprob_gradients(small_params, X))


def test_predicted_prob_matches_finite_differences(small_params, small_batch):
    X, _, _ = small_batch
    gradients = explain(small_params, X, ExplanationTarget.PREDICTED_PROB).gradients
    predicted = predict_proba(small_params, X).argmax(axis=1)
    rows = np.arange(X.shape[0])
    step = 1e-6
    for d in range(X.shape[1]):
        shift = np.zeros_like(X)
        shift[:, d] = step
        upper = predict_proba(small_params, X + shift)[rows, predicted]
        lower = predict_proba(small_params, X - shift)[rows, predicted]
        np.testing.assert_allclose(gradients[:, d], (upper - lower) / (2 * step), rtol=1e-4, atol=1e-8)


def test_class_prob_needs_a_valid_class(small_params, small_batch):
    X, _, _ = small_batch
    with pytest.raises(ExplanationTargetError):
        explain(small_params, X, ExplanationTarget.CLASS_PROB)
    with pytest.raises(ExplanationTargetError):
        explain(small_params, X, "class-prob", class_index=3)
    explanations = explain(small_params, X, "class-prob", class_index=2)
    assert explanations.target_label == "class-prob(2)"


def test_magnitude_ratios_handle_zero_rows():
    ratios = magnitude_ratios([[0.0, 0.0], [-4.0, 2.0]])
    np.testing.assert_array_equal(ratios, [[0.0, 0.0], [1.0, 0.5]])


def test_mask_keeps_row_maximum_and_skips_zero_rows():
    mask = mask_top(explanation_of([[0.0, 0.0, 0.0], [0.1, -0.3, 0.2], [5.0, 5.0, 1.0]]), cutoff=1.0)
    np.testing.assert_array_equal(mask.bits, [[0, 0, 0], [0, 1, 0], [1, 1, 0]])


def test_mask_cutoff_is_closed():
    mask = mask_top(explanation_of([[0.67, 1.0, 0.669]]), cutoff=0.67)
    np.testing.assert_array_equal(mask.bits, [[1, 1, 0]])


def test_mask_is_monotone_in_cutoff(rng):
    explanations = explanation_of(rng.normal(size=(20, 12)))
    looser, tighter = mask_top(explanations, 0.3).bits, mask_top(explanations, 0.8).bits
    assert np.all(tighter <= looser)
    assert tighter.sum() < looser.sum()


def test_mask_is_scale_invariant(rng):
    gradients = rng.normal(size=(20, 12))
    np.testing.assert_array_equal(mask_top(explanation_of(gradients), 0.5).bits, mask_top(explanation_of(-7.5 * gradients), 0.5).bits)


def test_mask_is_idempotent(rng):
    first = mask_top(explanation_of(rng.normal(size=(20, 12))), 0.5)
    np.testing.assert_array_equal(mask_top(explanation_of(first.bits), 0.5).bits, first.bits)


def test_selected_fraction_never_grows_with_the_cutoff(small_params, small_batch):
    X, _, _ = small_batch
    explanations = explain(small_params, X)
    fractions = [mask_top(explanations, cutoff).selected_fraction for cutoff in np.linspace(0.1, 1.0, 10)]
    assert all(later <= earlier for earlier, later in pairwise(fractions)), fractions
    assert fractions[-1] == pytest.approx(1 / X.shape[1])


@pytest.mark.parametrize("cutoff", [0.0, -0.2, 1.01])
def test_mask_rejects_cutoff(cutoff):
    with pytest.raises(CutoffError):
        mask_top(explanation_of([[1.0]]), cutoff)


def test_render_grid_collapses_channels(tmp_path):
    grid = GridKind(height=2, width=2, channels=3)
    gradients = np.zeros((1, 12))
    gradients[0, 0:3] = [0.1, -0.9, 0.2]
    gradients[0, 9:12] = [0.3, 0.0, 0.0]
    explanations = explanation_of(gradients)
    path = tmp_path / "artifact.json"
    artifact = render(explanations, mask_top(explanations, 0.5), grid, path)

    features = artifact.examples[0].features
    assert [feature.index for feature in features] == [0, 1, 2, 3]
    assert features[0].weight == -0.9
    assert features[0].opacity == 1.0
    assert features[3].opacity == pytest.approx(0.3 / 0.9)
    assert [feature.selected for feature in features] == [True, False, False, False]
    assert load_artifact(path) == artifact


def test_render_text_lists_present_words_only():
    kind = TextKind(vocabulary=["god", "atheism", "church"])
    X = np.array([[0.0, 0.5, 0.8]])
    artifact = render(explanation_of([[9.0, -2.0, 1.0]]), None, kind, X=X)
    assert [feature.name for feature in artifact.examples[0].features] == ["atheism", "church"]
    assert artifact.examples[0].features[0].opacity == 1.0
    assert artifact.cutoff is None


def test_render_rejects_mismatched_layout():
    with pytest.raises(RenderError):
        render(explanation_of([[1.0, 2.0]]), None, TabularKind(feature_names=["a", "b", "c"]))


def test_render_records_model_and_target(small_params, small_batch):
    X, _, _ = small_batch
    explanations = explain(small_params, X, ExplanationTarget.PREDICTED_PROB)
    artifact = render(explanations, None, TabularKind(feature_names=list("abcd")), examples=[0, 3])
    assert artifact.model_fingerprint == small_params.fingerprint()
    assert artifact.target == "predicted-prob"
    assert [example.example for example in artifact.examples] == [0, 3]


def test_explanations_are_reproducible(small_batch):
    X, _, _ = small_batch
    params = init_params(4, 3, seed=11, hidden_sizes=(6,))
    first = explain(params, X, ExplanationTarget.PREDICTED_PROB).gradients
    second = explain(params, X, ExplanationTarget.PREDICTED_PROB).gradients
    assert first.tobytes() == second.tobytes()
