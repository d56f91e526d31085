"""LSTM cell equations, BPTT gradients, and classifier training."""

import math

import numpy as np
import pytest

from conftest import blob_data

from ransomflow import rng
from ransomflow.errors import (
    DegenerateClasses,
    EmptyData,
    LabelOutOfRange,
    ShapeMismatch,
)
from ransomflow.lstm import (
    LstmCell,
    LstmConfig,
    cell_forward,
    create_classifier,
    history_csv,
    model_from_dict,
    model_to_dict,
    predict,
    predict_proba,
    sequence_backward,
    sequence_forward,
    to_sequences,
    train_classifier,
)
from ransomflow.nn import cross_entropy_loss, dense_forward, grad_check


def zero_cell(input_size: int, hidden_size: int) -> LstmCell:
    total = input_size + hidden_size
    return LstmCell(
        w_i=np.zeros((hidden_size, total)), w_f=np.zeros((hidden_size, total)),
        w_o=np.zeros((hidden_size, total)), w_c=np.zeros((hidden_size, total)),
        b_i=np.zeros(hidden_size), b_f=np.zeros(hidden_size),
        b_o=np.zeros(hidden_size), b_c=np.zeros(hidden_size),
    )


def test_cell_forward_zero_weights_halves_state():
    # sigma(0) = 0.5 and tanh(0) = 0, so c = 0.5 c_prev, h = 0.5 tanh(c)
    cell = zero_cell(3, 2)
    c_prev = np.array([0.8, -0.4])
    h, c, cache = cell_forward(cell, np.array([1.0, 2.0, 3.0]),
                               np.zeros(2), c_prev)
    assert np.array_equal(c, 0.5 * c_prev)
    assert np.allclose(h, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)
    for gate in (cache.i, cache.f, cache.o):
        assert np.array_equal(gate, np.full((1, 2), 0.5))
    assert np.array_equal(cache.g, np.zeros((1, 2)))


def test_cell_forward_scalar_hand_case():
    # unit weights, zero bias, x = 1 from rest: every pre-activation is 1,
    # so c = sigma(1) tanh(1) and h = sigma(1) tanh(c); the reference values
    # come from evaluating those expressions with math alone
    sig1 = 1.0 / (1.0 + math.exp(-1.0))
    c_ref = sig1 * math.tanh(1.0)
    h_ref = sig1 * math.tanh(c_ref)
    assert abs(c_ref - 0.5567699411459397) < 1e-15
    assert abs(h_ref - 0.36960635293570576) < 1e-15

    cell = LstmCell(
        w_i=np.ones((1, 2)), w_f=np.ones((1, 2)), w_o=np.ones((1, 2)),
        w_c=np.ones((1, 2)), b_i=np.zeros(1), b_f=np.zeros(1),
        b_o=np.zeros(1), b_c=np.zeros(1),
    )
    h, c, _ = cell_forward(cell, np.array([1.0]), np.zeros(1), np.zeros(1))
    assert abs(c[0] - c_ref) < 1e-9
    assert abs(h[0] - h_ref) < 1e-9


def test_cell_forward_saturated_gates_retain_memory():
    cell = zero_cell(2, 3)
    cell.b_f[:] = 40.0
    cell.b_i[:] = -40.0
    c_prev = np.array([0.9, -0.2, 0.5])
    _, c, _ = cell_forward(cell, np.array([5.0, -5.0]), np.zeros(3), c_prev)
    assert np.abs(c - c_prev).max() < 1e-12


def test_cell_forward_retention_is_bit_exact_when_fully_saturated():
    # sigma(40) rounds to exactly 1.0 in doubles and tanh(0) is exactly 0,
    # so with a zero candidate path the cell state never changes at all
    cell = zero_cell(2, 3)
    cell.b_f[:] = 40.0
    c = np.array([0.123456789, -0.5, 0.25])
    c0 = c.copy()
    h = np.zeros(3)
    for t in range(50):
        x = rng.uniform(rng.derive(4, "x", t), (2,))
        h, c, _ = cell_forward(cell, x, h, c)
    assert np.array_equal(c, c0)


def test_cell_forward_rejects_bad_shapes():
    cell = zero_cell(3, 2)
    with pytest.raises(ShapeMismatch):
        cell_forward(cell, np.zeros(4), np.zeros(2), np.zeros(2))
    with pytest.raises(ShapeMismatch):
        cell_forward(cell, np.zeros(3), np.zeros(3), np.zeros(2))


def test_cell_state_magnitude_grows_at_most_one_per_step():
    # |c_t| <= |c_{t-1}| + 1 because gates are in (0, 1) and |g| < 1
    cell = LstmCell.create(4, 6, seed=31)
    seq = 3.0 * rng.uniform(8, (7, 4))
    h = np.zeros(6)
    c = np.zeros(6)
    for t in range(7):
        h, c, _ = cell_forward(cell, seq[t], h, c)
        assert np.abs(c).max() <= t + 1


def test_sequence_forward_uniform_probs_with_zero_model():
    model = create_classifier(5, 4, LstmConfig(hidden_size=3, seed=1))
    for cell in model.cells:
        for p in cell.params():
            p[:] = 0.0
    model.head.weights[:] = 0.0
    probs, _ = sequence_forward(model, np.ones((1, 5))[:, None, :])
    assert np.allclose(probs, 0.25, atol=1e-15)
    assert predict(model, np.ones((2, 5)))[0] == 0  # tie-break to lowest


def test_sequence_forward_probs_sum_to_one():
    model = create_classifier(6, 3, LstmConfig(hidden_size=7, seed=5))
    seqs = to_sequences(rng.uniform(6, (9, 6)), "single-step")
    probs, _ = sequence_forward(model, seqs)
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9


def test_sequence_forward_t2_matches_chained_cells():
    model = create_classifier(4, 3, LstmConfig(hidden_size=5, seed=99))
    seqs = rng.uniform(17, (6, 2, 4))
    probs, _ = sequence_forward(model, seqs)
    cell = model.cells[0]
    h = np.zeros((6, 5))
    c = np.zeros((6, 5))
    h, c, _ = cell_forward(cell, seqs[:, 0, :], h, c)
    h, c, _ = cell_forward(cell, seqs[:, 1, :], h, c)
    manual, _ = dense_forward(model.head, h)
    assert np.array_equal(probs, manual)


def test_to_sequences_layouts():
    x = rng.uniform(3, (5, 13))
    assert to_sequences(x, "single-step").shape == (5, 1, 13)
    assert to_sequences(x, "feature-steps").shape == (5, 13, 1)
    assert np.array_equal(to_sequences(x, "feature-steps")[:, :, 0], x)


def bptt_rel_error(hidden, input_dim, time_steps, seed):
    cfg = LstmConfig(hidden_size=hidden, seed=seed)
    model = create_classifier(input_dim, 3, cfg)
    seqs = rng.uniform(rng.derive(seed, "seq"), (4, time_steps, input_dim))
    labels = np.array([0, 1, 2, 1])
    params = model.params()

    def loss_fn():
        probs, caches = sequence_forward(model, seqs)
        loss, grad_logits = cross_entropy_loss(probs, labels)
        grads, _ = sequence_backward(model, caches, grad_logits)
        return loss, grads

    return grad_check(loss_fn, params)


def test_bptt_gradients_match_finite_differences():
    assert bptt_rel_error(hidden=1, input_dim=1, time_steps=2, seed=7) < 1e-4
    assert bptt_rel_error(hidden=3, input_dim=4, time_steps=5, seed=11) < 1e-4


def test_bptt_gradient_vanishes_at_loss_minimum():
    model = create_classifier(2, 3, LstmConfig(hidden_size=2, seed=3))
    for cell in model.cells:
        for p in cell.params():
            p[:] = 0.0
    model.head.weights[:] = 0.0
    model.head.biases[:] = 0.0
    model.head.biases[1] = 40.0  # softmax output is 1 on class 1 to 1e-17
    seqs = np.ones((1, 1, 2))
    probs, caches = sequence_forward(model, seqs)
    _, grad_logits = cross_entropy_loss(probs, np.array([1]))
    grads, norm = sequence_backward(model, caches, grad_logits)
    assert norm < 1e-6
    assert max(np.abs(g).max() for g in grads) < 1e-6


def test_bptt_clipping_caps_global_norm():
    model = create_classifier(3, 3, LstmConfig(hidden_size=4, seed=13))
    seqs = rng.uniform(21, (8, 2, 3))
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    probs, caches = sequence_forward(model, seqs)
    _, grad_logits = cross_entropy_loss(probs, labels)
    raw, raw_norm = sequence_backward(model, caches, grad_logits)
    assert raw_norm > 1e-3
    theta = raw_norm / 4.0
    clipped, norm = sequence_backward(model, caches, grad_logits,
                                      clip_threshold=theta)
    assert norm <= theta + 1e-9
    for a, b in zip(clipped, raw):
        assert np.allclose(a, b * (theta / raw_norm), atol=1e-12)
    # a generous threshold leaves gradients untouched
    same, same_norm = sequence_backward(model, caches, grad_logits,
                                        clip_threshold=raw_norm * 10)
    assert same_norm == raw_norm
    for a, b in zip(same, raw):
        assert np.array_equal(a, b)


def test_default_parameter_count():
    model = create_classifier(13, 3, LstmConfig())
    assert model.param_count == 122811
    assert model.cells[0].param_count == 122304
    assert model.head.param_count == 507


def test_train_separates_gaussian_blobs():
    x, y = blob_data(40, 2, seed=23)
    train_x, test_x = x[:60], x[60:]
    train_y, test_y = y[:60], y[60:]
    cfg = LstmConfig(hidden_size=16, epochs=50, batch_size=16,
                     learning_rate=0.01, seed=5)
    model, history = train_classifier(train_x, train_y, cfg)
    assert (predict(model, test_x) == test_y).mean() >= 0.95
    assert (predict(model, train_x) == train_y).mean() >= 0.99
    assert history[-1][0] < history[0][0]
    assert len(history) == 50


def test_train_is_deterministic_per_seed():
    x, y = blob_data(10, 3, seed=29)
    cfg = LstmConfig(hidden_size=4, epochs=5, batch_size=8, seed=77)
    model_a, hist_a = train_classifier(x, y, cfg)
    model_b, hist_b = train_classifier(x, y, cfg)
    assert hist_a == hist_b
    for pa, pb in zip(model_a.params(), model_b.params()):
        assert np.array_equal(pa, pb)
    _, hist_c = train_classifier(
        x, y, LstmConfig(hidden_size=4, epochs=5, batch_size=8, seed=78))
    assert hist_a[-1] != hist_c[-1]


def test_train_validates_inputs():
    x = rng.uniform(1, (6, 4))
    with pytest.raises(LabelOutOfRange):
        train_classifier(x, np.array([0, 1, 2, 0, 1, 5]),
                         LstmConfig(hidden_size=2, epochs=1), k_classes=3)
    with pytest.raises(DegenerateClasses):
        train_classifier(x, np.zeros(6, dtype=int),
                         LstmConfig(hidden_size=2, epochs=1))
    with pytest.raises(EmptyData):
        train_classifier(np.empty((0, 4)), np.empty(0, dtype=int),
                         LstmConfig(hidden_size=2, epochs=1), k_classes=3)


def test_predict_batch_matches_per_row():
    x, y = blob_data(8, 3, seed=41)
    cfg = LstmConfig(hidden_size=6, epochs=3, batch_size=8, seed=9)
    model, _ = train_classifier(x, y, cfg)
    batch = predict_proba(model, x)
    for i in range(len(x)):
        row = predict_proba(model, x[i:i + 1])
        assert np.abs(batch[i] - row[0]).max() < 1e-12
    assert np.array_equal(predict(model, x),
                          batch.argmax(axis=1).astype(np.int64))
    # chunked evaluation stitches to the same answer
    assert np.array_equal(predict_proba(model, x, chunk=5), batch)


def test_model_serialization_round_trip():
    x, y = blob_data(6, 2, seed=47)
    cfg = LstmConfig(hidden_size=3, epochs=2, batch_size=4, seed=15)
    model, _ = train_classifier(x, y, cfg)
    restored = model_from_dict(model_to_dict(model))
    assert restored.k_classes == model.k_classes
    assert restored.config == model.config
    assert np.array_equal(predict_proba(restored, x), predict_proba(model, x))


def test_history_csv_layout():
    text = history_csv([(0.9, 0.5), (0.4, 0.75)])
    lines = text.strip().splitlines()
    assert lines[0] == "epoch,loss,accuracy"
    assert lines[1] == "0,0.9,0.5"
    assert lines[2] == "1,0.4,0.75"
