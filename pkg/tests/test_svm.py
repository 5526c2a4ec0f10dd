import numpy as np
import pytest

from aqcekit import svm
from aqcekit.svm import (
    accuracy,
    decision,
    dual_objective,
    load_model,
    predict,
    save_model,
    train_binary,
    train_multiclass,
)
from oracles import brute_force_dual


def linear_gram(x):
    x = np.asarray(x, dtype=float)
    return x @ x.T


def rbf_gram(x, gamma=0.5):
    d = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * d)


def blobs(rng, per=15, centers=((0, 0), (4, 0), (0, 4))):
    x = np.concatenate([rng.normal(c, 0.5, size=(per, 2)) for c in centers])
    y = np.repeat(np.arange(len(centers)), per)
    return x, y


def test_two_points_analytic():
    # x = +-1 in 1D, linear kernel: a = (1/2, 1/2) gives margin 1
    K = linear_gram([[1.0], [-1.0]])
    m = train_binary(K, [1, -1], C=10)
    np.testing.assert_allclose(m.alphas, [0.5, 0.5], atol=1e-6)
    assert m.bias == pytest.approx(0, abs=1e-6)
    assert decision(m, K[0]) == pytest.approx(1, abs=1e-6)
    assert decision(m, K[1]) == pytest.approx(-1, abs=1e-6)


def test_four_points_linear_separable():
    x = np.array([[2.0, 2], [3, 3], [-2, -2], [-3, -1]])
    t = np.array([1, 1, -1, -1])
    K = linear_gram(x)
    m = train_binary(K, t, C=100)
    f = decision(m, K)
    assert np.all(np.sign(f) == t)
    assert np.all(t * f >= 1 - 1e-3)
    # support vectors are the two inner points
    assert set(m.support.tolist()) == {0, 2}


def test_degenerate_identical_points_bounded():
    # overlapping classes: alphas hit C, the dual stays finite
    K = np.ones((4, 4))
    m = train_binary(K, [1, -1, 1, -1], C=0.7)
    assert np.all(m.alphas <= 0.7 + 1e-12)
    assert abs(np.dot(m.alphas, m.targets)) <= 1e-10
    assert m.converged


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_dual_matches_brute_force(n, rng):
    for trial in range(4):
        x = rng.normal(size=(n, 2))
        t = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        rng.shuffle(t)
        K = rbf_gram(x) if trial % 2 else linear_gram(x) + 1e-3 * np.eye(n)
        for C in (0.3, 5.0):
            m = train_binary(K, t, C=C)
            best, _ = brute_force_dual(K, t, C)
            assert m.dual_objective(K) == pytest.approx(best, abs=1e-4)
            assert m.kkt_residual(K) <= 1e-3


def test_monotone_objective_and_constraints(rng):
    x, y = blobs(rng)
    t = np.where(y == 0, 1.0, -1.0)
    K = rbf_gram(x)
    m = train_binary(K, t, C=1.0, record=True)
    h = m.history
    assert len(h) == m.iterations + 1
    assert min(np.diff(h)) >= -1e-12
    assert h[-1] == pytest.approx(m.dual_objective(K), abs=1e-9)
    assert np.all((m.alphas >= 0) & (m.alphas <= 1.0))
    assert abs(m.alphas @ t) <= 1e-10
    assert m.kkt_residual(K) <= 1e-3


def test_kernel_scaling_invariance(rng):
    # scaling K by s and C by 1/s scales alphas by 1/s and leaves f unchanged
    x, y = blobs(rng, per=8)
    t = np.where(y == 1, 1.0, -1.0)
    K = rbf_gram(x)
    a = train_binary(K, t, C=2.0, tol=1e-9)
    b = train_binary(4.0 * K, t, C=0.5, tol=1e-9)
    np.testing.assert_allclose(b.alphas * 4.0, a.alphas, atol=1e-6)
    np.testing.assert_allclose(decision(b, 4.0 * K), decision(a, K), atol=1e-5)


def test_backends_agree(rng):
    x, y = blobs(rng, per=10)
    t = np.where(y == 2, 1.0, -1.0)
    K = rbf_gram(x)
    out = [fn(K, t, 1.0, 1e-6, 100000, False) for fn in (svm._smo_nb, svm._smo_np)]
    np.testing.assert_allclose(out[0][0], out[1][0], atol=1e-12)
    assert out[0][2] == out[1][2]


def test_indefinite_gram_gets_jitter(rng, caplog):
    K = np.array([[1.0, 0.0], [0.0, -1e-6]])
    with caplog.at_level("WARNING"):
        m = train_binary(K, [1, -1])
    assert "jitter" in caplog.text
    assert np.all(np.isfinite(m.alphas))


@pytest.mark.parametrize("strategy", ["one_vs_one", "one_vs_rest"])
def test_multiclass_blobs(strategy, rng):
    x, y = blobs(rng)
    xt, yt = blobs(rng, per=10)
    xa = np.concatenate([x, xt])
    K = rbf_gram(xa)
    n = len(y)
    model = train_multiclass(K[:n, :n], y, strategy)
    # three classes: 3 pairs or 3 one-vs-rest machines
    assert len(model.components) == 3
    assert accuracy(predict(model, K[n:, :n]), yt) == 1.0


def test_one_vs_one_pair_count(rng):
    x, y = blobs(rng, per=5, centers=[(0, 0), (5, 0), (0, 5), (5, 5), (9, 9)])
    model = train_multiclass(rbf_gram(x), y, "one_vs_one")
    assert len(model.components) == 10
    assert [c.classes for c in model.components][:2] == [(0, 1), (0, 2)]


def test_vote_tie_goes_to_larger_score():
    # three classes each winning one duel: the summed margin decides
    comps = []
    for (a, b), bias in (((0, 1), 1.0), ((0, 2), -0.2), ((1, 2), 0.5)):
        m = svm.SVMModel(np.zeros(1), bias, np.ones(1), 1.0)
        comps.append(svm.Component((a, b), np.array([0]), m))
    model = svm.MulticlassModel("one_vs_one", np.array([0, 1, 2]), 1, comps)
    # votes 1 each; sums: class0 = 1 - 0.2 = 0.8, class1 = -1 + 0.5, class2 = 0.2 - 0.5
    assert predict(model, np.zeros((1, 1))).tolist() == [0]


def test_predict_empty_and_shape_errors(rng):
    x, y = blobs(rng, per=4)
    model = train_multiclass(rbf_gram(x), y)
    assert predict(model, np.zeros((0, len(y)))).shape == (0,)
    with pytest.raises(ValueError):
        predict(model, np.zeros((1, 3)))


def test_save_load_exact(rng, tmp_path):
    x, y = blobs(rng, per=6)
    K = rbf_gram(x)
    for strategy in ("one_vs_one", "one_vs_rest"):
        model = train_multiclass(K, y, strategy)
        path = tmp_path / f"{strategy}.model"
        save_model(model, path)
        back = load_model(path)
        assert back.strategy == strategy and back.n_train == len(y)
        assert np.array_equal(model.scores(K), back.scores(K))
        assert np.array_equal(predict(model, K), predict(back, K))


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.model"
    p.write_text("hello\n")
    with pytest.raises(ValueError):
        load_model(p)


def test_input_errors():
    K = np.eye(3)
    with pytest.raises(ValueError):
        train_binary(K, [1, 1, 1])
    with pytest.raises(ValueError):
        train_binary(K, [1, 0, -1])
    with pytest.raises(ValueError):
        train_binary(K, [1, -1])
    with pytest.raises(ValueError):
        train_binary(K, [1, -1, 1], C=0)
    with pytest.raises(ValueError):
        train_binary(np.ones((2, 3)), [1, -1])
    with pytest.raises(ValueError):
        train_multiclass(K, [0, 0, 0])
    with pytest.raises(ValueError):
        train_multiclass(K, [0, 1, 2], strategy="all_pairs")
    with pytest.raises(ValueError):
        accuracy([1, 2], [1])


def test_dual_objective_formula():
    K = np.array([[2.0, 1.0], [1.0, 2.0]])
    # 1.5 - 0.5 * (a t)^T K (a t) with a t = (1, -0.5)
    assert dual_objective(K, [1, -1], [1.0, 0.5]) == pytest.approx(1.5 - 0.5 * (2 - 1 + 0.5))
