import itertools
import warnings

import numpy as np
import pytest
from scipy.optimize import nnls as scipy_nnls

from reprocf.factorize import (
    AlsConfig,
    ColdStartWarning,
    FactorModel,
    average_deviations,
    export_factors,
    fit_als,
    load_model,
    nnls_gram,
    predict_binary,
    predict_cell,
    round_binary,
    save_model,
    solve_entity,
    training_objective,
    update_biases,
)
from reprocf.matrix import CellMask, UtilityMatrix
from reprocf.sampling import Method, SamplingSpec, sample_mask
from reprocf.synthgen import SyntheticSpec, generate_synthetic


def _objective(G, r, lam, X):
    # X: (k, f) candidate points
    resid = r[None, :] - X @ G.T
    return (resid**2).sum(axis=1) + lam * (X**2).sum(axis=1)


def grid_oracle(G, r, lam, hi=4.0):
    """Brute-force minimiser over the nonnegative quadrant: coarse grid, then 1e-3 and 1e-4 grids."""
    def best(lo0, hi0, lo1, hi1, step):
        a = np.arange(max(lo0, 0.0), hi0 + step / 2, step)
        b = np.arange(max(lo1, 0.0), hi1 + step / 2, step)
        X = np.stack(np.meshgrid(a, b, indexing="ij"), axis=-1).reshape(-1, 2)
        return X[np.argmin(_objective(G, r, lam, X))]

    x = best(0, hi, 0, hi, 0.01)
    x = best(x[0] - 0.02, x[0] + 0.02, x[1] - 0.02, x[1] + 0.02, 1e-3)
    return best(x[0] - 0.002, x[0] + 0.002, x[1] - 0.002, x[1] + 0.002, 1e-4)


# solve_entity

def test_single_observation_exact_fit():
    x = solve_entity(np.array([[1.0, 0.0]]), np.array([1.0]), 0.0, nonnegative=True)
    assert x == pytest.approx([1.0, 0.0])


def test_single_observation_ridge():
    for nonneg in (True, False):
        x = solve_entity(np.array([[1.0, 0.0]]), np.array([1.0]), 1.0, nonnegative=nonneg)
        assert x == pytest.approx([0.5, 0.0])


def test_singular_unregularised_raises():
    with pytest.raises(np.linalg.LinAlgError, match="regularization parameter > 0"):
        solve_entity(np.array([[1.0, 0.0]]), np.array([1.0]), 0.0, nonnegative=False)


def test_empty_observation_list():
    with pytest.raises(ValueError):
        solve_entity(np.zeros((0, 2)), np.zeros(0), 0.1, nonnegative=True)


def test_constrained_restricted_optimum():
    G = np.array([[1.0, 0.5], [0.5, 1.0], [1.0, 1.0]])
    x_free = np.array([-0.3, 0.7])
    r = G @ x_free
    assert solve_entity(G, r, 0.0, nonnegative=False) == pytest.approx(x_free)
    x = solve_entity(G, r, 0.0, nonnegative=True)
    g1 = G[:, 1]
    assert x[0] == 0.0
    assert x[1] == pytest.approx(g1 @ r / (g1 @ g1))
    clamped = np.clip(x_free, 0, None)
    assert _objective(G, r, 0.0, x[None])[0] <= _objective(G, r, 0.0, clamped[None])[0]
    assert np.abs(x - grid_oracle(G, r, 0.0)).max() <= 1e-3


def test_constrained_matches_grid_oracle():
    rng = np.random.default_rng(11)
    done = 0
    while done < 100:
        m = int(rng.integers(1, 6))
        G = rng.uniform(-1, 1, (m, 2))
        r = rng.uniform(-1, 2, m)
        lam = float(rng.uniform(0.05, 1.0))
        x = solve_entity(G, r, lam, nonnegative=True)
        if x.max() > 3.5:
            continue
        assert np.abs(x - grid_oracle(G, r, lam)).max() <= 1e-3
        done += 1


def test_constrained_matches_scipy_nnls():
    rng = np.random.default_rng(5)
    for _ in range(200):
        f = int(rng.integers(1, 12))
        m = int(rng.integers(1, 30))
        G = rng.normal(size=(m, f))
        r = rng.normal(size=m)
        lam = float(rng.uniform(0.01, 2))
        ref, _ = scipy_nnls(np.vstack([G, np.sqrt(lam) * np.eye(f)]), np.concatenate([r, np.zeros(f)]))
        assert solve_entity(G, r, lam, nonnegative=True) == pytest.approx(ref, abs=1e-8)


def test_unconstrained_matches_normal_equations():
    rng = np.random.default_rng(6)
    for _ in range(200):
        f = int(rng.integers(1, 12))
        m = int(rng.integers(1, 30))
        G = rng.normal(size=(m, f))
        r = rng.normal(size=m)
        lam = float(rng.uniform(0.01, 2))
        # augmented least squares is an independent route to the ridge solution
        ref = np.linalg.lstsq(np.vstack([G, np.sqrt(lam) * np.eye(f)]), np.concatenate([r, np.zeros(f)]), rcond=None)[0]
        assert np.abs(solve_entity(G, r, lam, nonnegative=False) - ref).max() <= 1e-8


def test_nnls_warm_start_does_not_change_result():
    rng = np.random.default_rng(8)
    for _ in range(100):
        f = 6
        A = rng.normal(size=(20, f))
        gram = A.T @ A + 0.1 * np.eye(f)
        rhs = A.T @ rng.normal(size=20)
        cold = nnls_gram(gram, rhs)
        warm = nnls_gram(gram, rhs, rng.random(f) < 0.5)
        assert warm == pytest.approx(cold, abs=1e-10)


# prediction

def _model(Q, P, mu=0.0, bf=None, bs=None, use_bias=False):
    Q, P = np.asarray(Q, float), np.asarray(P, float)
    bf = np.zeros(len(Q)) if bf is None else np.asarray(bf, float)
    bs = np.zeros(len(P)) if bs is None else np.asarray(bs, float)
    return FactorModel(Q, P, mu, bf, bs, AlsConfig(n_factors=Q.shape[1], use_bias=use_bias))


def test_predict_cell_examples():
    assert predict_cell(_model(np.zeros((2, 3)), np.zeros((2, 3))), 0, 1) == 0.0
    m = _model(np.zeros((1, 2)), np.zeros((1, 2)), 0.5, [0.2], [0.1], use_bias=True)
    assert predict_cell(m, 0, 0) == pytest.approx(0.8)
    with pytest.raises(IndexError):
        predict_cell(m, 1, 0)


@pytest.mark.parametrize("raw,expected", [(0.49, 0), (0.5, 1), (1.7, 1), (-0.2, 0), (1.49, 1)])
def test_rounding(raw, expected):
    assert int(round_binary(raw)) == expected


def test_predict_binary_bias_clamp():
    m = _model(np.zeros((1, 1)), np.zeros((1, 1)), 0.0, [-0.2], [0.0], use_bias=True)
    assert predict_binary(m, 0, 0) == 0


# fitting

def test_all_ones_fully_observed():
    m = UtilityMatrix(np.ones((4, 4), dtype=int))
    model = fit_als(m, CellMask.full((4, 4)), AlsConfig(n_factors=2))
    assert (model.predict_binary() == 1).all()


def _unique_rank1_completion(values, observed):
    """Enumerate all binary u v^T agreeing with the observed cells; None unless the completion is unique."""
    n, k = values.shape
    completions = set()
    for u in itertools.product((0, 1), repeat=n):
        u = np.array(u)
        for v in itertools.product((0, 1), repeat=k):
            full = np.outer(u, np.array(v))
            if (full[observed] == values[observed]).all():
                completions.add(full.tobytes())
                if len(completions) > 1:
                    return None
    return np.frombuffer(completions.pop(), dtype=full.dtype).reshape(n, k)


def test_rank1_completion_matches_enumeration():
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 5:
        u = rng.integers(0, 2, 7)
        v = rng.integers(0, 2, 7)
        if u.sum() < 2 or v.sum() < 2:
            continue
        truth = np.outer(u, v)
        observed = rng.random(truth.shape) < 0.9
        oracle = _unique_rank1_completion(truth, observed)
        if oracle is None:
            continue
        model = fit_als(UtilityMatrix(truth), CellMask(observed), AlsConfig(n_factors=2, regularization=1e-3, seed=checked))
        pred = model.predict_binary()
        assert (pred[~observed] == oracle[~observed]).all()
        checked += 1


@pytest.mark.parametrize("n_types", [2, 4, 8, 16, 32, 64])
@pytest.mark.parametrize("nonnegative,extra", [(False, 0), (False, 40), (True, 40)])
def test_exact_low_rank_reconstruction(n_types, nonnegative, extra):
    # block matrices have rank log2(n_types)
    m = generate_synthetic(SyntheticSpec(n_types))
    rank = int(np.log2(n_types))
    assert np.linalg.matrix_rank(m.cells.astype(float)) == rank
    config = AlsConfig(n_factors=rank + extra, regularization=1e-6, nonnegative=nonnegative)
    model = fit_als(m, CellMask.full(m.shape), config)
    assert np.mean((model.predict() - m.cells) ** 2) <= 1e-3


@pytest.mark.parametrize("use_bias,bias_mode", [(False, "fixed"), (True, "fixed"), (True, "learned")])
@pytest.mark.parametrize("weighted", [True, False])
def test_objective_monotone_and_nonnegative(use_bias, bias_mode, weighted):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = UtilityMatrix(rng.integers(0, 2, (15, 12)))
        mask = CellMask(rng.random((15, 12)) < 0.6)
        config = AlsConfig(
            n_factors=4, regularization=0.05, max_iterations=8, seed=seed,
            use_bias=use_bias, bias_mode=bias_mode, weighted_regularization=weighted,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ColdStartWarning)
            model = fit_als(m, mask, config)
        trace = np.array(model.objective_trace)
        assert len(trace) == 9
        assert (np.diff(trace) <= 1e-9 * trace[0]).all(), trace
        assert (model.file_factors >= 0).all() and (model.subject_factors >= 0).all()


def test_unconstrained_mode_allows_negative():
    rng = np.random.default_rng(0)
    m = UtilityMatrix(rng.integers(0, 2, (20, 20)))
    model = fit_als(m, CellMask.full((20, 20)), AlsConfig(n_factors=5, nonnegative=False))
    assert (model.file_factors < 0).any() or (model.subject_factors < 0).any()


def test_synthetic_8_rfnu():
    m = generate_synthetic(SyntheticSpec(8))
    mask = sample_mask(SamplingSpec(Method.RFNU, 0.9, seed=3), m.shape)
    pred = fit_als(m, mask).predict_binary()
    test = ~mask.bits
    assert (pred[test] == m.cells[test]).mean() >= 0.85


def test_empty_training_set():
    with pytest.raises(ValueError, match="empty training set"):
        fit_als(UtilityMatrix(np.ones((3, 3), dtype=int)), CellMask.empty((3, 3)))


def test_cold_start_warning():
    bits = np.zeros((4, 4), dtype=bool)
    bits[:2, :2] = True
    with pytest.warns(ColdStartWarning):
        fit_als(UtilityMatrix(np.ones((4, 4), dtype=int)), CellMask(bits), AlsConfig(n_factors=2))


def test_fit_is_deterministic():
    m = generate_synthetic(SyntheticSpec(4))
    mask = sample_mask(SamplingSpec(Method.RANDOM_SUBJECTS, 0.5, seed=1), m.shape)
    a = fit_als(m, mask, AlsConfig(seed=9))
    b = fit_als(m, mask, AlsConfig(seed=9))
    assert np.array_equal(a.file_factors, b.file_factors)
    assert a.objective_trace == b.objective_trace


# biases

def test_update_biases_all_ones():
    ratings = np.ones((3, 4))
    observed = np.ones((3, 4), dtype=bool)
    sb, fb = update_biases(ratings, observed, np.zeros((3, 4)), 1.0, np.zeros(3), 0.1)
    assert np.allclose(sb, 0) and np.allclose(fb, 0)


@pytest.mark.parametrize("weighted", [False, True])
def test_update_biases_strong_file(weighted):
    ratings = np.zeros((2, 6))
    ratings[0] = 1
    observed = np.ones((2, 6), dtype=bool)
    sb, fb = update_biases(ratings, observed, np.zeros((2, 6)), 0.5, np.zeros(2), 1e-9, weighted)
    assert fb == pytest.approx([0.5, -0.5], abs=1e-6)
    assert sb == pytest.approx(0, abs=1e-6)


def test_update_biases_large_lambda():
    rng = np.random.default_rng(0)
    ratings = rng.integers(0, 2, (5, 5)).astype(float)
    observed = np.ones((5, 5), dtype=bool)
    sb, fb = update_biases(ratings, observed, np.zeros((5, 5)), 0.5, np.zeros(5), 1e9)
    assert np.abs(sb).max() < 1e-8 and np.abs(fb).max() < 1e-8


def test_update_biases_is_coordinate_minimiser():
    # brute force each subject bias over a fine grid with everything else fixed
    rng = np.random.default_rng(4)
    ratings = rng.integers(0, 2, (6, 5)).astype(float)
    observed = rng.random((6, 5)) < 0.7
    observed[0] = True
    inter = rng.random((6, 5)) * 0.3
    fb0 = rng.normal(scale=0.1, size=6)
    lam = 0.3
    sb, _ = update_biases(ratings, observed, inter, 0.4, fb0, lam)
    grid = np.linspace(-1, 1, 20001)
    for u in range(5):
        rows = observed[:, u]
        resid = ratings[rows, u] - 0.4 - fb0[rows] - inter[rows, u]
        cost = ((resid[None, :] - grid[:, None]) ** 2).sum(axis=1) + lam * grid**2
        assert sb[u] == pytest.approx(grid[np.argmin(cost)], abs=1e-4)


def test_average_deviations():
    ratings = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    observed = np.array([[True, True, True], [True, False, True]])
    mu = 3 / 5
    sb, fb = average_deviations(ratings, observed, mu)
    # file 0: (0.4 + 0.4 - 0.6) / 3, file 1: (-0.6 + 0.4) / 2
    assert fb == pytest.approx([0.2 / 3, -0.1])
    # subject 0: ((0.4 - 0.2/3) + (-0.6 + 0.1)) / 2, subject 1: 0.4 - 0.2/3, subject 2: ...
    assert sb == pytest.approx([
        ((0.4 - 0.2 / 3) + (-0.5)) / 2,
        0.4 - 0.2 / 3,
        ((-0.6 - 0.2 / 3) + 0.5) / 2,
    ])


def test_average_deviations_unobserved_is_zero():
    observed = np.array([[True, False], [False, False]])
    sb, fb = average_deviations(np.ones((2, 2)), observed, 0.5)
    assert fb.tolist() == [0.5, 0.0] and sb.tolist() == [0.0, 0.0]


def test_row_constant_matrix_with_bias():
    cells = np.zeros((40, 30), dtype=int)
    cells[::3] = 1
    m = UtilityMatrix(cells)
    mask = sample_mask(SamplingSpec(Method.COMPLETE_COLUMNS, 0.3, seed=0), m.shape)
    model = fit_als(m, mask, AlsConfig(n_factors=10, use_bias=True))
    assert (model.predict_binary() == cells).all()


def test_training_objective_by_hand():
    Q = np.array([[1.0], [0.0]])
    P = np.array([[2.0]])
    ratings = np.array([[1.0], [1.0]])
    observed = np.ones((2, 1), dtype=bool)
    # residuals -1 and 1, penalty 0.5 * (1 + 0 + 4)
    assert training_objective(ratings, observed, Q, P, 0.5) == pytest.approx(4.5)
    # weighted: files have 1 cell each, the subject 2
    assert training_objective(ratings, observed, Q, P, 0.5, weighted=True) == pytest.approx(2 + 0.5 * (1 + 8))


# persistence

def test_export_factors(tmp_path):
    m = generate_synthetic(SyntheticSpec(8))
    model = fit_als(m, CellMask.full(m.shape), AlsConfig(n_factors=3))
    export_factors(model, tmp_path / "s.csv", tmp_path / "f.csv")
    subj = np.loadtxt(tmp_path / "s.csv", delimiter=",")
    files = np.loadtxt(tmp_path / "f.csv", delimiter=",")
    assert subj.shape == (100, 3) and files.shape == (100, 3)


def test_fully_observed_factor_clusters():
    m = generate_synthetic(SyntheticSpec(8))
    model = fit_als(m, CellMask.full(m.shape), AlsConfig(n_factors=3))
    assert len(np.unique(np.round(model.subject_factors, 2), axis=0)) == 8
    assert len(np.unique(np.round(model.file_factors, 2), axis=0)) == 3


@pytest.mark.parametrize("use_bias", [False, True])
def test_model_round_trip(tmp_path, use_bias):
    m = generate_synthetic(SyntheticSpec(4))
    mask = sample_mask(SamplingSpec(Method.RFNU, 0.6, seed=0), m.shape)
    model = fit_als(m, mask, AlsConfig(n_factors=4, use_bias=use_bias, seed=3))
    save_model(model, tmp_path / "model.txt")
    back = load_model(tmp_path / "model.txt")
    assert back.config == model.config
    assert np.array_equal(back.predict(), model.predict())


@pytest.mark.parametrize("kwargs", [dict(n_factors=0), dict(max_iterations=0), dict(regularization=-1), dict(bias_mode="x")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        AlsConfig(**kwargs)
