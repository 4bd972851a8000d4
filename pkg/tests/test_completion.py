from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemcont.completion import (
    CompletionInstance,
    CompletionProblem,
    build_instance,
    completion_objective,
    impute_neighbor_average,
    instance_from_observations,
    omega_size,
    sample_function_matrix,
    sample_omega,
)
from riemcont.errors import ContractError
from riemcont.fixed_rank import OmegaMask
from riemcont.manifold import (
    check_dgrad_dlambda,
    check_gradient,
    check_hessian,
    check_hessian_symmetry,
)

seeds = st.integers(0, 2**32 - 1)


def bfs_impute(known):
    """Fill cells in BFS layers; each layer averages its neighbours from earlier layers."""
    m, n = known.shape
    dist = np.full((m, n), -1)
    queue = deque()
    for i, j in zip(*np.nonzero(~np.isnan(known))):
        dist[i, j] = 0
        queue.append((i, j))
    while queue:
        i, j = queue.popleft()
        for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= a < m and 0 <= b < n and dist[a, b] < 0:
                dist[a, b] = dist[i, j] + 1
                queue.append((a, b))
    out = known.copy()
    for d in range(1, dist.max() + 1):
        for i, j in zip(*np.nonzero(dist == d)):
            nb = [out[a, b] for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1))
                  if 0 <= a < m and 0 <= b < n and dist[a, b] == d - 1]
            out[i, j] = np.mean(nb)
    return out


@pytest.fixture(scope="module")
def small():
    return CompletionProblem(build_instance(m=30, n=25, k=3, oversampling=3.0, sigma=0.1, seed=1))


def test_function_matrix_entries():
    a = sample_function_matrix(3, 5, 0.5)
    x = np.array([-1.0, 0.0, 1.0])
    y = np.linspace(-1.0, 1.0, 5)
    np.testing.assert_allclose(a, np.exp(-((x[:, None] - y) ** 2) / 0.5), rtol=1e-15)
    with pytest.raises(ContractError):
        sample_function_matrix(3, 3, 0.0)


def test_function_matrix_is_numerically_low_rank():
    s = np.linalg.svd(sample_function_matrix(300, 300, 0.1), compute_uv=False)
    assert s[15] / s[0] < 1e-4


@pytest.mark.parametrize("m, n, k, os_, count", [(300, 300, 15, 3.0, 26325), (150, 150, 10, 3.0, 8700), (10, 8, 2, 1.0, 32)])
def test_omega_size(m, n, k, os_, count):
    assert omega_size(m, n, k, os_) == count
    assert len(sample_omega(m, n, k, os_, 0)) == count


def test_omega_sampling_is_unique_sorted_and_seeded():
    a = sample_omega(40, 30, 4, 2.0, 7)
    assert len(np.unique(a.linear())) == len(a)
    assert np.all(np.diff(a.linear()) > 0)
    assert np.array_equal(a.linear(), sample_omega(40, 30, 4, 2.0, 7).linear())
    assert not np.array_equal(a.linear(), sample_omega(40, 30, 4, 2.0, 8).linear())
    with pytest.raises(ContractError):
        sample_omega(4, 4, 2, 10.0, 0)


@settings(max_examples=30)
@given(seeds, st.integers(1, 30))
def test_imputation_matches_bfs_layers(seed, count):
    rng = np.random.default_rng(seed)
    m, n = 7, 6
    lin = np.sort(rng.choice(m * n, size=count, replace=False))
    om = OmegaMask(lin // n, lin % n, (m, n))
    vals = rng.standard_normal(count)
    known = np.full((m, n), np.nan)
    known[om.rows, om.cols] = vals
    out = impute_neighbor_average(om, vals, m, n)
    np.testing.assert_allclose(out, bfs_impute(known), rtol=1e-14, atol=1e-15)
    assert np.array_equal(out[om.rows, om.cols], vals)


def test_imputation_constant_stays_constant():
    om = OmegaMask([0, 5], [0, 3], (6, 4))
    np.testing.assert_array_equal(impute_neighbor_average(om, [2.5, 2.5], 6, 4), np.full((6, 4), 2.5))


def test_start_point_is_exactly_critical(small):
    x0 = small.start_point()
    r, _ = small.residual(x0, 0.0)
    assert np.all(r == 0.0)
    assert small.manifold.norm(x0, small.gradient(x0, 0.0)) <= 1e-12


def test_value_at_one_is_target_objective(small):
    x = small.manifold.random_point(np.random.default_rng(2))
    inst = small.instance
    assert small.value(x, 1.0) == pytest.approx(completion_objective(x, inst.omega, inst.observed), rel=1e-13)


@settings(max_examples=20)
@given(seeds, st.floats(0.0, 1.0))
def test_derivatives_match_finite_differences(small, seed, lam):
    rng = np.random.default_rng(seed)
    M = small.manifold
    x = M.retract(small.start_point(), 0.5 * M.random_tangent(small.start_point(), rng))
    xi, eta = M.random_tangent(x, rng), M.random_tangent(x, rng)
    assert check_gradient(small, x, lam, xi).rel_err <= 1e-5
    assert check_hessian(small, x, lam, xi).rel_err <= 1e-4
    assert check_dgrad_dlambda(small, x, lam).rel_err <= 1e-5
    assert check_hessian_symmetry(small, x, lam, xi, eta) <= 1e-8


def test_hessian_matches_dense_oracle():
    """Full observation: f = 1/2 ||X - B||^2 and the Hessian has a closed form."""
    rng = np.random.default_rng(3)
    m, n, k = 6, 5, 2
    rows, cols = np.divmod(np.arange(m * n), n)
    om = OmegaMask(rows, cols, (m, n))
    data = rng.standard_normal((m, n))
    p = CompletionProblem(instance_from_observations(om, om.gather(data), k))
    M = p.manifold
    x = M.random_point(rng)
    xi = M.random_tangent(x, rng)
    B = om.dense(p.instance.curve_values(0.7))
    R = x.dense() - B
    # P_X(xi) + (I - UU') R Vp S^-1 V' + U S^-1 Up' R (I - VV')
    ref = M.embed_tangent(xi)
    ref = ref + (np.eye(m) - x.U @ x.U.T) @ R @ xi.Vp @ np.diag(1 / x.s) @ x.V.T
    ref = ref + x.U @ np.diag(1 / x.s) @ xi.Up.T @ R @ (np.eye(n) - x.V @ x.V.T)
    got = M.embed_tangent(p.hessian_apply(x, 0.7, xi))
    assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)


def test_dgrad_is_lambda_independent(small):
    x = small.start_point()
    a = small.manifold.embed_tangent(small.dgrad_dlambda(x, 0.1))
    b = small.manifold.embed_tangent(small.dgrad_dlambda(x, 0.9))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_save_load_round_trip(tmp_path, suffix):
    inst = build_instance(m=20, n=15, k=2, seed=4)
    path = tmp_path / f"c{suffix}"
    inst.save(path)
    back = CompletionInstance.load(path)
    assert np.array_equal(back.omega.linear(), inst.omega.linear())
    assert np.array_equal(back.observed, inst.observed)
    assert np.array_equal(back.start.dense(), inst.start.dense())
    assert (back.k, back.seed) == (inst.k, inst.seed)


def test_load_rejects_wrong_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "riemcont-completion", "version": 9}')
    with pytest.raises(ContractError):
        CompletionInstance.load(path)
