import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riemcont.errors import ContractError, DistanceUnavailable
from riemcont.fixed_rank import FixedRankManifold
from riemcont.manifold import (
    Euclidean,
    QuadraticProblem,
    check_dgrad_dlambda,
    check_gradient,
    check_hessian,
    check_hessian_symmetry,
    check_in_tangent_space,
    loglog_fit,
    relative_error,
)
from riemcont.spd import SpdManifold

from conftest import random_spd

seeds = st.integers(0, 2**32 - 1)


def spd_case(rng):
    man = SpdManifold(3)
    return man, man.point(random_spd(rng, 3, 20.0))


def fr_case(rng):
    man = FixedRankManifold(9, 7, 3)
    return man, man.random_point(rng)


CASES = [spd_case, fr_case]


@pytest.mark.parametrize("case", CASES)
@given(seed=seeds)
def test_inner_is_symmetric_and_definite(case, seed):
    rng = np.random.default_rng(seed)
    man, x = case(rng)
    xi, eta = man.random_tangent(x, rng), man.random_tangent(x, rng)
    assert man.inner(x, xi, eta) == pytest.approx(man.inner(x, eta, xi), rel=1e-12, abs=1e-14)
    assert man.inner(x, xi, xi) > 0
    assert man.norm(x, man.zero(x)) == 0.0


@pytest.mark.parametrize("case", CASES)
def test_retract_zero_is_identity(case, rng):
    man, x = case(rng)
    y = man.retract(x, man.zero(x))
    assert np.linalg.norm(man.embed(y) - man.embed(x)) <= 1e-12 * np.linalg.norm(man.embed(x))


@pytest.mark.parametrize("case", CASES)
def test_retraction_local_rigidity(case, rng):
    man, x = case(rng)
    xi = man.random_tangent(x, rng)
    ts = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    errs = [np.linalg.norm(man.embed(man.retract(x, t * xi)) - man.embed(x) - t * man.embed_tangent(xi)) for t in ts]
    slope, _ = loglog_fit(ts, errs)
    assert slope >= 1.9


@pytest.mark.parametrize("case", CASES)
def test_transport_identity_and_tangency(case, rng):
    man, x = case(rng)
    xi = man.random_tangent(x, rng)
    same = man.transport(x, x, xi)
    assert np.allclose(man.embed_tangent(same), man.embed_tangent(xi), rtol=0, atol=1e-14)
    y = man.retract(x, 0.3 * man.random_tangent(x, rng))
    assert check_in_tangent_space(man, y, man.transport(x, y, xi))


@pytest.mark.parametrize("case", CASES)
def test_projection_idempotent_and_self_adjoint(case, rng):
    man, x = case(rng)
    shape = man.embed(x).shape
    z, w = rng.standard_normal(shape), rng.standard_normal(shape)
    pz = man.embed_tangent(man.project_tangent(x, z))
    ppz = man.embed_tangent(man.project_tangent(x, pz))
    assert np.linalg.norm(ppz - pz) <= 1e-12 * np.linalg.norm(pz)
    pw = man.embed_tangent(man.project_tangent(x, w))
    assert np.sum(pz * w) == pytest.approx(np.sum(z * pw), rel=1e-12)


def test_fixed_rank_has_no_distance(rng):
    man, x = fr_case(rng)
    with pytest.raises(DistanceUnavailable):
        man.distance(x, x)


def test_quadratic_problem_derivatives(rng):
    a = random_spd(rng, 5, 10.0)
    p = QuadraticProblem(a, rng.standard_normal(5), rng.standard_normal(5))
    x = p.manifold.point(rng.standard_normal(5))
    xi = p.manifold.random_tangent(x, rng)
    assert check_gradient(p, x, 0.3, xi).rel_err <= 1e-8
    assert check_hessian(p, x, 0.3, xi).rel_err <= 1e-8
    assert check_dgrad_dlambda(p, x, 0.3).rel_err <= 1e-8
    assert check_hessian_symmetry(p, x, 0.3, xi, p.manifold.random_tangent(x, rng)) <= 1e-12
    assert p.grad_norm(p.solution(0.3), 0.3) <= 1e-10


def test_tangent_base_mismatch_is_an_error():
    e = Euclidean(2)
    x, y = e.point([0.0, 0.0]), e.point([1.0, 0.0])
    with pytest.raises(ContractError):
        e.tangent(x, [1.0, 0.0]) + e.tangent(y, [1.0, 0.0])
    with pytest.raises(ContractError):
        e.retract(x, e.tangent(y, [1.0, 0.0]))


def test_relative_error_and_fit():
    assert relative_error([1.0, 1.0], [1.0, 1.0]) == 0.0
    hs = np.array([0.1, 0.01, 0.001])
    slope, r2 = loglog_fit(hs, 3.0 * hs**2)
    assert slope == pytest.approx(2.0, abs=1e-12) and r2 == pytest.approx(1.0)
