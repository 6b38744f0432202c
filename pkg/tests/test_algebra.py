import numpy as np
import pytest

from conftest import dataset, scene
from holoflow import algebra
from holoflow.errors import RangeViolation
from holoflow.flowfield import FlowSpec


@pytest.fixture(scope="module")
def annulus():
    sc, ds = scene("annulus"), dataset("annulus")
    grid = algebra.build_sample_grid(ds, sc.domain, sc.flow, n=24)
    A = algebra.build_v_invariant_space(ds, grid)
    B = algebra.build_f_pullback_space(sc.flow, grid)
    return sc, ds, grid, A, B


class TestSpaces:
    def test_orthonormal_basis_drops_dependent_columns(self):
        Q = algebra.orthonormal_basis(np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]))
        assert Q.shape == (3, 1) and np.allclose(Q.T @ Q, 1.0)

    def test_grid_size(self, annulus):
        _, _, grid, _, _ = annulus
        assert grid.n_interior == 364 and grid.f_range == pytest.approx((-2.0, 2.0))

    def test_dimensions(self, annulus):
        _, _, _, A, B = annulus
        assert (len(A), A.dim) == (51, 36)
        assert (len(B), B.dim) == (13, 13)

    def test_generators_are_constant_on_fibers(self, annulus):
        _, _, grid, A, _ = annulus
        err, _, _ = algebra.fiber_constancy_error(A, grid)
        assert err < algebra.FIBER_TOL

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            algebra.FunctionSpace("Other", [], np.ones((1, 3)), np.ones((1, 2)))


class TestIntersection:
    def test_annulus_constants_only(self, annulus):
        _, _, _, A, B = annulus
        r = algebra.intersection_dimension(A, B)
        assert r.dim == 1 and r.cosines[0] == pytest.approx(1.0)
        assert r.spectral_gap == pytest.approx(0.17816812266917792, rel=1e-6)

    def test_polynomials_share_f_pullbacks(self, annulus):
        # f = y, so polynomials in x, y of degree 6 contain the seven powers of f
        _, _, grid, _, B = annulus
        P = algebra.build_polynomial_space(grid, 6)
        assert P.dim == 28 and algebra.intersection_dimension(P, B).dim == 7


class TestTensorFit:
    def test_product_is_recovered_at_its_rank(self, annulus):
        _, _, grid, A, B = annulus
        assert algebra.tensor_approximation("y", A, B, 1, grid).residual < 1e-12
        assert algebra.tensor_approximation("x*y", A, B, 2, grid).residual < 1e-12

    def test_rank_sweep_decreases(self, annulus):
        _, _, grid, A, B = annulus
        res = [f.residual for f in algebra.rank_sweep("sin(x + 2*y)", A, B, grid)]
        assert all(b < a for a, b in zip(res, res[1:])) and res[-1] < 1e-6

    def test_values_and_callables_agree(self, annulus):
        _, _, grid, A, B = annulus
        p = grid.interior_points
        a = algebra.tensor_approximation(np.cos(p[:, 0]) * p[:, 1], A, B, 2)
        b = algebra.tensor_approximation(lambda x, y: np.cos(x) * y, A, B, 2, grid)
        assert a.residual == pytest.approx(b.residual, abs=1e-12)


class TestHf:
    def test_annulus_passes(self, annulus):
        sc = annulus[0]
        rep = algebra.check_hf_boundary(sc.flow, sc.domain)
        assert rep.status == "pass" and rep.boundary_range == pytest.approx((-2.0, 2.0)) and rep.worst_margin <= 0

    def test_disconnected_range_not_applicable(self):
        sc = scene("radial_annulus")
        assert algebra.check_hf_boundary(sc.flow, sc.domain).status == "NotApplicable"

    def test_interior_bump_is_caught(self, annulus):
        sc = annulus[0]
        with pytest.raises(RangeViolation):
            algebra.check_hf_boundary(FlowSpec("0", "1", "y + 3*exp(-(x^2+(y-1.5)^2)*8)"), sc.domain)


class TestProbe:
    def test_constant_is_invariant(self, annulus):
        sc, ds, _, _, _ = annulus
        rep = algebra.conjecture_probe(ds, sc.domain, sc.flow, "1")
        assert rep.in_M_Cv and rep.fiber_error == 0.0 and rep.extension_smoothness_score == 0.0

    def test_f_is_not_invariant(self, annulus):
        sc, ds, _, _, _ = annulus
        rep = algebra.conjecture_probe(ds, sc.domain, sc.flow, "y")
        assert not rep.in_M_Cv
        assert rep.fiber_error == pytest.approx(2 * np.sqrt(3), rel=1e-6)
        assert [j.lie_trace for j in rep.lie_jets] == pytest.approx([1.0] * 4, abs=1e-6)

    def test_random_invariant_function(self, annulus):
        sc, ds, grid, A, _ = annulus
        psi, rec = algebra.random_invariant_function(grid, A, seed=3)
        rep = algebra.conjecture_probe(ds, sc.domain, sc.flow, psi, name="r3")
        assert rep.in_M_Cv and rec["generators"] == ["e0.T3", "e0.T7", "e0.T11", "e3.T1"]
        assert all(j.consistent for j in rep.lie_jets)

    def test_separation(self, annulus):
        _, _, grid, A, B = annulus
        frac, _ = algebra.separation_check(grid, [A, B], pairs=300)
        assert frac == 1.0
