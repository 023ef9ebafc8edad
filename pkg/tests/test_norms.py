import numpy as np
import pytest

from dynamics import TimeGrid, solve_uncontrolled
from errors import InvalidArgumentError
from mesh_fem import build_mesh, build_operators, interpolate, benchmark_coefficients
from norms import build_norm_context, dual_norm, h_norm, norm_history, v_norm, vprime_norm


@pytest.fixture
def ctx32():
    return build_norm_context(build_operators(build_mesh(32), 0.1, benchmark_coefficients()))


class TestSingleNorms:
    @pytest.mark.parametrize("norm", [h_norm, v_norm, vprime_norm])
    def test_zero(self, norm_ctx16, norm):
        assert norm(np.zeros(norm_ctx16.n_nodes), norm_ctx16) == 0.0

    @pytest.mark.parametrize("norm", [h_norm, v_norm, vprime_norm])
    def test_constant_one(self, norm_ctx16, norm):
        assert norm(np.ones(norm_ctx16.n_nodes), norm_ctx16) == pytest.approx(1.0, abs=1e-12)

    def test_h_norm_of_linear_function(self, ctx32):
        mesh = build_mesh(32)
        x1 = interpolate(mesh, lambda x1, x2: x1)
        assert h_norm(x1, ctx32) == pytest.approx(np.sqrt(1 / 3), abs=1e-3)

    def test_v_norm_of_linear_function(self, ctx32):
        mesh = build_mesh(32)
        x1 = interpolate(mesh, lambda x1, x2: x1)
        assert v_norm(x1, ctx32) == pytest.approx(np.sqrt(0.1 + 1 / 3), abs=1e-3)

    def test_length_checked(self, norm_ctx16):
        with pytest.raises(InvalidArgumentError):
            h_norm(np.ones(5), norm_ctx16)


def test_norm_chain_and_riesz_consistency(norm_ctx16, rng):
    ctx = norm_ctx16
    for _ in range(1000):
        y = rng.standard_normal(ctx.n_nodes)
        vprime, h, v = vprime_norm(y, ctx), h_norm(y, ctx), v_norm(y, ctx)
        assert vprime <= h * (1 + 1e-12)
        assert h <= v * (1 + 1e-12)
        assert dual_norm(ctx.a_op @ y, ctx) == pytest.approx(v, rel=1e-10)


def test_norm_history_matches_pointwise(bench_ops4, y0_mesh4):
    ctx = build_norm_context(bench_ops4)
    trajectory = solve_uncontrolled(y0_mesh4, bench_ops4, TimeGrid(0.0, 0.05, 4))
    history = norm_history(trajectory, ctx)

    assert list(history.columns) == ["t", "h_norm", "v_norm", "vprime_norm"]
    assert len(history) == 5
    np.testing.assert_allclose(history["t"], [0.0, 0.05, 0.1, 0.15, 0.2])
    for k, y in enumerate(trajectory.states):
        assert history["h_norm"].iloc[k] == pytest.approx(h_norm(y, ctx), rel=1e-12)
        assert history["v_norm"].iloc[k] == pytest.approx(v_norm(y, ctx), rel=1e-12)
        assert history["vprime_norm"].iloc[k] == pytest.approx(vprime_norm(y, ctx), rel=1e-12)
