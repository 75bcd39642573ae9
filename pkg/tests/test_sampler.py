import numpy as np
import pytest
from scipy import stats

from roacert.dynamics import make_linear, make_reversed_vdp
from roacert.errors import ProjectionError
from roacert.lyapunov import GramCandidate, LieDerivative, make_poly_dictionary
from roacert.sampler import (
    ChainState,
    PsgldConfig,
    block_stream,
    collect_block_maxima,
    project_to_levelset,
    psgld_step,
    read_blockmax_csv,
    resolve_config,
    run_block,
    sample_uniform_on_levelset,
    write_blockmax_csv,
)

I2 = GramCandidate.quadratic(np.eye(2))
ELLIPSE = GramCandidate.quadratic(np.diag([1.0, 4.0]))


def test_radial_projection():
    np.testing.assert_allclose(project_to_levelset(I2, [2.0, 0.0], 1.0), [1.0, 0.0], atol=1e-12)


def test_projection_fixed_point():
    x = np.array([np.cos(0.3), np.sin(0.3)])
    np.testing.assert_array_equal(project_to_levelset(I2, x, 1.0, tol=1e-9), x)


def test_projection_onto_ellipse():
    y = project_to_levelset(ELLIPSE, [1.0, 1.0], 1.0, tol=1e-12)
    assert abs(ELLIPSE.value(y) - 1.0) <= 1e-10


def test_projection_onto_quartic_level(rng):
    A = rng.standard_normal((5, 5))
    c = GramCandidate(make_poly_dictionary(2, 2), A @ A.T + np.eye(5))
    Y = project_to_levelset(c, rng.standard_normal((50, 2)), 0.7, tol=1e-11)
    assert np.max(np.abs(c.value(Y) - 0.7)) <= 1e-11


def test_projection_of_origin_fails():
    with pytest.raises(ProjectionError):
        project_to_levelset(I2, [0.0, 0.0], 1.0)


def test_uniform_samples_on_sphere(rng):
    X = sample_uniform_on_levelset(I2, 4.0, 1000, rng)
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 2.0, atol=1e-10)


def test_uniform_samples_on_ellipse(rng):
    X = sample_uniform_on_levelset(ELLIPSE, 1.0, 1000, rng)
    np.testing.assert_allclose(ELLIPSE.value(X), 1.0, atol=1e-9)


def test_angles_are_uniform():
    X = sample_uniform_on_levelset(I2, 1.0, 100_000, np.random.default_rng(0))
    counts, _ = np.histogram(np.arctan2(X[:, 1], X[:, 0]), bins=36, range=(-np.pi, np.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_zero_temperature_ascent_finds_the_major_axis():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    cfg = PsgldConfig(eta=0.05, temperature=1e-12)
    state = ChainState(np.array([np.cos(1.0), np.sin(1.0)]), np.random.default_rng(0))
    for _ in range(400):
        state = psgld_step(lie, state, 1.0, cfg)
    assert lie.value(state.position) == pytest.approx(-2.0, abs=1e-8)
    assert abs(state.position[0]) == pytest.approx(1.0, abs=1e-5)


def test_zero_step_zero_temperature_is_a_fixed_point():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    x = np.array([np.cos(1.0), np.sin(1.0)])
    state = ChainState(x.copy(), np.random.default_rng(0))
    for _ in range(5):
        state = psgld_step(lie, state, 1.0, PsgldConfig(eta=0.0, temperature=0.0))
    np.testing.assert_allclose(state.position, x, atol=1e-12)


def test_zero_step_moves_only_by_noise_and_projection():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    # with eta = 0 the proposal is x itself: noise is scaled by sqrt(2 T eta)
    state = ChainState(np.array([0.6, 0.8]), np.random.default_rng(1))
    out = psgld_step(lie, state, 1.0, PsgldConfig(eta=0.0, temperature=1.0))
    np.testing.assert_allclose(out.position, [0.6, 0.8], atol=1e-12)


def test_every_step_stays_on_the_level_set():
    lie = LieDerivative(ELLIPSE, make_reversed_vdp())
    cfg = PsgldConfig(eta=0.01, temperature=1e-2, projection_tol=1e-10)
    state = ChainState(np.array([1.0, 0.0]), np.random.default_rng(2))
    for _ in range(100):
        state = psgld_step(lie, state, 1.0, cfg)
        assert abs(ELLIPSE.value(state.position) - 1.0) <= 1e-10


def test_soft_penalty_mode_ends_on_the_level_set():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    cfg = PsgldConfig(mode="soft_penalty", k_steps=100, block_size=8, n_blocks=5, temperature=1e-3)
    bm = collect_block_maxima(lie, 1.0, cfg)
    assert np.all(bm.values <= -2.0 + 1e-9)


def test_constant_vdot_gives_exact_block_maxima():
    lie = LieDerivative(I2, make_linear(-np.eye(2)))
    bm = collect_block_maxima(lie, 1.0, PsgldConfig(k_steps=50, block_size=16, n_blocks=50))
    assert bm.n_blocks == 50
    np.testing.assert_allclose(bm.values, -2.0, rtol=1e-15)


def test_singleton_block_is_its_chain():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    r = run_block(lie, 1.0, PsgldConfig(k_steps=30, block_size=1, temperature=1e-3), 4)
    assert r.maximum == r.final_values[0]


def test_anisotropic_block_maxima_sit_below_the_oracle():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    T = 1e-3
    bm = collect_block_maxima(lie, 1.0, PsgldConfig(k_steps=300, block_size=32, n_blocks=20, temperature=T))
    assert np.all(bm.values <= -2.0 + 1e-9)
    assert np.all(bm.values > -2.1)
    assert bm.empirical_max <= -2.0 + 5 * np.sqrt(T)


def test_block_order_does_not_matter():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    cfg = resolve_config(lie, 1.0, PsgldConfig(k_steps=40, block_size=8, n_blocks=6, temperature=1e-2))
    bm = collect_block_maxima(lie, 1.0, cfg)
    one_by_one = [run_block(lie, 1.0, cfg, b).maximum for b in reversed(range(6))]
    assert sorted(one_by_one) == sorted(bm.values.tolist())
    assert one_by_one[::-1] == bm.values.tolist()


def test_threads_do_not_change_results():
    lie = LieDerivative(I2, make_linear(np.diag([-1.0, -3.0])))
    cfg = PsgldConfig(k_steps=40, block_size=64, n_blocks=80, temperature=1e-2)
    a = collect_block_maxima(lie, 1.0, cfg)
    b = collect_block_maxima(lie, 1.0, cfg, threads=3)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.empirical_argmax.tobytes() == b.empirical_argmax.tobytes()


def test_violation_is_reported():
    # x' = +x: Vdot = 2|x|^2 > 0 everywhere
    lie = LieDerivative(I2, make_linear(np.eye(2)))
    bm = collect_block_maxima(lie, 1.0, PsgldConfig(k_steps=10, block_size=4, n_blocks=3), stop_on_violation=True)
    assert bm.violation is not None
    assert bm.violation_value >= 0
    assert abs(I2.value(bm.violation) - 1.0) <= 1e-9


def test_streams_are_distinct_and_repeatable():
    a = block_stream(1, 0).standard_normal(4)
    assert np.array_equal(a, block_stream(1, 0).standard_normal(4))
    assert not np.array_equal(a, block_stream(1, 1).standard_normal(4))
    assert not np.array_equal(a, block_stream(1, 0, namespace=1).standard_normal(4))


def test_config_hash_tracks_fields():
    assert PsgldConfig().config_hash() == PsgldConfig().config_hash()
    assert PsgldConfig().config_hash() != PsgldConfig(k_steps=501).config_hash()


def test_bad_config():
    with pytest.raises(ValueError):
        PsgldConfig(mode="annealed")
    with pytest.raises(ValueError):
        PsgldConfig(block_size=0)


def test_blockmax_csv_round_trip(tmp_path):
    v = np.array([-2.0, -1.5, -1.25])
    write_blockmax_csv(tmp_path / "b.csv", v, 1.0, 3, "abc")
    text = (tmp_path / "b.csv").read_text()
    assert text.startswith("# block_max rho=1")
    np.testing.assert_array_equal(read_blockmax_csv(tmp_path / "b.csv"), v)
