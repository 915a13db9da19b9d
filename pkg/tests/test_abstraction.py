import json
import math

import numpy as np
import pytest

from incabs.abstraction import (
    AbstractionConfig,
    abstraction_error,
    abstraction_to_dict,
    inflate_abstraction,
    inflation_sigma,
    load_abstraction,
    plan_increments,
    run_incremental,
    run_onestep,
    save_abstraction,
)
from incabs.errors import BudgetTooSmall, MemoryBudgetExceeded, MissingConstant
from incabs.funcs import default_domain, instantiate_builtin, parse_function_spec
from incabs.lp import AffinePlanePair
from incabs.mesh import BoxRegion, DomainBox, build_mesh
from incabs.verify import brute_force_separation


def test_plan_increments_examples():
    assert plan_increments(2601, 500, 4, 2).kappa == 6
    assert plan_increments(2601, 50, 4, 2).kappa == 57
    assert plan_increments(2601, 2601, 4, 2).kappa == 1
    assert plan_increments(2601, 10**5, 4, 2).kappa == 1


def test_plan_increments_bounds():
    plan = plan_increments(2601, 50, 4, 2)
    assert plan.bounds == (math.ceil(2551 / 47) + 1, 2552)
    for carried in range(3, 50):
        kappa = plan_increments(2601, 50, carried, 2).kappa
        assert plan.bounds[0] <= kappa <= plan.bounds[1]
    with pytest.raises(BudgetTooSmall):
        plan_increments(2601, 4, 4, 2)
    with pytest.raises(BudgetTooSmall):
        plan_increments(2601, 3, 1, 2)


def test_square_incremental(square):
    spec, mesh = square
    result = run_incremental(mesh, spec, AbstractionConfig(budget=3, start_region=BoxRegion((0,), (1,))))
    assert result.kappa == 2
    assert [e.theta_k for e in result.log] == pytest.approx([0.0, 1.0], abs=1e-9)
    planes = result.raw_planes
    assert planes.h_upper[0] == pytest.approx(1.0) and planes.h_lower[0] == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(planes.A_upper, 0, atol=1e-9) and np.allclose(planes.A_lower, 0, atol=1e-9)
    assert result.sigma == 0.0 and result.planes is planes
    assert result.overall_theta == pytest.approx(1.0)
    assert all(e.peak_active_points <= 3 for e in result.log)


def test_affine_field_has_zero_error():
    spec = parse_function_spec("f0 = 2*x0 - u0 + 1")
    mesh = build_mesh(DomainBox((-1.0, 0.0), (1.0, 2.0), 1, 1), 9)
    for result in (run_onestep(mesh, spec), run_incremental(mesh, spec, AbstractionConfig(budget=20))):
        assert result.final_theta == pytest.approx(0.0, abs=1e-9)
        P = mesh.positions(mesh.full_box.indices())
        assert np.allclose(result.raw_planes.upper(P), spec.evaluate_many(P), atol=1e-8)


def test_onestep_rastrigin_1d_matches_oracle():
    spec = instantiate_builtin("rastrigin", {"d": 1})
    mesh = build_mesh(default_domain("rastrigin", {"d": 1}), 250)
    P = mesh.positions(mesh.full_box.indices())
    oracle = brute_force_separation((P, spec.evaluate_many(P)), P[[0, -1]], allow_large=True)
    assert run_onestep(mesh, spec).final_theta == pytest.approx(oracle, abs=1e-3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_single_increment_is_onestep(d):
    spec = instantiate_builtin("rastrigin", {"d": d})
    mesh = build_mesh(default_domain("rastrigin", {"d": d}), 5)
    one = run_onestep(mesh, spec)
    inc = run_incremental(mesh, spec, AbstractionConfig(budget=mesh.s_max))
    assert inc.kappa == 1
    assert inc.final_theta == one.final_theta
    assert inc.raw_planes.allclose(one.raw_planes)


def test_rastrigin2d_incremental_interval(rastrigin2d):
    spec, mesh = rastrigin2d
    theta_one = run_onestep(mesh, spec).final_theta
    assert theta_one == pytest.approx(80.23, rel=0.01)
    result = run_incremental(mesh, spec, AbstractionConfig(budget=500))
    assert result.kappa == 6
    assert theta_one - 1e-6 <= result.final_theta <= 4 * 112.4
    thetas = [e.theta_k for e in result.log]
    assert thetas == sorted(thetas)
    assert result.overall_theta == max(thetas)


def test_memory_contract_and_cap(rastrigin2d):
    spec, mesh = rastrigin2d
    result = run_incremental(mesh, spec, AbstractionConfig(budget=50, memory_cap=50))
    assert max(e.peak_active_points for e in result.log) <= 50
    assert sum(e.new_points for e in result.log) == mesh.s_max
    with pytest.raises(MemoryBudgetExceeded):
        run_onestep(mesh, spec, memory_cap=1000)


def test_budget_validation():
    spec = instantiate_builtin("rastrigin", {"d": 2})
    mesh = build_mesh(default_domain("rastrigin", {"d": 2}), 11)
    with pytest.raises(BudgetTooSmall):
        run_incremental(mesh, spec, AbstractionConfig(budget=5))
    # box-only growth accepts 2^d + 1 and flags overflowing slabs
    result = run_incremental(mesh, spec, AbstractionConfig(budget=5, partial_slabs=False, start_region=BoxRegion((0, 0), (1, 1))))
    assert any(e.overflow for e in result.log)


@pytest.mark.parametrize("start", ["left_corner", "center"])
def test_heuristics_produce_sound_results(start):
    spec = instantiate_builtin("rastrigin", {"d": 1})
    mesh = build_mesh(default_domain("rastrigin", {"d": 1}), 250)
    cfg = AbstractionConfig(budget=40, start_region=start, warm_start=((mesh.nearest_index([0.5])),))
    result = run_incremental(mesh, spec, cfg)
    P = mesh.positions(mesh.full_box.indices())
    F = spec.evaluate_many(P)
    assert np.all(result.raw_planes.upper(P) >= F - 1e-6)
    assert np.all(result.raw_planes.lower(P) <= F + 1e-6)
    assert all(e.peak_active_points <= 40 for e in result.log)


def test_warm_start_merged_into_first_sample():
    spec = instantiate_builtin("rastrigin", {"d": 1})
    mesh = build_mesh(default_domain("rastrigin", {"d": 1}), 250)
    warm = mesh.nearest_index([0.5])
    result = run_incremental(mesh, spec, AbstractionConfig(budget=40, warm_start=(warm,)))
    first = result.log[0]
    assert first.sample_count == 40 and not first.region.contains(warm)
    x = mesh.positions(np.array([warm]))
    assert first.planes.upper(x)[0, 0] >= spec.evaluate_many(x)[0, 0] - 1e-9


def test_replicated_output_mode():
    spec = instantiate_builtin("rastrigin", {"d": 3})
    mesh = build_mesh(default_domain("rastrigin", {"d": 3}), 5)
    scalar = run_onestep(mesh, spec)
    rep = run_onestep(mesh, spec, output_mode="replicated")
    assert rep.raw_planes.A_upper.shape == (3, 3)
    assert rep.final_theta == pytest.approx(3 * scalar.final_theta)


def test_inflation_cases():
    mesh_half = build_mesh(DomainBox((0.0,), (1.0,), 1), 3)  # cell 0.5
    assert inflation_sigma(mesh_half, "lipschitz", 2.0) == pytest.approx(0.5)
    mesh_unit = build_mesh(DomainBox((0.0,), (2.0,), 1), 3)  # cell 1
    assert inflation_sigma(mesh_unit, "C0", 1.0) == pytest.approx(1.0)
    assert inflation_sigma(mesh_unit, "C1", 3.0) == pytest.approx(1.5)
    assert inflation_sigma(mesh_unit, "C2", 2.0) == pytest.approx(0.25)
    planes = AffinePlanePair.from_weights([[1.0]], [0.0], [[1.0]], [0.0], n=1, theta=0.0)
    same, sigma = inflate_abstraction(planes, mesh_unit, "C2", 0.0)
    assert sigma == 0.0 and same.allclose(planes)
    with pytest.raises(MissingConstant):
        inflate_abstraction(planes, mesh_unit, "lipschitz", None)


def test_abstraction_error():
    same = AffinePlanePair.from_weights([[1.0, 2.0]], [0.0], [[1.0, 2.0]], [0.0], n=2, theta=0.0)
    corners = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert abstraction_error(same, corners) == 0.0
    W = np.ones((3, 2))
    wide = AffinePlanePair.from_weights(W, np.full(3, 0.7), W, np.zeros(3), n=2, theta=0.0)
    assert abstraction_error(wide, corners) == pytest.approx(3 * 0.7)
    square = AffinePlanePair.from_weights([[0.0]], [1.0], [[0.0]], [0.0], n=1, theta=1.0)
    assert abstraction_error(square, np.array([[-1.0], [1.0]])) == 1.0


def test_serialization_round_trip(tmp_path, rastrigin2d):
    spec, mesh = rastrigin2d
    result = run_incremental(mesh, spec.with_smoothness("lipschitz", 150.0), AbstractionConfig(budget=300))
    path = tmp_path / "abs.json"
    save_abstraction(result, path)
    doc = json.loads(path.read_text())
    assert doc["A_upper"]["shape"] == [1, 2] and doc["B_upper"]["shape"] == [1, 0]
    for key in ("n", "m", "domain", "h_upper", "A_lower", "B_lower", "h_lower", "sigma", "kappa", "theta", "per_increment"):
        assert key in doc
    loaded = load_abstraction(path)
    assert abstraction_to_dict(loaded) == abstraction_to_dict(result)
    assert loaded.planes.allclose(result.planes) and loaded.planes.theta == result.planes.theta
    save_abstraction(loaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
