import dataclasses

import numpy as np
import pytest

from incabs.abstraction import AbstractionConfig, run_incremental, run_onestep
from incabs.errors import OracleScaleExceeded
from incabs.funcs import default_domain, instantiate_builtin, parse_function_spec
from incabs.mesh import BoxRegion, DomainBox, build_mesh
from incabs.verify import (
    brute_force_separation,
    check_continuous_sandwich,
    check_dominance,
    check_grid_sandwich,
    compare_methods,
    format_table,
    table_rows,
)


def test_grid_sandwich_pass_and_injected_fault(rastrigin2d):
    spec, mesh = rastrigin2d
    result = run_onestep(mesh, spec)
    check = check_grid_sandwich(result, mesh, spec)
    assert check.passed and check.worst_violation <= 1e-6
    lowered = dataclasses.replace(result.raw_planes, h_upper=result.raw_planes.h_upper - 1.0)
    bad = dataclasses.replace(result, raw_planes=lowered)
    check = check_grid_sandwich(bad, mesh, spec)
    assert not check.passed and check.worst_violation > 0.5 and check.witness is not None


def test_grid_sandwich_affine_zero():
    spec = parse_function_spec("states: 2\nf0 = x0 - 2*x1")
    mesh = build_mesh(DomainBox.cube(-1, 1, 2), 7)
    check = check_grid_sandwich(run_onestep(mesh, spec), mesh, spec)
    assert check.passed and abs(check.worst_violation) <= 1e-9


def test_grid_sandwich_subset_is_seeded(rastrigin2d):
    spec, mesh = rastrigin2d
    result = run_incremental(mesh, spec, AbstractionConfig(budget=200))
    a = check_grid_sandwich(result, mesh, spec, subset=500, seed=3)
    b = check_grid_sandwich(result, mesh, spec, subset=500, seed=3)
    assert a == b and a.passed and "500 of 2601" in a.detail


def test_dominance(square):
    spec, mesh = square
    result = run_incremental(mesh, spec, AbstractionConfig(budget=3, start_region=BoxRegion((0,), (1,))))
    assert check_dominance(result.log, mesh).passed
    x0 = np.array([[0.0]])
    first, second = result.log
    assert second.planes.upper(x0)[0, 0] == pytest.approx(1.0)
    assert first.planes.upper(x0)[0, 0] == pytest.approx(0.0, abs=1e-9)
    assert second.planes.lower(x0)[0, 0] <= first.planes.lower(x0)[0, 0] + 1e-9
    swapped = [dataclasses.replace(first, planes=second.planes), dataclasses.replace(second, planes=first.planes)]
    assert not check_dominance(swapped, mesh).passed
    assert check_dominance(result.log[:1], mesh).passed


def test_dominance_vertex_shortcut_agrees(rastrigin2d):
    spec, mesh = rastrigin2d
    log = run_incremental(mesh, spec, AbstractionConfig(budget=300)).log
    full = check_dominance(log, mesh)
    fast = check_dominance(log, mesh, vertices_only=True)
    assert full.passed and fast.passed
    assert fast.worst_violation <= full.worst_violation + 1e-12


def test_oracle_examples():
    X = np.array([[-1.0], [0.0], [1.0]])
    assert brute_force_separation((X, X**2), X[[0, 2]]) == pytest.approx(1.0, abs=1e-9)
    assert brute_force_separation((X, 3 * X - 1), X[[0, 2]]) == pytest.approx(0.0, abs=1e-9)
    mesh = build_mesh(default_domain("rastrigin", {"d": 1}), 5)
    P = mesh.positions(mesh.full_box.indices())
    F = instantiate_builtin("rastrigin", {"d": 1}).evaluate_many(P)
    assert F[:, 0] == pytest.approx([27.92, 26.01, 0, 26.01, 27.92], abs=5e-3)
    assert brute_force_separation((P, F), P[[0, -1]]) == pytest.approx(F.max(), abs=1e-9)


def test_oracle_scale_limits(rng):
    P = rng.uniform(size=(201, 1))
    with pytest.raises(OracleScaleExceeded):
        brute_force_separation((P, P), P[:2])
    P3 = rng.uniform(size=(10, 3))
    with pytest.raises(OracleScaleExceeded):
        brute_force_separation((P3, P3[:, :1]), P3[:2])
    assert brute_force_separation((P, P), np.array([[0.0], [1.0]]), allow_large=True) == pytest.approx(0.0, abs=1e-9)


def test_continuous_sandwich_sound_and_fault():
    spec = instantiate_builtin("rastrigin", {"d": 1})
    mesh = build_mesh(default_domain("rastrigin", {"d": 1}), 250)
    sound = run_onestep(mesh, spec.with_smoothness("lipschitz", 71.34))
    check = check_continuous_sandwich(sound, spec, mesh.domain, 20_000, seed=1)
    assert check.passed and not check.advisory
    weak = run_onestep(mesh, spec.with_smoothness("lipschitz", 0.01))
    assert not check_continuous_sandwich(weak, spec, mesh.domain, 20_000, seed=1).passed
    with pytest.raises(ValueError):
        check_continuous_sandwich(sound, spec, mesh.domain, 100)


def test_continuous_sandwich_advisory_for_estimates():
    spec = parse_function_spec("f0 = x0^2").with_smoothness("C2", 2.4, source="estimated")
    mesh = build_mesh(DomainBox((-1.0,), (1.0,), 1), 21)
    check = check_continuous_sandwich(run_onestep(mesh, spec), spec, mesh.domain, 10_000)
    assert check.advisory and check.passed


def test_compare_methods_and_table(rastrigin2d):
    spec, mesh = rastrigin2d
    report = compare_methods(mesh, spec, AbstractionConfig(budget=500))
    cmp = report.method_comparison
    assert report.passed
    assert cmp.theta_incremental >= cmp.theta_onestep - 1e-6 and cmp.kappa == 6
    text = format_table(table_rows(report, {"onestep": 80.23, "incremental": 112.4}))
    assert "onestep" in text and "112.4" in text


def test_compare_methods_cap_gives_na():
    spec = instantiate_builtin("rastrigin", {"d": 4})
    mesh = build_mesh(default_domain("rastrigin", {"d": 4}), 5)
    report = compare_methods(mesh, spec, AbstractionConfig(budget=100, memory_cap=100))
    assert report.method_comparison.theta_onestep is None
    assert report.method_comparison.ratio is None
    assert report.passed
    assert "N/A" in format_table(table_rows(report))


def test_compare_methods_equal_when_single_increment():
    spec = instantiate_builtin("rastrigin", {"d": 3})
    mesh = build_mesh(default_domain("rastrigin", {"d": 3}), 5)
    report = compare_methods(mesh, spec, AbstractionConfig(budget=10**5))
    assert report.method_comparison.theta_incremental == report.method_comparison.theta_onestep
    assert report.method_comparison.ratio == 1.0
