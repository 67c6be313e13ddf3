"""Acceptance gate: one test per release criterion.

Each test prints a single [C##] line with its measured values (run with
``pytest tests/test_acceptance.py -v -s`` to see them live).  The heavy
sweeps are shared through module-scoped fixtures, and every simulated slot
everywhere in this module also passes through the engine's always-on
invariant checks.
"""

import os
import time

import numpy as np
import pytest

import mecoffload as m
from mecoffload.cli import V_PRESET_GRID, main
from mecoffload.engine import SweepTemplate, apply_axis
from mecoffload.oracle import GridSpec, certify
from mecoffload.policies import PolicyKind
from mecoffload.solver import server_power_bounds, solve_mobile, solve_server

ALL_POLICIES = (PolicyKind.LODCO, PolicyKind.MOBILE_GD,
                PolicyKind.SERVER_GD, PolicyKind.DYNAMIC_GD)
WORKERS = min(4, os.cpu_count() or 1)
TEN_SEEDS = tuple(range(10))

# Longest charging transient on the v grid is theta/mean-harvest ~ 4250
# slots (v = 1e-3); twice that, rounded up, separates steady state.
STEADY_WARMUP = 10_000


def _template(default_config, params, **replacements):
    base = params
    if replacements:
        import dataclasses
        base = dataclasses.replace(params, **replacements)
    return SweepTemplate(base=base, g0=default_config.g0())


@pytest.fixture(scope="module")
def v_sweep(default_config, params):
    """LODCO over the control-parameter grid: 7 values x 10 seeds x 5e4 slots."""
    started = time.perf_counter()
    cells = m.sweep([PolicyKind.LODCO], _template(default_config, params), "v",
                    V_PRESET_GRID, 50_000, TEN_SEEDS, warmup=STEADY_WARMUP,
                    workers=WORKERS)
    return cells, time.perf_counter() - started


@pytest.fixture(scope="module")
def operating_point_runs(default_config, params):
    """All four policies at the quoted operating point: 10 seeds x 1e5 slots."""
    cells = m.sweep(ALL_POLICIES, _template(default_config, params), "rho",
                    [params.rho], 100_000, TEN_SEEDS, workers=WORKERS)
    by_policy = {}
    for cell in cells:
        by_policy.setdefault(cell.kind, []).append(cell.metrics)
    return by_policy


@pytest.fixture(scope="module")
def rho_sweep(default_config, params):
    """All four policies across arrival probabilities: 4 x 4 x 5 x 5e4."""
    cells = m.sweep(ALL_POLICIES, _template(default_config, params), "rho",
                    [0.2, 0.4, 0.6, 0.8], 50_000, tuple(range(5)), workers=WORKERS)
    table = {}
    for cell in cells:
        table.setdefault((cell.kind, cell.value), []).append(cell.metrics)
    return table


def test_criterion_01_per_slot_optimality_oracle(params):
    # 1e4 random states against 1e5-point grids, within 1e-3 relative.
    report = certify(params, n_states=10_000, seed=20_240_501,
                     spec=GridSpec(100_000, 100_000), threshold=1e-3,
                     workers=WORKERS)
    print(f"\n[C01] per-slot optimality: max|rel gap| {report.max_rel_gap:.2e} "
          f"over {report.n_states} states, {report.elapsed_s:.0f}s "
          f"-> {'PASS' if report.passed else 'FAIL'}")
    assert report.passed, report.summary()
    assert report.n_mode_mismatches == 0
    assert report.elapsed_s < 120.0


def test_criterion_02_battery_confinement(params, operating_point_runs):
    # Every LODCO slot keeps 0 <= B <= theta + eh_max; at least 1e6 slots.
    cap = params.theta + params.eh_max
    metrics = operating_point_runs[PolicyKind.LODCO]
    total = sum(met.slots for met in metrics)
    low = min(met.battery_min for met in metrics)
    high = max(met.battery_max for met in metrics)
    print(f"[C02] battery confinement: {total} slots, B in [{low:.3e}, {high:.6e}] "
          f"vs cap {cap:.6e} -> {'PASS' if 0.0 <= low and high <= cap else 'FAIL'}")
    assert total >= 1_000_000
    assert low >= 0.0
    assert high <= cap  # zero violations; the engine also asserts per slot


def test_criterion_03_energy_causality(params):
    # Fresh traces for all four policies; zero slots may draw beyond the battery.
    checked = 0
    for kind in ALL_POLICIES:
        for seed in (0, 1):
            trace = m.run(kind, params, 20_000, seed=seed)
            assert np.all(trace.energy_used <= trace.b), kind
            checked += trace.t_slots
    print(f"[C03] energy causality: 0 violations over {checked} fresh slots "
          f"(and engine-asserted on every other run) -> PASS")


def test_criterion_04_action_monotonicity(params):
    # Optimal frequency and power are non-decreasing in the battery surplus.
    b_grid = np.linspace(-params.theta, params.eh_max, 200)
    f_star = [solve_mobile(float(b), params).action for b in b_grid]
    f_inversions = sum(1 for a, b in zip(f_star, f_star[1:]) if b - a < -1e-12)
    rng = np.random.default_rng(4)
    p_inversions = 0
    h_checked = 0
    while h_checked < 50:
        h = float(rng.exponential(params.h_mean))
        if h <= 0.0 or server_power_bounds(h, params) is None:
            continue
        h_checked += 1
        p_star = [solve_server(float(b), h, params).action for b in b_grid]
        p_inversions += sum(1 for a, b in zip(p_star, p_star[1:]) if b - a < -1e-12)
    print(f"[C04] monotone actions: {f_inversions} frequency and {p_inversions} power "
          f"inversions beyond 1e-12 over 200-point battery grids ({h_checked} channels) "
          f"-> {'PASS' if f_inversions == p_inversions == 0 else 'FAIL'}")
    assert f_inversions == 0
    assert p_inversions == 0


def test_criterion_05_cost_decreases_with_v(v_sweep):
    # Steady-state mean cost is non-increasing in v (within one seed sigma)
    # and grows linearly in 1/v.
    cells, elapsed = v_sweep
    by_v = {}
    for cell in cells:
        by_v.setdefault(cell.value, []).append(cell.metrics.avg_cost)
    values = sorted(by_v)
    means = np.array([np.mean(by_v[v]) for v in values])
    sigmas = np.array([np.std(by_v[v], ddof=1) for v in values])
    monotone = all(means[i + 1] <= means[i] + sigmas[i + 1]
                   for i in range(len(values) - 1))
    slope = np.polyfit(1.0 / np.array(values), means, 1)[0]
    shown = ", ".join(f"{x:.4e}" for x in means)
    print(f"[C05] cost vs v: means [{shown}] s, 1/v slope {slope:.3e}, {elapsed:.0f}s "
          f"-> {'PASS' if monotone and slope > 0 else 'FAIL'}")
    assert monotone, (means, sigmas)
    assert slope > 0.0
    assert elapsed < 600.0


def test_criterion_06_battery_capacity_linear_in_v(v_sweep):
    # Peak battery level fits an affine function of v with R^2 >= 0.99.
    cells, _ = v_sweep
    by_v = {}
    for cell in cells:
        by_v.setdefault(cell.value, []).append(cell.metrics.battery_max)
    values = np.array(sorted(by_v))
    peaks = np.array([np.mean(by_v[v]) for v in values])
    coeffs = np.polyfit(values, peaks, 1)
    fitted = np.polyval(coeffs, values)
    ss_res = float(np.sum((peaks - fitted) ** 2))
    ss_tot = float(np.sum((peaks - peaks.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    print(f"[C06] battery capacity vs v: slope {coeffs[0]:.3f} J per unit v, "
          f"R^2 {r2:.6f} -> {'PASS' if r2 >= 0.99 else 'FAIL'}")
    assert r2 >= 0.99


def test_criterion_07_quoted_gains(operating_point_runs):
    # Cost reductions against the three baselines near 74.4/51.8/46.3 percent.
    mean_cost = {kind: np.mean([met.avg_cost for met in mets])
                 for kind, mets in operating_point_runs.items()}
    targets = {PolicyKind.MOBILE_GD: 74.4, PolicyKind.SERVER_GD: 51.8,
               PolicyKind.DYNAMIC_GD: 46.3}
    gains = {kind: 100.0 * (1.0 - mean_cost[PolicyKind.LODCO] / mean_cost[kind])
             for kind in targets}
    ok = all(abs(gains[kind] - target) <= 10.0 for kind, target in targets.items())
    summary = ", ".join(f"{kind.value} {gains[kind]:.1f}% (target {target})"
                        for kind, target in targets.items())
    print(f"[C07] quoted gains: {summary} -> {'PASS' if ok else 'FAIL'}")
    for kind, target in targets.items():
        assert abs(gains[kind] - target) <= 10.0, (kind, gains[kind], target)


def test_criterion_08_near_zero_drop_ratio(rho_sweep):
    # The optimizer drops under 2% everywhere; greedy drops grow with rho.
    rhos = (0.2, 0.4, 0.6, 0.8)
    lodco = [np.mean([met.drop_ratio for met in rho_sweep[(PolicyKind.LODCO, r)]])
             for r in rhos]
    greedy_monotone = True
    for kind in (PolicyKind.MOBILE_GD, PolicyKind.SERVER_GD, PolicyKind.DYNAMIC_GD):
        drops = [np.mean([met.drop_ratio for met in rho_sweep[(kind, r)]]) for r in rhos]
        greedy_monotone &= all(b > a for a, b in zip(drops, drops[1:]))
    ok = max(lodco) < 0.02 and greedy_monotone
    print(f"[C08] drop ratios: lodco max {max(lodco):.4f} (<0.02), greedy increasing "
          f"{greedy_monotone} -> {'PASS' if ok else 'FAIL'}")
    assert max(lodco) < 0.02
    assert greedy_monotone


def test_criterion_09_hardware_limit_regime(default_config, params):
    # Deadlines below W/f_max kill local execution: the local-only baseline
    # pays the drop penalty on exactly the requested slots, and the two
    # offloading baselines coincide trace-for-trace.
    for tau_d in (2e-4, 4e-4):
        template = _template(default_config, params)
        p = apply_axis(template, "tau_d", tau_d)
        assert params.w_cycles / params.f_max > tau_d
        for seed in (0, 1, 2):
            tr = m.run(PolicyKind.MOBILE_GD, p, 20_000, seed=seed)
            assert np.array_equal(tr.cost, p.phi * tr.zeta)
            assert m.reduce(tr).drop_ratio == 1.0
            a = m.run(PolicyKind.SERVER_GD, p, 20_000, seed=seed)
            b = m.run(PolicyKind.DYNAMIC_GD, p, 20_000, seed=seed)
            for col in ("mode", "p", "cost", "delay", "energy_used", "b_next"):
                assert np.array_equal(getattr(a, col), getattr(b, col)), col
    print("[C09] hardware-limit regime: local baseline pays phi per request "
          "exactly, offloading baselines coincide bitwise -> PASS")


def test_criterion_10_distance_regime(default_config, params):
    # d = 80 m, steady state, at the lighter arrival rate of the distance
    # experiment (the heavier rate gives a smaller optimizer gain).
    template = _template(default_config, params, rho=0.4)
    cells = m.sweep([PolicyKind.LODCO, PolicyKind.MOBILE_GD, PolicyKind.DYNAMIC_GD],
                    template, "d", [80.0], 50_000, TEN_SEEDS,
                    warmup=5_000, workers=WORKERS)
    mean_cost = {}
    for cell in cells:
        mean_cost.setdefault(cell.kind, []).append(cell.metrics.avg_cost)
    cost = {kind: float(np.mean(v)) for kind, v in mean_cost.items()}
    lodco_gain = 100.0 * (1.0 - cost[PolicyKind.LODCO] / cost[PolicyKind.MOBILE_GD])
    dynamic_gain = 100.0 * (1.0 - cost[PolicyKind.DYNAMIC_GD] / cost[PolicyKind.MOBILE_GD])
    ok = lodco_gain > 40.0 and dynamic_gain < 10.0
    print(f"[C10] distance regime (80 m): lodco gain {lodco_gain:.1f}% (>40), "
          f"dynamic-gd gain {dynamic_gain:.1f}% (<10) -> {'PASS' if ok else 'FAIL'}")
    assert lodco_gain > 40.0, cost
    # Known shortfall: the delay-greedy hybrid retains ~12-14% of its
    # advantage at 80 m in this implementation; see the acceptance notes.
    assert dynamic_gain < 10.0, cost


def test_criterion_11_tightening_cost_vanishes(default_config, params):
    import dataclasses
    nus = []
    for e_min in (2e-5, 2e-6, 2e-7, 2e-8):
        q = dataclasses.replace(params, e_min=e_min, theta=100.0)
        nus.append(m.bound_constants(q).nu)
    decreasing = all(a > b for a, b in zip(nus, nus[1:]))
    ok = decreasing and nus[-1] >= 0.0 and nus[-1] < 1e-12
    print(f"[C11] tightening cost: nu = {['%.3e' % x for x in nus]} "
          f"-> {'PASS' if ok else 'FAIL'}")
    assert decreasing
    assert nus[-1] >= 0.0 and nus[-1] < 1e-12


def test_criterion_12_byte_identical_outputs(tmp_path):
    invocations = (
        ["run", "--policy", "lodco,mobile-gd", "--slots", "600", "--seeds", "0,1",
         "--format", "json", "--trace", "--series"],
        ["sweep", "--axis", "v", "--values", "1e-4,3e-4", "--policy", "lodco",
         "--slots", "400", "--seeds", "0", "--format", "csv"],
    )
    for i, argv in enumerate(invocations):
        out = str(tmp_path / f"det{i}")
        assert main([*argv, "--output", out]) == 0
        snapshot = {name: open(os.path.join(out, name), "rb").read()
                    for name in sorted(os.listdir(out))}
        assert snapshot
        assert main([*argv, "--output", out]) == 0
        for name, blob in snapshot.items():
            assert open(os.path.join(out, name), "rb").read() == blob, name
    print("[C12] determinism: repeated invocations byte-identical -> PASS")
