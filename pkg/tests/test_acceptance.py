"""Acceptance gate: every criterion at its stated resolution and tolerance.

Each test runs one criterion through the shared runners (fast=False, i.e.
the stated grids h = 0.01, s_max = 12, stated amplitudes and tolerances)
and prints one pass/fail line per criterion.
"""

from fastdiff_lab import selftest


def _run(runner):
    results = runner(fast=False)
    ok = all(r.passed for r in results)
    crit = results[0].criterion
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {crit} "
          f"({sum(r.passed for r in results)}/{len(results)} checks)")
    for r in results:
        flag = "ok" if r.passed else "FAIL"
        print(f"    [{flag}] {r.detail}: {r.value:.6g} (bound {r.bound})")
    assert ok, [r.detail for r in results if not r.passed]


def test_criterion_1_eigenvalue_reproduction():
    _run(selftest.criterion_1_eigenvalues)


def test_criterion_2_eigenfunction_residuals():
    _run(selftest.criterion_2_residuals)


def test_criterion_3_leading_rate():
    _run(selftest.criterion_3_leading_rate)


def test_criterion_4_sharp_semigroup_bound():
    _run(selftest.criterion_4_semigroup)


def test_criterion_5_second_order_asymptotics():
    _run(selftest.criterion_5_second_order)


def test_criterion_6_manufactured_solution_orders():
    _run(selftest.criterion_6_manufactured)


def test_criterion_7_conservation_and_comparison():
    _run(selftest.criterion_7_conservation)


def test_criterion_8_coefficient_extraction():
    _run(selftest.criterion_8_coefficients)


def test_criterion_9_subcritical_branch():
    _run(selftest.criterion_9_subcritical)


def test_criterion_10_affine_solutions():
    _run(selftest.criterion_10_affine)


def test_criterion_11_energy_proxy():
    _run(selftest.criterion_11_energy)
