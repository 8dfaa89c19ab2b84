"""The eleven acceptance criteria at their stated trial counts and tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line; the same lines are
repeated in the pytest terminal summary.
"""

import json
import time

import numpy as np
import pytest

from rrtgard import acceptance
from rrtgard.rrt import RrtConfig, rrt_threshold_table


@pytest.fixture(scope="module")
def rr_bound():
    t0 = time.perf_counter()
    run = acceptance.rr_bound_run(trials=1000, seed=0)
    return run, time.perf_counter() - t0


def check(result, record_criterion):
    record_criterion(result)
    assert result.passed, json.dumps(result.details, indent=1, default=str)


def test_criterion_01_rr_bound(rr_bound, record_criterion):
    run, elapsed = rr_bound
    res = acceptance.criterion1(run, elapsed)
    res.seconds = elapsed
    check(res, record_criterion)


def test_criterion_02_kmin_concentration(rr_bound, record_criterion):
    check(acceptance.criterion2(rr_bound[0]), record_criterion)


def test_criterion_03_last_crossing(rr_bound, record_criterion):
    check(acceptance.criterion3(rr_bound[0]), record_criterion)


def test_criterion_04_gamma_asymptotics(record_criterion):
    check(acceptance._timed(acceptance.criterion4), record_criterion)


def test_criterion_05_high_snr(record_criterion):
    check(acceptance._timed(lambda: acceptance.criterion5(0, 1000)), record_criterion)


def test_criterion_06_near_best_alpha(record_criterion):
    check(acceptance._timed(lambda: acceptance.criterion6(0, 100)), record_criterion)


def test_criterion_07_oblivious_superiority(record_criterion):
    check(acceptance._timed(lambda: acceptance.criterion7(0, 100)), record_criterion)


def test_criterion_08_sigma_degradation(record_criterion):
    check(acceptance._timed(lambda: acceptance.criterion8(0, 100)), record_criterion)


def test_criterion_09_real_data(record_criterion):
    check(acceptance._timed(acceptance.criterion9), record_criterion)


def test_criterion_10_numerics(record_criterion):
    check(acceptance._timed(lambda: acceptance.criterion10(0)), record_criterion)


def test_criterion_11_rr_distribution(record_criterion):
    check(acceptance._timed(lambda: acceptance.criterion11(0, 1000)), record_criterion)


# -- supporting checks -------------------------------------------------------------

@pytest.mark.parametrize("name", ["stackloss", "star"])
@pytest.mark.parametrize("alpha", [0.1, 0.2])
def test_real_data_bundled_sets(name, alpha):
    ok, detail = acceptance.real_data_check(name, alpha)
    assert ok, detail


def test_inflated_threshold_is_caught():
    """A threshold 30% too high must break the violation-rate criterion."""
    def inflated(n, p, alpha):
        tab = rrt_threshold_table(n, p, RrtConfig(alpha))
        return type(tab)(tab.n, tab.p, tab.alpha, tab.k_max, np.minimum(1.3 * tab.gamma, 1.0))

    run = acceptance.rr_bound_run(trials=300, seed=1, gamma_fn=inflated)
    res = acceptance.criterion1(run, 0.0)
    assert not res.passed


def test_widening_rule():
    assert acceptance.widened(0.1, 1000, 1000) == 0.1
    assert acceptance.widened(0.1, 100, 1000) > 0.1
    assert acceptance.widened(0.98, 100, 1000, upper=False) < 0.98
