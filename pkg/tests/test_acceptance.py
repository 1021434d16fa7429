"""The acceptance battery as pytest cases: one test per criterion, each
printing its pass/fail line, tolerances pinned to the stated values."""

import numpy as np
import pytest

from qproxim import acceptance
from qproxim import crossedprod as cp


def _report(result, budget=None):
    verdict = "PASS" if result["passed"] else "FAIL"
    line = f"[acceptance] {verdict} {result['name']} ({result['seconds']}s)"
    print(line)
    if budget is not None:
        assert result["seconds"] < budget, \
            f"{result['name']} exceeded its runtime budget {budget}s"
    assert result["passed"], result["details"]


@pytest.fixture(scope="module")
def zoo():
    return acceptance.build_tunnel_zoo()


@pytest.fixture(scope="module")
def crossed_artifacts():
    consts = cp.constants(1.0, 1)
    tp = cp.build_tunnel_p(1.0, 1, consts=consts)
    chain = cp.verify_chain(1.0, 1, tunnel=tp)
    cert = cp.extent_certified(1.0, 1, tunnel=tp, chain=chain)
    return consts, tp, chain, cert


def test_criterion_1_oracle_equivalence():
    # 25 spaces x 10 pairs, bracket width <= 1e-4, contains LP value; < 60 s
    _report(acceptance.crit1_oracle_equivalence(), budget=60)


def test_criterion_2_metric_recovery():
    # mk(delta_x, delta_y) = d(x, y) +- 1e-6 on all pairs
    _report(acceptance.crit2_metric_recovery())


def test_criterion_3_line_characters():
    # mk_{Lip_Z} = |p-q| +- 1e-6 on W = 40; tents at 1e-12
    _report(acceptance.crit3_line_characters())


def test_criterion_4_key_lemma(zoo, crossed_artifacts):
    consts, tp, chain, cert = crossed_artifacts
    _report(acceptance.crit4_key_lemma(zoo, [(tp, cert["total_upper"])]))


def test_criterion_5_composition_bound():
    # >= 10 composed tunnels against exp(eps)[x1(1+x2)^2 + x2(1+x1)^2] + eps
    _report(acceptance.crit5_composition_bound(), budget=300)


def test_criterion_6_gh_bound():
    # bridge tunnel from the exact-GH correspondence: extent <= 2 GH + 1e-3
    _report(acceptance.crit6_gh_bound())


def test_criterion_7_compact_conversions():
    # (3 eps + eps^2)/(1+eps) and ext (3 + 9r + 4r^2) on 5 instances each way
    _report(acceptance.crit7_compact_conversions())


def test_criterion_8_crossed_product():
    # eps = 1.0, t = 1 passes at p = N7 and N7 + 7 with extent <= 1.0;
    # eps = 0.75 passes or names its first failing chain step; < 30 min
    _report(acceptance.crit8_crossed_product(), budget=1800)


def test_criterion_9_target_sets(zoo, crossed_artifacts):
    consts, tp, chain, cert = crossed_artifacts
    _report(acceptance.crit9_target_sets(zoo, [(tp, cert["total_upper"])]))


def test_criterion_10_seminorm_axioms():
    # 10^3 randomized homogeneity/subadditivity/hermitian/Leibniz checks
    result = acceptance.crit10_seminorm_axioms()
    assert result["details"]["checks"] >= 1000
    _report(result)


def test_criterion_8_details(crossed_artifacts):
    consts, tp, chain, cert = crossed_artifacts
    assert chain["pass"]
    assert cert["pass"]
    assert cert["total_upper"] <= 1.0
    # eps = 0.75: the honest outcome is recorded either way
    res75 = cp.verify_chain(0.75, 1)
    assert res75["pass"] or res75["first_fail"] is not None
