import itertools
from math import prod

import numpy as np
import pytest

import tclkit
from tclkit.analysis import (
    BaselineError,
    CostReport,
    cost_report,
    fc_flops,
    fc_param_count,
    measured_tcl_flops,
    preset_cost_report,
    reproduce_table,
    space_savings,
    tcl_flops,
    tcl_flops_best_order,
    tcl_param_count,
)

from oracles import naive_mac_count


# ------------------------------------------------------------- param counts

def test_tcl_param_count_headline_values():
    assert tcl_param_count((256, 7, 7), (128, 5, 5)) == 32_838
    assert tcl_param_count((256, 7, 7), (256, 7, 7)) == 65_634


def test_tcl_param_count_single_mode():
    assert tcl_param_count((7,), (7,)) == 49


def test_tcl_param_count_errors():
    with pytest.raises(ValueError):
        tcl_param_count((2, 3), (2,))
    with pytest.raises(ValueError):
        tcl_param_count((2, 0), (2, 2))


def test_fc_param_count_headline_values():
    assert fc_param_count((256, 7, 7), 4096) == 51_380_224
    alexnet_block = (fc_param_count((9216,), 4096, with_bias=True)
                     + fc_param_count((4096,), 4096, with_bias=True))
    assert alexnet_block == 54_534_144
    vgg_block = (fc_param_count((25088,), 4096, with_bias=True)
                 + fc_param_count((4096,), 4096, with_bias=True))
    assert vgg_block == 119_545_856


# -------------------------------------------------------------------- flops

def test_tcl_flops_size_preserving_2x3():
    # sum_k D_k * prod(D) = (2 + 3) * 6
    assert tcl_flops((2, 3), (2, 3)) == 30


def test_tcl_flops_single_mode():
    assert tcl_flops((4,), (2,)) == 8


def test_tcl_flops_888_to_222():
    assert tcl_flops((8, 8, 8), (2, 2, 2)) == 2 * 8 * 64 + 2 * 8 * 2 * 8 + 2 * 8 * 4
    assert measured_tcl_flops((8, 8, 8), (2, 2, 2)) == tcl_flops((8, 8, 8), (2, 2, 2))


def test_tcl_flops_matches_closed_form_sum():
    # sum_k prod_{i<=k} R_i * prod_{j>=k} D_j
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        dims = tuple(int(d) for d in rng.integers(1, 9, n))
        ranks = tuple(int(r) for r in rng.integers(1, 9, n))
        closed = sum(prod(ranks[:k + 1]) * prod(dims[k:]) for k in range(n))
        assert tcl_flops(dims, ranks) == closed


def test_tcl_flops_invalid_order():
    with pytest.raises(ValueError):
        tcl_flops((2, 3), (2, 3), order=(1, 1))
    with pytest.raises(ValueError):
        tcl_flops((2, 3), (2, 3), order=(0, 1))


def test_measured_equals_formula_sweep():
    # formula == instrumented execution, exactly, orders 1..4 dims <= 8
    rng = np.random.default_rng(1)
    cases = 0
    for n in range(1, 5):
        for _ in range(40):
            dims = tuple(int(d) for d in rng.integers(1, 9, n))
            ranks = tuple(int(r) for r in rng.integers(1, 9, n))
            order = tuple(rng.permutation(n) + 1)
            assert tcl_flops(dims, ranks, order) == measured_tcl_flops(
                dims, ranks, order)
            cases += 1
    for dims in itertools.product((1, 4, 8), repeat=2):
        for ranks in itertools.product((1, 4, 8), repeat=2):
            assert tcl_flops(dims, ranks) == measured_tcl_flops(dims, ranks)
            cases += 1
    assert cases >= 200


def test_measured_matches_literal_counter_on_tiny_shapes():
    for dims, ranks in [((2,), (3,)), ((2, 3), (3, 2)), ((2, 2, 3), (1, 2, 2))]:
        for order in itertools.permutations(range(1, len(dims) + 1)):
            expected = naive_mac_count(dims, ranks, order)
            assert measured_tcl_flops(dims, ranks, order) == expected
            assert tcl_flops(dims, ranks, order) == expected


def test_best_order_never_beats_nothing():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        dims = tuple(int(d) for d in rng.integers(1, 9, n))
        ranks = tuple(int(r) for r in rng.integers(1, 9, n))
        order, best = tcl_flops_best_order(dims, ranks)
        assert best <= tcl_flops(dims, ranks)
        assert tcl_flops(dims, ranks, order) == best


def test_size_preserving_tcl_cheaper_than_fc():
    # product versus sum: holds whenever prod(D) > sum(D)
    for dims in [(2, 3), (256, 3, 3), (512, 3, 3), (4, 4, 4)]:
        if prod(dims) > sum(dims):
            assert tcl_flops(dims, dims) < fc_flops(dims, prod(dims))


def test_fc_flops_values():
    assert fc_flops((2, 3), 6) == 36 == prod((2, 3)) ** 2
    assert fc_flops((2, 3), 1) == 6
    assert fc_flops((256, 7, 7), 4096) == 51_380_224


# ------------------------------------------------------------ space savings

def test_space_savings_identity_is_zero():
    rep = preset_cost_report("alexnet-cifar-baseline")
    assert rep.space_savings == 0.0


def test_space_savings_sub1_decomposition():
    base = preset_cost_report("alexnet-cifar-baseline")
    rep = preset_cost_report("alexnet-cifar-sub1-256")
    assert base.fc_block_params == 26_624_000
    assert rep.fc_block_params == 65_554 + 2304 * 4096 + 4096 * 100 == 9_912_338
    assert abs(100.0 * rep.space_savings - 62.77) < 0.005


def test_space_savings_sub2():
    rep = preset_cost_report("alexnet-cifar-sub2-256")
    assert rep.fc_block_params == 65_554 * 2 + 2304 * 100
    assert abs(100.0 * rep.space_savings - 98.64) < 0.005


def test_space_savings_can_be_negative():
    rep = preset_cost_report("alexnet-cifar-added-256")
    assert rep.space_savings < 0.0


def test_space_savings_zero_baseline_rejected():
    empty = CostReport("none", [], 0, 0)
    with pytest.raises(BaselineError):
        space_savings(empty, empty)


# -------------------------------------------------------------- cost report

def test_cost_report_totals_consistent():
    rep = preset_cost_report("vgg-cifar-sub1-512")
    assert rep.total_params == sum(lc.params for lc in rep.per_layer)
    assert rep.baseline == "vgg-cifar-baseline"
    tcl_costs = [lc for lc in rep.per_layer if lc.name.startswith("tcl")]
    assert len(tcl_costs) == 1
    assert tcl_costs[0].params == 512 * 512 + 9 + 9
    assert tcl_costs[0].flops == tcl_flops((512, 3, 3), (512, 3, 3))


def test_cost_report_fc_block_excludes_conv_and_biases():
    rep = preset_cost_report("alexnet-cifar-baseline")
    hand = 2304 * 4096 + 4096 * 4096 + 4096 * 100
    assert rep.fc_block_params == hand
    assert rep.total_params > hand  # conv stack, biases, batch norms


# -------------------------------------------------------------- tables

TABLE1_REFERENCE = [0.0, -0.25, 43.28, 74.49, 62.77, 78.72, 90.25, 98.64, 99.22]
TABLE2_REFERENCE = [0.0, -0.73, 42.99, 74.35, 45.8, 69.16, 85.98, 97.27, 98.43]


def test_reproduce_table1_all_rows():
    rows = reproduce_table(1)
    assert [r.reference for r in rows] == TABLE1_REFERENCE
    assert all(r.delta <= 0.005 for r in rows)


def test_reproduce_table2_all_rows():
    rows = reproduce_table(2)
    assert [r.reference for r in rows] == TABLE2_REFERENCE
    assert all(r.delta <= 0.005 for r in rows)


def test_reproduce_table3_dual_reading():
    rows = reproduce_table(3)
    assert len(rows) == 8
    readings = {r.activation for r in rows}
    assert readings == {"(256,5,5)", "(256,6,6)"}
    added66 = next(r for r in rows if r.activation == "(256,6,6)"
                   and "size-preserving" in r.label and "Added" in r.label)
    sub55 = next(r for r in rows if r.activation == "(256,5,5)"
                 and "substitution" in r.label)
    assert added66.delta <= 0.01
    assert sub55.delta <= 0.01
    # and the conflicting combinations visibly disagree
    sub66 = next(r for r in rows if r.activation == "(256,6,6)"
                 and "substitution" in r.label)
    assert sub66.delta > 1.0


def test_reproduce_table_bad_id():
    with pytest.raises(ValueError):
        reproduce_table(4)


def test_preset_unknown_name():
    with pytest.raises(tclkit.ConfigError):
        tclkit.get_preset("alexnet-cifar-sub9-7")
