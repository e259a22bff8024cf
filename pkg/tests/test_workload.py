from dataclasses import replace

import pytest

from streamflow.dtypes import INT8
from streamflow.errors import InvalidInputError
from streamflow.link import LinkConfig
from streamflow.memory import tech_preset
from streamflow.pipeline import AccessMode, SystemConfig
from streamflow.workload import (CpuBaseline, GemmOp, NonGemmModel, NonGemmOp,
                                 OpClass, TransformerSpec, cpu_end_to_end,
                                 crossover_sweep, decompose, end_to_end,
                                 gemm_flops, gemm_flops_closed_form, model_preset)

from conftest import zero_overhead_config


def gemm_ops(spec, **kw):
    return [op for op in decompose(spec, **kw) if isinstance(op, GemmOp)]


def test_bert_base_decomposition_counts():
    spec = model_preset("bert-base")
    ops = gemm_ops(spec)
    proj_ff_calls = sum(op.count for op in ops
                        if op.op_class in (OpClass.PROJECTION, OpClass.FF1, OpClass.FF2))
    attn_calls = sum(op.count for op in ops if op.op_class is OpClass.MHA)
    assert proj_ff_calls == 12 * 6          # QKV x3 + out + FF1 + FF2 per layer
    assert attn_calls == 12 * 12 * 2        # scores + context per head


def test_vit_sequence_lengths():
    assert model_preset("vit-base").seq_len == 197   # (224/16)^2 + 1
    assert model_preset("vit-huge").seq_len == 257   # (224/14)^2 + 1


def test_single_layer_spec():
    spec = TransformerSpec("tiny", 1, 64, 4, 8)
    multi = TransformerSpec("tiny3", 3, 64, 4, 8)
    assert 3 * len(decompose(spec)) == len(decompose(multi))


def test_invalid_specs_rejected():
    with pytest.raises(InvalidInputError):
        TransformerSpec("bad", 1, 100, 7, 8)   # heads don't divide hidden
    with pytest.raises(InvalidInputError):
        TransformerSpec("bad", 0, 64, 4, 8)
    with pytest.raises(InvalidInputError):
        model_preset("gpt-17")


@pytest.mark.parametrize("name", ["bert-medium", "bert-base", "bert-large",
                                  "vit-base", "vit-large", "vit-huge"])
def test_flop_closed_form_matches_bruteforce(name):
    spec = model_preset(name)
    assert gemm_flops(spec) == gemm_flops_closed_form(spec)


def test_fused_heads_preserves_flops():
    spec = model_preset("bert-base")
    fused = sum(op.flops for op in gemm_ops(spec, fuse_heads=True))
    assert fused == gemm_flops(spec)


def test_class_percentages_sum_to_100():
    spec = TransformerSpec("tiny", 2, 128, 4, 32)
    rep = end_to_end(spec, SystemConfig())
    assert sum(rep.class_percent.values()) == pytest.approx(100.0, abs=0.1)
    assert rep.class_seconds[OpClass.NON_GEMM.value] > 0


def test_zero_ngm_and_control_gives_pure_gemm_classes():
    spec = TransformerSpec("tiny", 1, 128, 4, 32)
    ngm = NonGemmModel(host_ns_per_element={k: 0.0 for k in
                                            ("softmax", "layernorm", "activation", "transpose")})
    cfg = zero_overhead_config()
    rep = end_to_end(spec, cfg, ngm)
    pct = rep.class_percent
    assert pct[OpClass.NON_GEMM.value] == 0.0
    assert pct[OpClass.CONTROL.value] == 0.0
    gemm_share = sum(pct[c.value] for c in (OpClass.FF1, OpClass.FF2,
                                            OpClass.MHA, OpClass.PROJECTION))
    assert gemm_share == pytest.approx(100.0, abs=0.1)


def test_cpu_baseline_ff_dominates():
    rep = cpu_end_to_end(model_preset("vit-base"))
    ff = rep.class_percent[OpClass.FF1.value] + rep.class_percent[OpClass.FF2.value]
    assert 80.0 <= ff <= 95.0  # reference breakdown has ~87.7%


def test_crossover_monotone_and_anchored():
    cfg = replace(SystemConfig(),
                  link=LinkConfig.from_total_gbps(64.0, lanes=4),
                  control_scale=0.3)
    fractions = [0.0, 0.05, 0.15, 0.25, 0.35, 0.45, 0.6]
    curve = crossover_sweep(model_preset("vit-base"), cfg, fractions)
    ratios = [r for _, r in curve]
    assert all(b >= a for a, b in zip(ratios, ratios[1:]))  # nondecreasing
    assert ratios[0] < 1.0  # all-GEMM: DevMem wins
    assert ratios[-1] > 1.0  # non-GEMM heavy: host wins


def test_crossover_degenerate_equality():
    # identical memory techs and a free link: the two placements tie at x = 0
    hbm = tech_preset("HBM2")
    cfg = zero_overhead_config(gbps=1e6)
    cfg = replace(cfg, host_mem=hbm, device_mem=hbm)
    curve = crossover_sweep(TransformerSpec("tiny", 1, 128, 4, 32), cfg, [0.0])
    assert curve[0][1] == pytest.approx(1.0, abs=0.02)


def test_crossover_rejects_bad_fraction():
    with pytest.raises(InvalidInputError):
        crossover_sweep(model_preset("vit-base"), SystemConfig(), [1.0])


def test_devmem_penalty_scales_with_link():
    ngm = NonGemmModel()
    op = NonGemmOp("softmax", 10000)
    slow = replace(SystemConfig(), link=LinkConfig.from_total_gbps(2.0, lanes=4))
    fast = replace(SystemConfig(), link=LinkConfig.from_total_gbps(64.0, lanes=4))
    assert ngm.devmem_penalty_ns(op, slow) > ngm.devmem_penalty_ns(op, fast)


def test_unknown_non_gemm_kind():
    with pytest.raises(InvalidInputError):
        NonGemmModel().host_ns(NonGemmOp("fft", 10))


def test_end_to_end_shape_grouping_consistent():
    # grouped shape cache must not change results vs direct per-op simulation
    spec = TransformerSpec("tiny", 2, 128, 4, 32)
    cfg = SystemConfig()
    rep1 = end_to_end(spec, cfg)
    rep2 = end_to_end(spec, cfg)
    assert rep1.total_seconds == rep2.total_seconds


def test_vit_base_faster_than_vit_large():
    cfg = replace(SystemConfig(), link=LinkConfig.from_total_gbps(8.0, lanes=4))
    small = end_to_end(model_preset("vit-base"), cfg)
    large = end_to_end(model_preset("vit-large"), cfg)
    assert large.total_seconds / small.total_seconds > 3.0
