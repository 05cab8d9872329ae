import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from autostat import kernels as kl
from autostat.kernels import (Base, ChangePoint, ChangeWindow, Kind, KernelSyntaxError, Mask,
                              MaskKind, parse_kernel, to_normal_form)
from autostat.numerics import covariance

from _kernels import random_expr

seeds = st.integers(0, 2**32 - 1)


class TestParsing:
    def test_base_kernel(self):
        e = parse_kernel("SE(2, 0.5)")
        assert e == Base(Kind.SE, (2.0, 0.5))

    def test_commutative_operands_are_canonical(self):
        assert parse_kernel("SE(1,1) + WN(1)") == parse_kernel("WN(1) + SE(1,1)")
        assert parse_kernel("LIN(1,0) * PER(1,1,1)") == parse_kernel("PER(1,1,1) * LIN(1,0)")

    def test_nested_sums_flatten(self):
        e = parse_kernel("WN(1) + (SE(1,1) + C(2))")
        assert isinstance(e, kl.Sum) and len(e.children) == 3

    def test_precedence(self):
        e = parse_kernel("WN(1) + SE(1,1) * LIN(1,0)")
        assert isinstance(e, kl.Sum)
        assert any(isinstance(c, kl.Product) for c in e.children)

    def test_changepoint_and_window(self):
        cp = parse_kernel("CP(SE(1,2), WN(1); 0.5, 0.1)")
        assert isinstance(cp, ChangePoint) and cp.location == 0.5 and cp.steepness == 0.1
        cw = parse_kernel("CW(SE(1,2), C(1); 0, 2, 0.1)")
        assert isinstance(cw, ChangeWindow) and (cw.start, cw.end) == (0.0, 2.0)

    def test_changepoint_children_keep_their_order(self):
        a = parse_kernel("CP(SE(1,1), WN(1); 0, 1)")
        b = parse_kernel("CP(WN(1), SE(1,1); 0, 1)")
        assert a != b

    def test_masks(self):
        assert parse_kernel("SIG(1700, 1)") == Mask(MaskKind.SIG, (1700.0, 1.0))
        assert parse_kernel("WINBAR(0, 1, 0.5)").kind is MaskKind.WINBAR

    def test_bare_name_is_unfitted(self):
        e = parse_kernel("PER")
        assert e.kind is Kind.PER and all(math.isnan(p) for p in e.params)
        assert kl.has_fresh(parse_kernel("SE(1,1) + WN"))

    @pytest.mark.parametrize("text, fragment", [
        ("SE(", "expected a number"),
        ("FOO(1)", "unknown kernel"),
        ("SE(1)", "requires 2 parameters"),
        ("SE(-1,1)", "must be positive"),
        ("CW(SE(1,1), SE(1,1); 2, 1, 1)", "below end"),
        ("SE(1,1) +", "expected a kernel"),
        ("", "expected a kernel"),
    ])
    def test_syntax_errors(self, text, fragment):
        with pytest.raises(KernelSyntaxError, match=fragment):
            parse_kernel(text)

    def test_negative_offset_allowed(self):
        assert parse_kernel("LIN(1, -3.5)").params == (1.0, -3.5)

    @given(seeds)
    def test_print_parse_round_trip(self, seed):
        e = random_expr(np.random.default_rng(seed))
        text = kl.print_kernel(e)
        assert parse_kernel(text) == e
        assert kl.print_kernel(parse_kernel(text)) == text


class TestStructureAndParams:
    def test_structure_strips_parameters(self):
        assert kl.structure(parse_kernel("CP(SE(1,2), WN(3); 0, 1)")) == "CP(SE, WN)"
        assert kl.structure(parse_kernel("SE(1,1) + WN(2)")) == "SE + WN"

    def test_count_params(self):
        assert kl.count_params(parse_kernel("SE + PER * LIN + WN")) == 2 + 3 + 2 + 1
        assert kl.count_params(parse_kernel("CP(SE, WN; 0, 1)")) == 5
        assert kl.count_params(parse_kernel("CW(SE, WN; 0, 1, 1)")) == 6

    @given(seeds)
    def test_set_get_round_trip(self, seed):
        e = random_expr(np.random.default_rng(seed))
        values = kl.get_params(e)
        assert len(values) == kl.count_params(e)
        assert kl.set_params(e, values) == e

    def test_set_params_wrong_length(self):
        with pytest.raises(ValueError):
            kl.set_params(parse_kernel("SE(1,1)"), [1.0])


class TestNormalForm:
    def test_worked_example(self):
        e = parse_kernel("SE(2,1) * (WN(1) * LIN(1,0) + CP(C(3), PER(1,1,1); 0, 1))")
        nf = to_normal_form(e)
        shapes = sorted(kl.structure(t.to_expr()) for t in nf)
        assert shapes == ["LIN * WN", "PER * SE * SIGBAR", "SE * SIG"]
        # WN absorbs the SE variance; C folds into SE
        by_shape = {kl.structure(t.to_expr()): t for t in nf}
        assert by_shape["LIN * WN"].core[0].params == (2.0,)
        assert by_shape["SE * SIG"].core[0].params == (6.0, 1.0)

    def test_se_times_se(self):
        t = to_normal_form(parse_kernel("SE(2, 3) * SE(5, 4)")).terms[0]
        var, ell = t.core[0].params
        assert var == pytest.approx(10.0)
        # precisions add: 1/9 + 1/16 = 25/144
        assert ell == pytest.approx(12.0 / 5.0)

    def test_constant_times_lin(self):
        t = to_normal_form(parse_kernel("C(3) * LIN(2, 1)")).terms[0]
        assert t.core == () and t.lin_factors == (Base(Kind.LIN, (6.0, 1.0)),)

    def test_constant_product(self):
        t = to_normal_form(parse_kernel("C(3) * C(2)")).terms[0]
        assert t.core == (Base(Kind.C, (6.0,)),)

    def test_noise_absorbs_stationary_factors(self):
        t = to_normal_form(parse_kernel("WN(2) * SE(3,1) * PER(5,1,1) * LIN(1,0)")).terms[0]
        assert t.is_noise and t.core == (Base(Kind.WN, (30.0,)),)
        assert len(t.lin_factors) == 1

    def test_changewindow_expands_to_window_masks(self):
        nf = to_normal_form(parse_kernel("CW(SE(1,1), C(1); 0, 1, 0.1)"))
        kinds = sorted(t.masks[0].kind.name for t in nf)
        assert kinds == ["WIN", "WINBAR"]

    def test_distribute_is_idempotent(self):
        e = parse_kernel("SE(1,1) * (PER(1,1,1) + LIN(1,0)) * (WN(1) + C(2))")
        d = kl.distribute(e)
        assert kl.distribute(d) == d
        assert len(to_normal_form(e)) == 4

    @given(seeds)
    def test_normal_form_evaluates_like_original(self, seed):
        rng = np.random.default_rng(seed)
        e = random_expr(rng)
        x = rng.uniform(-2, 2, 12)
        x2 = rng.uniform(-2, 2, 9)
        a = covariance(e, x, x2)
        b = covariance(to_normal_form(e).to_expr(), x, x2)
        assert np.allclose(a, b, rtol=1e-9, atol=1e-12 * np.abs(a).max())

    @given(seeds)
    def test_normal_form_terms_are_simplified(self, seed):
        e = random_expr(np.random.default_rng(seed))
        for t in to_normal_form(e):
            kinds = t.kinds()
            assert kinds.count(Kind.SE) <= 1
            assert Kind.C not in kinds or len(kinds) == 1
            if Kind.WN in kinds:
                assert kinds == [Kind.WN]
            assert all(b.kind is Kind.LIN for b in t.lin_factors)
