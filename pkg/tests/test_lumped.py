import pytest

from p2gsim.lumped import (LumpedCaseSelector, lpen_step, lpgn_step, lpp2g_electric_for_sng,
                           lpp2g_step)


def test_lpen_balance():
    r = lpen_step(10.0, 6.0, [])
    assert (r.rpf_mw, r.hv_import_mw) == (4.0, 0.0)
    r = lpen_step(6.0, 10.0, [])
    assert (r.rpf_mw, r.hv_import_mw) == (0.0, 4.0)


def test_lpen_equal_split_with_clamp():
    r = lpen_step(10.2, 6.0, [1200.0] * 3)
    assert r.setpoints_kw == (1200.0, 1200.0, 1200.0)
    assert r.residual_mw == pytest.approx(0.6, abs=1e-12)
    r = lpen_step(7.5, 6.0, [1200.0] * 3)
    assert r.setpoints_kw == pytest.approx((500.0,) * 3, abs=1e-12)


def test_lpgn():
    r = lpgn_step(1.0, 0.3)
    assert r.sng_accepted == 0.3 and r.gas_import == pytest.approx(0.7, abs=1e-12)
    r = lpgn_step(0.1, 0.3)
    assert (r.sng_accepted, r.gas_import) == (0.1, 0.0)
    assert lpgn_step(0.0, 0.3).sng_accepted == 0.0


def test_lpp2g():
    assert lpp2g_step(0.0, 0.445, 12.0) == 0.0
    assert lpp2g_step(1200.0, 0.445, 12.0) == pytest.approx(528.66, abs=1e-9)
    assert lpp2g_step(12.0, 0.445, 12.0) == 0.0
    assert lpp2g_electric_for_sng(lpp2g_step(900.0, 0.445, 12.0), 0.445, 12.0) == pytest.approx(900.0)


def test_selector_validation():
    with pytest.raises(ValueError):
        LumpedCaseSelector("lumped")
    with pytest.raises(ValueError):
        LumpedCaseSelector("lpp2g", eta_p2g=1.3)
    with pytest.raises(ValueError):
        lpgn_step(-1.0, 0.0)
