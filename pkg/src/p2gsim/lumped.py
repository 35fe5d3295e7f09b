"""Lumped-parameter substitutes for the electricity network (LPEN), the gas
network (LPGN) and the P2G plant (LPP2G)."""
from __future__ import annotations

from dataclasses import dataclass

REFERENCE = "reference"
LPEN = "lpen"
LPGN = "lpgn"
LPP2G = "lpp2g"
CASES = (REFERENCE, LPEN, LPGN, LPP2G)


@dataclass(frozen=True)
class LumpedCaseSelector:
    case: str = REFERENCE
    eta_p2g: float | None = None  # LPP2G only; None -> calibrate from a Reference run
    aux_kw: float | None = None  # LPP2G only; None -> each plant's own auxiliary load

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.eta_p2g is not None and not 0 < self.eta_p2g <= 1:
            raise ValueError("eta_p2g must lie in (0, 1]")


@dataclass(frozen=True)
class LpenResult:
    rpf_mw: float
    hv_import_mw: float
    setpoints_kw: tuple
    residual_mw: float  # RPF the plants' capacity cannot take


def lpen_step(total_gen_mw, total_load_mw, capacities_kw):
    """Single-node balance: RPF or HV import, RPF split equally over the plants."""
    if total_gen_mw < 0 or total_load_mw < 0:
        raise ValueError("generation and load must be nonnegative")
    diff = total_gen_mw - total_load_mw
    rpf = diff if diff > 0 else 0.0
    hv = -diff if diff < 0 else 0.0
    n = len(capacities_kw)
    share_kw = rpf * 1000.0 / n if n else 0.0
    setpoints = tuple(min(share_kw, cap) for cap in capacities_kw)
    residual = rpf - sum(setpoints) / 1000.0
    return LpenResult(rpf, hv, setpoints, residual)


@dataclass(frozen=True)
class LpgnResult:
    gas_import: float
    sng_accepted: float


def lpgn_step(total_withdrawal, sng_offered):
    """Single-node gas balance without linepack (rates in any consistent unit)."""
    if total_withdrawal < 0 or sng_offered < 0:
        raise ValueError("rates must be nonnegative")
    accepted = min(sng_offered, total_withdrawal)
    gas_import = total_withdrawal - accepted
    return LpgnResult(gas_import if gas_import > 0 else 0.0, accepted)


def lpp2g_step(el_in_kw, eta_p2g, aux_kw):
    """Fixed-efficiency plant: SNG (kW) = eta * max(el_in - aux, 0)."""
    if el_in_kw < 0:
        raise ValueError("electric input must be nonnegative")
    net = el_in_kw - aux_kw
    return eta_p2g * net if net > 0 else 0.0


def lpp2g_electric_for_sng(sng_kw, eta_p2g, aux_kw):
    """Inverse of :func:`lpp2g_step` for a positive SNG output."""
    return sng_kw / eta_p2g + aux_kw if sng_kw > 0 else 0.0
