"""Engineering-unit conversions for XBee analog samples.

All forward conversions return unrounded reals. The inverse helpers
(``*_to_adc``) round half up and are only used by the simulated nodes.
"""

from __future__ import annotations

import math

ADC_MAX = 1023
ADC_REF_MV = 1200
DIVIDER_RATIO = 3
SUPPLY_FULL_SCALE_V = ADC_REF_MV * DIVIDER_RATIO / 1000  # 3.6 V
CELSIUS_FULL_SCALE = ADC_REF_MV / 10  # 120 degC
MV_PER_DEGC = 10


class DomainError(ValueError):
    pass


def _check_raw(raw: int) -> int:
    if isinstance(raw, bool) or int(raw) != raw or not 0 <= raw <= ADC_MAX:
        raise DomainError(f"ADC reading {raw!r} outside 0..{ADC_MAX}")
    return int(raw)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def adc_to_millivolts(raw: int) -> float:
    return _check_raw(raw) * ADC_REF_MV / ADC_MAX


def millivolts_to_celsius(mv: float) -> float:
    if mv < 0:
        raise DomainError(f"negative sensor voltage {mv} mV")
    return mv / MV_PER_DEGC


def divider_output(vin: float, r1: float, r2: float) -> float:
    """Output of a two-resistor divider with ``r2`` on the low side."""
    if r1 <= 0 or r2 <= 0:
        raise DomainError("divider resistances must be positive")
    if vin < 0:
        raise DomainError("input voltage must be non-negative")
    return vin * r2 / (r1 + r2)


def adc_to_supply_volts(raw: int) -> float:
    # the x3 undoes the 200/100 ohm divider on the supply rail
    return _check_raw(raw) * ADC_REF_MV * DIVIDER_RATIO / ADC_MAX / 1000


def supply_volts_to_adc(volts: float) -> int:
    if not 0 <= volts <= SUPPLY_FULL_SCALE_V:
        raise DomainError(f"supply {volts} V outside 0..{SUPPLY_FULL_SCALE_V} V")
    return min(ADC_MAX, max(0, _round_half_up(volts * 1000 * ADC_MAX / (ADC_REF_MV * DIVIDER_RATIO))))


def sensor_volts_to_adc(volts: float) -> int:
    """Quantize a pin voltage against the 1.2 V reference."""
    if not 0 <= volts <= ADC_REF_MV / 1000:
        raise DomainError(f"pin voltage {volts} V outside 0..1.2 V")
    return min(ADC_MAX, max(0, _round_half_up(volts * 1000 * ADC_MAX / ADC_REF_MV)))


def celsius_to_adc(celsius: float) -> int:
    if not 0 <= celsius <= CELSIUS_FULL_SCALE:
        raise DomainError(f"temperature {celsius} degC outside 0..{CELSIUS_FULL_SCALE}")
    return min(ADC_MAX, max(0, _round_half_up(celsius * MV_PER_DEGC * ADC_MAX / ADC_REF_MV)))


def adc_to_celsius(raw: int) -> float:
    return millivolts_to_celsius(adc_to_millivolts(raw))
