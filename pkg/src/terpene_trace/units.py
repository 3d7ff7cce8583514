"""ppb <-> ug/m^3 conversion for a gas at ambient pressure (ideal gas)."""

from .exceptions import InvalidTemperature
from .types import TerpeneInfo

MOLAR_VOLUME_25C = 24.45  # L/mol at 25 degC, 1 atm
_T_REF = 298.15


def molar_volume(temp_c: float = 25.0) -> float:
    """Molar volume in L/mol at ``temp_c``, scaled from 24.45 L/mol at 25 degC."""
    if temp_c <= -273.15:
        raise InvalidTemperature(f"temperature must be above absolute zero, got {temp_c} degC")
    return MOLAR_VOLUME_25C * (273.15 + temp_c) / _T_REF


def ppb_to_mass_conc(ppb, info: TerpeneInfo, temp: float = 25.0):
    if ppb < 0:
        raise ValueError("ppb must be >= 0")
    return ppb * info.molar_mass / molar_volume(temp)


def mass_conc_to_ppb(c, info: TerpeneInfo, temp: float = 25.0):
    if c < 0:
        raise ValueError("concentration must be >= 0")
    return c * molar_volume(temp) / info.molar_mass
