"""Mono-window lake surface water temperature retrieval.

Radiances are per unit wavenumber in mW m^-2 sr^-1 (cm^-1)^-1, the usual
unit for thermal-infrared path radiances.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path

import numpy as np

from ._csv import numbered_rows
from .exceptions import ParseError, SingularAtmosphereError, SingularFitError, ValidationError

C1 = 1.191042e8       # W um^4 m^-2 sr^-1
C2 = 1.4387752e4      # um K
# the same constants for radiance per wavenumber: mW m^-2 sr^-1 (cm^-1)^-1 with nu in cm^-1
C1_NU = C1 * 1e-16 * 1e3
C2_NU = C2 * 1e-4

LSWT_MIN = 200.0
LSWT_MAX = 330.0


@dataclass(frozen=True)
class BandSpec:
    """Thermal band: central wavenumber and linear band-correction coefficients.

    The effective Planck function of the band is ``B(nu_c, alpha*T + beta)``
    so that the brightness temperature ``T_b`` of a radiance maps back to a
    surface temperature via ``(T_b - beta) / alpha``.
    """

    name: str
    center_um: float
    nu_c: float | None = None
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.center_um > 0:
            raise ValidationError(f"band {self.name!r}: center wavelength must be positive")
        if self.nu_c is None:
            object.__setattr__(self, "nu_c", 1e4 / self.center_um)
        if not self.nu_c > 0:
            raise ValidationError(f"band {self.name!r}: nu_c must be positive")
        if not self.alpha > 0:
            raise ValidationError(f"band {self.name!r}: alpha must be positive")

    @classmethod
    def from_json(cls, path) -> "BandSpec":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: cannot read band configuration ({exc})") from exc
        unknown = set(d) - {"name", "center_um", "nu_c", "alpha", "beta"}
        if unknown or "name" not in d or "center_um" not in d:
            raise ParseError(f"{path}: band configuration needs name and center_um, unknown keys {sorted(unknown)}")
        return cls(str(d["name"]), float(d["center_um"]), d.get("nu_c"),
                   float(d.get("alpha", 1.0)), float(d.get("beta", 0.0)))


@dataclass(frozen=True)
class AtmParams:
    """Scene atmosphere: transmittance, path radiances, view angle, emissivity."""

    tau: float
    l_up: float
    l_down: float
    theta: float = 0.0
    epsilon: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"transmittance must lie in [0, 1], got {self.tau}")
        if self.l_up < 0 or self.l_down < 0:
            raise ValidationError("path radiances must be non-negative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValidationError(f"emissivity must lie in (0, 1], got {self.epsilon}")


class Quality(str, Enum):
    OK = "ok"
    CLOUD = "cloud"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class LswtResult:
    lswt: float
    flag: Quality


def _planck_mono(nu, T):
    return C1_NU * nu ** 3 / np.expm1(C2_NU * nu / T)


def _inverse_planck_mono(nu, L):
    return C2_NU * nu / np.log1p(C1_NU * nu ** 3 / L)


def planck_radiance(T, band: BandSpec):
    """Band radiance of a black body at temperature ``T`` (K)."""
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 0)):
        raise ValidationError("temperature must be positive")
    out = _planck_mono(band.nu_c, band.alpha * T + band.beta)
    return float(out) if out.ndim == 0 else out


def inverse_planck(L, band: BandSpec):
    """Temperature whose band radiance is ``L``; inverse of :func:`planck_radiance`."""
    L = np.asarray(L, dtype=float)
    if np.any(~(L > 0)):
        raise ValidationError("radiance must be positive")
    out = (_inverse_planck_mono(band.nu_c, L) - band.beta) / band.alpha
    return float(out) if out.ndim == 0 else out


def brightness_temperature(L, band: BandSpec):
    """Monochromatic brightness temperature at the band's central wavenumber."""
    L = np.asarray(L, dtype=float)
    if np.any(~(L > 0)):
        raise ValidationError("radiance must be positive")
    out = _inverse_planck_mono(band.nu_c, L)
    return float(out) if out.ndim == 0 else out


def simulate_toa_radiance(T_s, atm: AtmParams, band: BandSpec):
    """Top-of-atmosphere radiance ``tau*(eps*B(T_s) + (1-eps)*L_down) + L_up``."""
    return atm.tau * (atm.epsilon * planck_radiance(T_s, band) + (1 - atm.epsilon) * atm.l_down) + atm.l_up


def invert_pmw(L_measured: float, atm: AtmParams, band: BandSpec) -> LswtResult:
    """Surface temperature from a measured TOA radiance by exact inversion of the forward model."""
    te = atm.tau * atm.epsilon
    if te < 1e-6:
        raise SingularAtmosphereError(f"tau*epsilon = {te:.3g} is too small to invert")
    if not np.isfinite(L_measured):
        return LswtResult(float("nan"), Quality.CLOUD)
    ground = (L_measured - atm.l_up - atm.tau * (1 - atm.epsilon) * atm.l_down) / te
    if not ground > 0:
        return LswtResult(float("nan"), Quality.OUT_OF_RANGE)
    T = (_inverse_planck_mono(band.nu_c, ground) - band.beta) / band.alpha
    flag = Quality.OK if LSWT_MIN <= T <= LSWT_MAX else Quality.OUT_OF_RANGE
    return LswtResult(float(T), flag)


def invert_pmw_array(L, atm: AtmParams, band: BandSpec, cloudy=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`invert_pmw`. Returns temperatures (NaN where not ok) and a validity mask."""
    te = atm.tau * atm.epsilon
    if te < 1e-6:
        raise SingularAtmosphereError(f"tau*epsilon = {te:.3g} is too small to invert")
    L = np.asarray(L, dtype=float)
    ground = (L - atm.l_up - atm.tau * (1 - atm.epsilon) * atm.l_down) / te
    ok = np.isfinite(ground) & (ground > 0)
    if cloudy is not None:
        ok &= ~np.asarray(cloudy, dtype=bool)
    T = np.full(L.shape, np.nan)
    T[ok] = (_inverse_planck_mono(band.nu_c, ground[ok]) - band.beta) / band.alpha
    ok &= (T >= LSWT_MIN) & (T <= LSWT_MAX)
    T[~ok] = np.nan
    return T, ok


def fit_lswt_regression(samples) -> tuple[float, float]:
    """Least-squares line ``T_s = a*BT + b`` through ``(T_s, BT)`` samples."""
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[1] != 2 or len(s) < 2:
        raise ValidationError("need at least two (T_s, BT) samples")
    t, bt = s[:, 0], s[:, 1]
    bt_c = bt - bt.mean()
    sxx = np.dot(bt_c, bt_c)
    if sxx == 0:
        raise SingularFitError("all brightness temperatures are equal")
    a = float(np.dot(bt_c, t - t.mean()) / sxx)
    return a, float(t.mean() - a * bt.mean())


def regression_samples(t_skin: float, atm: AtmParams, band: BandSpec,
                       lo: float = -5.0, hi: float = 15.0, step: float = 1.0) -> np.ndarray:
    """(T_s, BT) pairs from forward simulation over ``t_skin + [lo, hi]``."""
    T = t_skin + np.arange(lo, hi + step / 2, step)
    bt = brightness_temperature(simulate_toa_radiance(T, atm, band), band)
    return np.column_stack([T, bt])


def validation_stats(a, b) -> tuple[float, float, float | None]:
    """Bias ``mean(a - b)``, RMSE and squared Pearson correlation (None if undefined)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValidationError("validation needs two paired series of equal length >= 2")
    d = a - b
    bias = float(d.mean())
    rmse = float(np.sqrt(np.mean(d * d)))
    ac = a - a.mean()
    bc = b - b.mean()
    saa, sbb = np.dot(ac, ac), np.dot(bc, bc)
    if saa == 0 or sbb == 0:
        return bias, rmse, None
    return bias, rmse, float(np.dot(ac, bc) ** 2 / (saa * sbb))


@dataclass(frozen=True)
class MatchedPair:
    time: datetime
    insitu_time: datetime
    satellite: float
    insitu: float
    cloud: bool


def window_mean(values, cloudy, max_cloudy: int = 2) -> tuple[float, bool]:
    """Mean of the clear pixels of a window; flagged cloudy when more than ``max_cloudy`` are obscured."""
    v = np.asarray(values, dtype=float).ravel()
    c = np.asarray(cloudy, dtype=bool).ravel() | np.isnan(v)
    n_cloudy = int(c.sum())
    if n_cloudy > max_cloudy or n_cloudy == v.size:
        return (float(v[~c].mean()) if (~c).any() else float("nan")), True
    return float(v[~c].mean()), False


def match_observations(sat, insitu, max_dt: timedelta = timedelta(minutes=30), max_cloudy: int = 2):
    """Pair satellite windows with the nearest in-situ sample.

    Parameters
    ----------
    sat : sequence of (datetime, values, cloudy)
        Time-sorted pixel windows (typically 3x3) and their cloud flags.
    insitu : sequence of (datetime, float)
        Time-sorted in-situ samples.
    max_dt : timedelta
        Largest accepted time difference.

    Returns
    -------
    pairs : list of MatchedPair
    n_unmatched : int
        Satellite observations without an in-situ sample within ``max_dt``.
    """
    times = [t for t, _ in insitu]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValidationError("in-situ samples must be time-sorted")
    pairs = []
    unmatched = 0
    for t, values, cloudy in sat:
        k = bisect.bisect_left(times, t)
        best = None
        for j in (k - 1, k):
            if 0 <= j < len(times):
                dt = abs(times[j] - t)
                if dt <= max_dt and (best is None or dt < best[0]):
                    best = (dt, j)
        if best is None:
            unmatched += 1
            continue
        mean, cloud = window_mean(values, cloudy, max_cloudy)
        j = best[1]
        pairs.append(MatchedPair(t, times[j], mean, float(insitu[j][1]), cloud))
    return pairs, unmatched


ATM_COLUMNS = ["timestamp", "tau", "l_up", "l_down", "theta_deg", "epsilon"]


def read_atm_csv(path) -> dict[datetime, AtmParams]:
    """Scene-constant atmospheric parameters keyed by acquisition timestamp."""
    path = Path(path)
    out = {}
    try:
        with path.open(newline="") as fh:
            reader = numbered_rows(fh)
            first = next(reader, None)
            if first is None or [h.strip() for h in first[1]] != ATM_COLUMNS:
                raise ParseError(f"{path}:{first[0] if first else 1}: expected header {','.join(ATM_COLUMNS)}")
            for lineno, row in reader:
                if len(row) != len(ATM_COLUMNS):
                    raise ParseError(f"{path}:{lineno}: expected {len(ATM_COLUMNS)} columns")
                try:
                    ts = datetime.fromisoformat(row[0].strip())
                    tau, lu, ld, th, eps = (float(x) for x in row[1:])
                    out[ts] = AtmParams(tau, lu, ld, th, eps)
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror})") from exc
    return out
