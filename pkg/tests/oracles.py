"""Independent reference implementations used to check the package.

These are written from first principles (field amplitudes, explicit loops,
numerical quadrature) and deliberately share no code with ``sspdmatrix``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

C = 299_792_458.0


def ring_field_response(t_through, t_drop, loop_intensity, laps, phase=0.0):
    """Impulse response of a ring traced coupler by coupler on field amplitudes.

    Couplers are lossless 2x2 unitaries ``[[t, i k], [i k, t]]``. Returns the
    complex through-port amplitudes at lap counts 0..laps and drop-port
    amplitudes after 0.5..laps+0.5 laps. ``phase`` is the optical phase per lap.
    """
    k1 = math.sqrt(1.0 - t_through**2)
    k2 = math.sqrt(1.0 - t_drop**2)
    half = math.sqrt(math.sqrt(loop_intensity)) * np.exp(0.5j * phase)  # field factor for half a lap
    through = [t_through + 0j]
    drop = []
    ring = 1j * k1  # field injected into the ring by a unit input
    for _ in range(laps + 1):
        ring *= half
        drop.append(1j * k2 * ring)
        ring *= t_drop
        ring *= half
        through.append(1j * k1 * ring)
        ring *= t_through
    return np.array(through[: laps + 1]), np.array(drop[: laps + 1])


def ring_cw_transmission(t_through, t_drop, loop_intensity, phase, laps=4000):
    """Steady-state transmission as the sum of the impulse response at fixed phase."""
    through, drop = ring_field_response(t_through, t_drop, loop_intensity, laps, phase)
    return abs(through.sum()) ** 2, abs(drop.sum()) ** 2


def gaussian_bin_mass_quad(center, sigma, lo, hi):
    pdf = lambda x: math.exp(-0.5 * ((x - center) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))  # noqa: E731
    return integrate.quad(pdf, lo, hi, epsabs=1e-13)[0]


def histogram_loop(tag_times, sync_times, bin_width, range_ps, multi_stop=False):
    """Start-stop histogram with explicit loops: (counts, out_of_range, extra)."""
    counts = [0] * (range_ps // bin_width)
    out_of_range = extra = 0
    last_owner = None
    for t in tag_times:
        owner = None
        for s in sync_times:
            if s <= t:
                owner = s
            else:
                break
        if owner is None:
            out_of_range += 1
            continue
        if not multi_stop and owner == last_owner:
            extra += 1
            continue
        last_owner = owner
        delay = t - owner
        if 0 <= delay < range_ps:
            counts[delay // bin_width] += 1
        else:
            out_of_range += 1
    return counts, out_of_range, extra


def dead_time_loop(times, dead):
    kept = []
    for t in times:
        if not kept or t - kept[-1] >= dead:
            kept.append(t)
    return kept


def critical_current_ua(width_nm, thickness_nm, temperature, tc=10.5, jc0=8e10):
    return jc0 * (1 - (temperature / tc) ** 2) ** 1.5 * width_nm * 1e-9 * thickness_nm * 1e-9 * 1e6


def recovery_time_ps(width_nm, length_um, sheet_ph, load_ohms=50.0):
    squares = length_um * 1e3 / width_nm
    return squares * sheet_ph * 1e-12 / load_ohms * 1e12


def lorentzian_fwhm_numeric(wl, transmission):
    """FWHM of a dip by linear interpolation of the half-depth crossings."""
    i = int(np.argmin(transmission))
    top = float(transmission.max())
    half = 0.5 * (top + transmission[i])
    left = np.flatnonzero(transmission[:i] > half)[-1]
    right = i + np.flatnonzero(transmission[i:] > half)[0]
    xl = np.interp(half, [transmission[left + 1], transmission[left]], [wl[left + 1], wl[left]])
    xr = np.interp(half, [transmission[right - 1], transmission[right]], [wl[right - 1], wl[right]])
    return xr - xl
