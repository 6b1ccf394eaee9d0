"""Transmit-side construction: 4-QAM mapping, the data signal, point and
chirp-spread pilots, and subframe composition.

The spread pilot is the workhorse of in-band sensing.  A point pilot (a
quasi-periodic DD impulse) realizes a high-PAPR pulse train; passing it
through a constant-modulus DD chirp filter spreads it over the whole
fundamental domain.  The chirp is realized as a serialized quadratic-phase
(Zadoff-Chu style) sequence whose root is selected deterministically from
the slope parameter q so that

  * the pilot's self-ambiguity inside the channel-estimation window is zero
    to machine precision (its support is a sheared lattice whose nonzero
    points clear the window), and
  * the oversampled waveform PAPR lands in the low single digits of dB.

A per-cell chirp exp(j2pi q (k^2 + l^2)/(MN)) is also provided
(``chirp_filter``); its cell-to-cell sweep is too slow to decorrelate DD
shifts at small q, so it is not used to build the operational pilot for
q != 0 (see ``select_chirp_root``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.signal import resample

from .core import (
    DDFilter,
    DDSignal,
    ModulationParams,
    ParameterMismatchError,
    twisted_convolve_fs,
    zak_forward,
    TDSignal,
)

__all__ = [
    "SymbolGrid",
    "PilotSpec",
    "SubframeSpec",
    "map_bits_to_symbols",
    "demap_symbols",
    "data_signal",
    "data_signal_by_filtering",
    "point_pilot",
    "chirp_filter",
    "select_chirp_root",
    "spread_pilot",
    "spread_filter",
    "compose_subframe",
]

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """M x N grid of information symbols, unit average energy."""

    params: ModulationParams
    x: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.x, dtype=np.complex128)
        if arr.shape != (self.params.M, self.params.N):
            raise ValueError("symbol grid shape mismatch")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)


@dataclass(frozen=True)
class PilotSpec:
    """Pilot placement (k_p, l_p) and chirp slope q."""

    k_p: int
    l_p: int
    q: int = 3


@dataclass(frozen=True)
class SubframeSpec:
    """Energy split of one subframe: E_d for data, E_p for the pilot.

    PDR (dB) = 10 log10(E_p / E_d) when E_d > 0.
    """

    E_d: float
    E_p: float
    pilot: PilotSpec

    def __post_init__(self):
        if self.E_d < 0 or self.E_p < 0:
            raise ValueError("energies must be nonnegative")
        if self.E_d == 0 and self.E_p == 0:
            raise ValueError("E_d and E_p cannot both be zero")

    @property
    def pdr_db(self) -> float:
        if self.E_d <= 0:
            raise ValueError("PDR undefined for E_d = 0")
        return float(10.0 * np.log10(self.E_p / self.E_d))


# ---------------------------------------------------------------------------
# 4-QAM mapping
# ---------------------------------------------------------------------------

def map_bits_to_symbols(params: ModulationParams, bits) -> SymbolGrid:
    """Gray-map 2MN bits to an M x N grid of unit-energy 4-QAM symbols.

    Per symbol, bits (b1, b0) map to ((1 - 2 b1) + j (1 - 2 b0))/sqrt(2);
    symbols fill the grid in delay-major (k-major) order.
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size != 2 * params.mn:
        raise ValueError(f"need exactly {2 * params.mn} bits, got {bits.size}")
    b1 = bits[0::2]
    b0 = bits[1::2]
    sym = ((1 - 2 * b1) + 1j * (1 - 2 * b0)) / _SQRT2
    return SymbolGrid(params, sym.reshape(params.M, params.N))


def demap_symbols(params: ModulationParams, soft) -> tuple:
    """Minimum-distance 4-QAM decision per cell.

    Returns (bits, SymbolGrid) where bits is the length-2MN hard bit array
    in the same order used by ``map_bits_to_symbols``.  Boundary values
    decide toward the positive quadrant (Re = 0 -> bit 0, Im = 0 -> bit 0).
    """
    soft = np.asarray(soft, dtype=np.complex128)
    if soft.shape != (params.M, params.N):
        raise ValueError("soft grid shape mismatch")
    b1 = (soft.real < 0).astype(np.int64)
    b0 = (soft.imag < 0).astype(np.int64)
    bits = np.empty(2 * params.mn, dtype=np.int64)
    bits[0::2] = b1.ravel()
    bits[1::2] = b0.ravel()
    hard = ((1 - 2 * b1) + 1j * (1 - 2 * b0)) / _SQRT2
    return bits, SymbolGrid(params, hard)


# ---------------------------------------------------------------------------
# data signal
# ---------------------------------------------------------------------------

def data_signal(sym: SymbolGrid) -> DDSignal:
    """Quasi-periodic data signal with fundamental domain x[k, l]/sqrt(MN)."""
    return DDSignal(sym.params, sym.x / np.sqrt(sym.params.mn))


def data_signal_by_filtering(sym: SymbolGrid) -> DDSignal:
    """Equivalent construction: symbol impulses twisted onto the data pulsone.

    The filter with taps x[k', l']/sqrt(MN) at (k', l') convolved with the
    impulse-train pulsone (point pilot at the origin) must reproduce
    ``data_signal`` exactly; kept as an independent path for validation.
    """
    params = sym.params
    scale = 1.0 / np.sqrt(params.mn)
    taps = {
        (k, l): sym.x[k, l] * scale
        for k in range(params.M)
        for l in range(params.N)
    }
    return twisted_convolve_fs(DDFilter(params, taps), point_pilot(params, PilotSpec(0, 0)))


# ---------------------------------------------------------------------------
# pilots
# ---------------------------------------------------------------------------

def point_pilot(params: ModulationParams, spec: PilotSpec) -> DDSignal:
    """Quasi-periodic DD impulse at (k_p, l_p); unit energy."""
    if not (0 <= spec.k_p < params.M and 0 <= spec.l_p < params.N):
        raise ValueError(f"pilot position {(spec.k_p, spec.l_p)} out of range")
    fd = np.zeros((params.M, params.N), dtype=np.complex128)
    fd[spec.k_p, spec.l_p] = 1.0
    return DDSignal(params, fd)


def chirp_filter(params: ModulationParams, q: int) -> DDFilter:
    """Per-cell DD chirp with taps exp(j2pi q (k^2 + l^2)/(MN)) / (MN).

    The taps are rescaled so the resulting spread pilot has unit
    fundamental-domain energy (the raw 1/(MN) scale would give 1/(MN)
    energy, under which E_p/E_d would not be the physical power ratio).
    """
    M, N = params.M, params.N
    kk, ll = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    w = np.exp(2j * np.pi * q * (kk**2 + ll**2) / params.mn) / params.mn
    # spreading a quasi-periodic impulse with a full-grid filter touches each
    # output cell exactly once, so unit pilot energy needs a sqrt(MN) rescale
    w = w * np.sqrt(params.mn)
    taps = {
        (int(a), int(b)): w[a, b] for a in range(M) for b in range(N)
    }
    return DDFilter(params, taps)


def _sequence_papr_db(z: np.ndarray, oversample: int = 4) -> float:
    s = resample(z, oversample * z.size)
    p = np.abs(s) ** 2
    return float(10.0 * np.log10(p.max() / p.mean()))


def _default_guard(M: int, N: int) -> tuple:
    """Self-ambiguity clearance demanded of the pilot chirp, in bins.

    The estimation read-off is clean when the pilot self-ambiguity vanishes
    on the difference set of the channel support; the default clears a
    window of about a third of the delay period by two thirds of the
    Doppler period.
    """
    return max(2, round(0.35 * M)), max(2, round(0.65 * N))


@lru_cache(maxsize=32)
def select_chirp_root(M: int, N: int, q: int,
                      guard_k: int = None, guard_l: int = None,
                      papr_lo: float = 4.6, papr_hi: float = 6.9) -> int:
    """Pick the serialized chirp root realizing slope q on an M x N grid.

    Starting from the twist-compensated serialized rate 2qN + 1, walk
    outward to the first root u with gcd(u, MN) = 1 whose ambiguity line
    {(d, u d mod MN)} clears the guard window (|u d mod MN| > guard_l for
    all 0 < |d| <= guard_k) and whose 4x-oversampled waveform PAPR falls in
    [papr_lo, papr_hi] dB.  Deterministic in (M, N, q).
    """
    L = M * N
    if guard_k is None or guard_l is None:
        gk, gl = _default_guard(M, N)
        guard_k = guard_k if guard_k is not None else gk
        guard_l = guard_l if guard_l is not None else gl
    if guard_k * (2 * guard_l + 1) >= L:
        raise ValueError(
            f"guard window ({guard_k}, {guard_l}) cannot be cleared on an "
            f"{M} x {N} grid"
        )

    def clean(u: int) -> bool:
        for d in range(1, guard_k + 1):
            r = (u * d) % L
            if min(r, L - r) <= guard_l:
                return False
        return True

    n = np.arange(L)
    u0 = (2 * q * N + 1) % L
    for step in range(2 * L):
        delta = (step + 1) // 2 * (1 if step % 2 == 0 else -1)
        u = (u0 + delta) % L
        if u <= 1 or gcd(u, L) != 1 or not clean(u):
            continue
        z = _chirp_sequence(u, L)
        if papr_lo <= _sequence_papr_db(z) <= papr_hi:
            return u
    raise ValueError(f"no admissible chirp root for q={q} on {M} x {N}")


def _chirp_sequence(u: int, L: int) -> np.ndarray:
    n = np.arange(L)
    if L % 2:
        phase = u * n * (n + 1)
    else:
        phase = u * n * n
    return np.exp(1j * np.pi * phase / L) / np.sqrt(L)


def spread_pilot(params: ModulationParams, spec: PilotSpec) -> DDSignal:
    """Chirp-spread pilot: unit energy, constant magnitude per cell.

    For q = 0 the spreading filter is constant and the pilot re-concentrates
    into a single delay burst (no spreading benefit).  For q != 0 the pilot
    is the Zak image of the selected serialized chirp, shifted to
    (k_p, l_p) by twisted convolution with a unit tap; shifting only rotates
    phases.
    """
    if spec.q == 0:
        x = twisted_convolve_fs(chirp_filter(params, 0), point_pilot(params, spec))
    else:
        u = select_chirp_root(params.M, params.N, spec.q)
        z = _chirp_sequence(u, params.mn)
        base = zak_forward(TDSignal(params, z, Q=1))
        shift = DDFilter.single_tap(params, spec.k_p, spec.l_p)
        x = twisted_convolve_fs(shift, base)
    fd = x.fd / np.sqrt(x.energy())
    return DDSignal(params, fd)


def spread_filter(params: ModulationParams, spec: PilotSpec) -> DDFilter:
    """The DD filter w with spread_pilot == w *sigma point_pilot, exactly.

    A full-grid filter acting on a quasi-periodic impulse touches each
    output cell through a single tap, so the filter taps follow from the
    spread pilot cells by dividing out the impulse-extension and twist
    phases.
    """
    xs = spread_pilot(params, spec)
    M, N = params.M, params.N
    mn = params.mn
    kp, lp = spec.k_p, spec.l_p
    taps = {}
    for a in range(M):
        for b in range(N):
            k = (kp + a) % M
            l = (lp + b) % N
            n = (k - a - kp) // M  # -1 or 0
            ext = np.exp(2j * np.pi * n * (l - b) / N)
            twist = np.exp(2j * np.pi * b * (k - a) / mn)
            taps[(a, b)] = xs.fd[k, l] / (ext * twist)
    return DDFilter(params, taps)


# ---------------------------------------------------------------------------
# subframe composition
# ---------------------------------------------------------------------------

def compose_subframe(data: DDSignal, pilot: DDSignal, spec: SubframeSpec) -> DDSignal:
    """sqrt(E_d) * data + sqrt(E_p) * pilot, cellwise."""
    if data.params != pilot.params:
        raise ParameterMismatchError("data and pilot parameters differ")
    fd = np.sqrt(spec.E_d) * data.fd + np.sqrt(spec.E_p) * pilot.fd
    return DDSignal(data.params, fd)
