"""Doubly spread multipath channel in the discrete DD domain.

The simulator's main path is the sampled DD input/output relation
y = h_eff *sigma x + n, with h_eff computed analytically from the physical
paths under matched root-raised-cosine filtering:

  h_eff[k, l] = sum_i h_i e^{-j2pi nu_i tau_i} e^{j2pi nu_i k tau_p/M}
                * rho(k/B - tau_i B-normalized; beta_tau)
                * rho(l/T - nu_i T-normalized; beta_nu)

where rho is the unit-peak raised-cosine Nyquist pulse (the delay/Doppler
autocorrelation of the transmit pulses).  Doppler tap indices are kept
unreduced: a path whose Doppler exceeds half the Doppler period produces
taps beyond +-N/2, which is exactly how Doppler-domain aliasing degrades
windowed estimation.

A cyclic time-domain oracle (``td_oracle``) provides an independent
validation path: per path the impulse train is Doppler-modulated, delayed
by a spectral phase ramp, then shaped by the combined transmit+receive
raised-cosine response.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DDFilter,
    DDSignal,
    ModulationParams,
    TDSignal,
    twisted_convolve_fs,
    zak_forward,
    zak_inverse,
    cross_ambiguity,
)

__all__ = [
    "VEH_A_DELAYS_US",
    "VEH_A_POWERS_DB",
    "PhysicalChannel",
    "SupportRegion",
    "NoiseSpec",
    "draw_veha",
    "load_delay_profile",
    "raised_cosine",
    "effective_channel",
    "default_support",
    "apply_channel",
    "crystallization_check",
    "CrystallizationReport",
    "td_oracle",
]

# ITU Vehicular-A power-delay profile
VEH_A_DELAYS_US = (0.0, 0.31, 0.71, 1.09, 1.73, 2.51)
VEH_A_POWERS_DB = (0.0, -1.0, -9.0, -10.0, -15.0, -20.0)


@dataclass(frozen=True)
class PhysicalChannel:
    """Propagation paths: complex gain, delay (s), Doppler (Hz) per path."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=np.complex128)
        t = np.asarray(self.delays, dtype=np.float64)
        v = np.asarray(self.dopplers, dtype=np.float64)
        if not (g.shape == t.shape == v.shape) or g.ndim != 1:
            raise ValueError("gains, delays, dopplers must be 1-D and equal length")
        if np.any(t < 0):
            raise ValueError("delays must be nonnegative")
        for name, arr in (("gains", g), ("delays", t), ("dopplers", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_paths(self) -> int:
        return self.gains.size


@dataclass(frozen=True)
class SupportRegion:
    """Rectangular DD tap window [k_lo, k_hi] x [l_lo, l_hi], inclusive."""

    k_lo: int
    k_hi: int
    l_lo: int
    l_hi: int

    def __post_init__(self):
        if self.k_hi < self.k_lo or self.l_hi < self.l_lo:
            raise ValueError("empty support region")

    @property
    def k_width(self) -> int:
        return self.k_hi - self.k_lo

    @property
    def l_width(self) -> int:
        return self.l_hi - self.l_lo

    def offsets(self):
        return [
            (k, l)
            for k in range(self.k_lo, self.k_hi + 1)
            for l in range(self.l_lo, self.l_hi + 1)
        ]

    def __contains__(self, pos) -> bool:
        k, l = pos
        return self.k_lo <= k <= self.k_hi and self.l_lo <= l <= self.l_hi


@dataclass(frozen=True)
class NoiseSpec:
    """Per-bin complex noise variance (linear)."""

    N0: float

    def __post_init__(self):
        if self.N0 < 0:
            raise ValueError("N0 must be nonnegative")


def draw_veha(nu_max_hz: float, rng: np.random.Generator,
              delays_us=VEH_A_DELAYS_US, powers_db=VEH_A_POWERS_DB) -> PhysicalChannel:
    """Draw one Veh-A realization.

    Path powers are the profile normalized to unit sum; gains are
    independent circularly symmetric complex Gaussians with those
    variances, so the ensemble channel gain is 1.  Dopplers are
    nu_max * cos(theta_i) with theta_i i.i.d. uniform on [-pi, pi).
    """
    if nu_max_hz < 0:
        raise ValueError("nu_max must be nonnegative")
    p = 10.0 ** (np.asarray(powers_db, dtype=float) / 10.0)
    p = p / p.sum()
    n = p.size
    g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(p / 2.0)
    theta = rng.uniform(-np.pi, np.pi, size=n)
    nu = nu_max_hz * np.cos(theta)
    tau = np.asarray(delays_us, dtype=float) * 1e-6
    return PhysicalChannel(g, tau, nu)


def load_delay_profile(path):
    """Read a plain-text power-delay profile: lines of "delay_us power_db".

    Blank lines and '#' comments are ignored.  Returns (delays_us,
    powers_db) tuples suitable for ``draw_veha``.
    """
    delays, powers = [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed profile line: {raw!r}")
            delays.append(float(parts[0]))
            powers.append(float(parts[1]))
    if not delays:
        raise ValueError(f"no paths found in profile {path}")
    return tuple(delays), tuple(powers)


# ---------------------------------------------------------------------------
# matched-filter pulse and the effective channel
# ---------------------------------------------------------------------------

def raised_cosine(t, beta: float):
    """Unit-peak raised-cosine Nyquist pulse, zero crossings at integers."""
    t = np.asarray(t, dtype=float)
    out = np.sinc(t) * np.cos(np.pi * beta * t)
    denom = 1.0 - (2.0 * beta * t) ** 2
    if beta > 0:
        sing = np.isclose(np.abs(t), 0.5 / beta, rtol=0, atol=1e-12)
        denom = np.where(sing, 1.0, denom)
        out = np.where(sing, (np.pi / 4.0) * np.sinc(0.5 / beta), out / denom)
    else:
        out = out / denom
    if out.ndim == 0:
        return float(out)
    return out


def default_support(params: ModulationParams, tau_max_s: float,
                    nu_max_hz: float, guard: int = 4) -> SupportRegion:
    """Estimation window: delay span plus guard, symmetric Doppler span."""
    k_hi = int(np.ceil(tau_max_s * params.bandwidth)) + guard
    l_half = int(np.ceil(nu_max_hz * params.duration)) + guard
    return SupportRegion(-guard, k_hi, -l_half, l_half)


def channel_support(params: ModulationParams, phys: PhysicalChannel,
                    skirt: int = 8) -> SupportRegion:
    """Tap window covering the physical response including RRC skirts."""
    kb = phys.delays * params.bandwidth
    lb = phys.dopplers * params.duration
    return SupportRegion(
        int(np.floor(kb.min())) - skirt,
        int(np.ceil(kb.max())) + skirt,
        int(np.floor(lb.min())) - skirt,
        int(np.ceil(lb.max())) + skirt,
    )


def effective_channel(phys: PhysicalChannel, params: ModulationParams,
                      support: SupportRegion = None) -> DDFilter:
    """Sampled matched-filter channel taps on a rectangular support.

    When no support is given, one is derived from the path delays/Dopplers
    including pulse skirts.  Tap indices are unreduced; the result is
    linear in the path gains.
    """
    if support is None:
        support = channel_support(params, phys)
    elif support.k_width >= params.M or support.l_width >= params.N:
        warnings.warn(
            "support region exceeds one DD period; crystallization does not hold",
            stacklevel=2,
        )
    ks = np.arange(support.k_lo, support.k_hi + 1)
    ls = np.arange(support.l_lo, support.l_hi + 1)
    kb = phys.delays[:, None] * params.bandwidth       # (P, 1) delay in bins
    lb = phys.dopplers[:, None] * params.duration      # (P, 1) Doppler in bins
    rho_t = raised_cosine(ks[None, :] - kb, params.beta_tau)   # (P, K)
    rho_v = raised_cosine(ls[None, :] - lb, params.beta_nu)    # (P, L)
    phase_k = np.exp(
        2j * np.pi * phys.dopplers[:, None] * ks[None, :] * params.tau_p / params.M
    )
    static = phys.gains * np.exp(-2j * np.pi * phys.dopplers * phys.delays)
    tap_grid = np.einsum("p,pk,pl->kl", static, rho_t * phase_k, rho_v)
    taps = {
        (int(k), int(l)): tap_grid[i, j]
        for i, k in enumerate(ks)
        for j, l in enumerate(ls)
    }
    return DDFilter(params, taps)


def apply_channel(h: DDFilter, x: DDSignal, noise: NoiseSpec,
                  rng: np.random.Generator) -> DDSignal:
    """y = h *sigma x plus white circularly symmetric DD-domain noise."""
    y = twisted_convolve_fs(h, x)
    if noise.N0 > 0:
        M, N = x.params.M, x.params.N
        n = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N)))
        y = DDSignal(x.params, y.fd + n * np.sqrt(noise.N0 / 2.0))
    return y


# ---------------------------------------------------------------------------
# crystallization diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrystallizationReport:
    period_lattice_ok: bool
    spread_lattice_ok: bool
    k_margin: int
    l_margin: int
    max_offlattice_leak: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.period_lattice_ok and self.spread_lattice_ok


def crystallization_check(S: SupportRegion, params: ModulationParams,
                          pilot=None, threshold: float = 0.05) -> CrystallizationReport:
    """Check that windowed estimation on S reads the channel cleanly.

    (a) Period lattice: translates of S by (M, 0)/(0, N) are disjoint iff
        the widths stay below one period; margins are reported.
    (b) Spread lattice (empirical): the pilot self-ambiguity away from the
        origin, over the difference set of S, must stay below ``threshold``
        times the peak.  Skipped (reported clean) when no pilot is given.
    """
    k_margin = params.M - 1 - S.k_width
    l_margin = params.N - 1 - S.l_width
    period_ok = S.k_width < params.M and S.l_width < params.N

    max_leak = 0.0
    spread_ok = True
    if pilot is not None:
        from .waveforms import spread_pilot

        xs = spread_pilot(params, pilot)
        dk = S.k_width
        dl = S.l_width
        window = [
            (a, b)
            for a in range(-dk, dk + 1)
            for b in range(-dl, dl + 1)
            if (a, b) != (0, 0)
        ]
        amb = cross_ambiguity(xs, xs, window)
        peak = xs.energy()
        max_leak = max(abs(v) for v in amb.taps.values()) / peak
        spread_ok = max_leak < threshold
    return CrystallizationReport(
        period_ok, spread_ok, k_margin, l_margin, float(max_leak), threshold
    )


# ---------------------------------------------------------------------------
# time-domain oracle
# ---------------------------------------------------------------------------

def _net_rc_response(params: ModulationParams, Q: int) -> np.ndarray:
    """Combined tx+rx raised-cosine spectral response on the oversampled grid."""
    L = params.mn
    j = np.fft.fftfreq(L * Q) * L * Q          # signed bin index
    f = np.abs(j) / L                          # |f| in units of B
    beta = params.beta_tau
    G = np.zeros(L * Q)
    G[f <= (1 - beta) / 2] = 1.0
    roll = (f > (1 - beta) / 2) & (f <= (1 + beta) / 2)
    if beta > 0:
        G[roll] = 0.5 * (1 + np.cos(np.pi * (f[roll] - (1 - beta) / 2) / beta))
    return G


def td_oracle(x: DDSignal, phys: PhysicalChannel, Q: int) -> DDSignal:
    """Independent time-domain channel realization (no noise).

    The critically sampled pulsone is treated as an impulse train on the
    oversampled cyclic grid.  Per path: Doppler as a time-domain complex
    exponential applied to the train, then a cyclic fractional delay via a
    spectral phase ramp (yielding the e^{j2pi nu (t - tau)} convention);
    paths are summed and the combined transmit+receive raised-cosine
    response is applied once, then the result is decimated and analyzed
    back to the DD domain.
    """
    if Q < 2:
        raise ValueError("oracle needs Q >= 2 so the shaped band fits")
    params = x.params
    L = params.mn
    LQ = L * Q
    fs = Q * params.bandwidth
    s0 = zak_inverse(x, 1).samples
    zs = np.zeros(LQ, dtype=np.complex128)
    zs[::Q] = s0
    t = np.arange(LQ) / fs
    f = np.fft.fftfreq(LQ, d=1.0 / fs)
    acc = np.zeros(LQ, dtype=np.complex128)
    for g, tau, nu in zip(phys.gains, phys.delays, phys.dopplers):
        mod = zs * np.exp(2j * np.pi * nu * t)
        acc += g * np.fft.fft(mod) * np.exp(-2j * np.pi * f * tau)
    y_over = np.fft.ifft(acc * _net_rc_response(params, Q)) * Q
    y = y_over[::Q]
    return zak_forward(TDSignal(params, y, Q=1))
