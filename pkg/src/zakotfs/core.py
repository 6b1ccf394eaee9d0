"""Discrete delay-Doppler algebra.

Quasi-periodic signals on an M x N fundamental domain, finitely supported
DD filters, twisted convolution, the discrete Zak transform pair,
cross-ambiguity surfaces and PAPR of time-domain realizations.

Conventions used throughout:
  * fundamental-domain storage is delay-major: ``fd[k, l]``;
  * the discrete twisted-convolution kernel is exp(j2pi l' (k - k')/(MN)),
    obtained from the continuous kernel exp(j2pi nu' (tau - tau')) with
    tau-step tau_p/M, nu-step nu_p/N and tau_p*nu_p = 1;
  * time-domain realizations are cyclic over one subframe (M*N samples at
    rate M*nu_p), which is exact for quasi-periodic signals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import resample

__all__ = [
    "ParameterMismatchError",
    "ModulationParams",
    "DDSignal",
    "DDFilter",
    "TDSignal",
    "twisted_convolve_fs",
    "twisted_convolve_ff",
    "zak_inverse",
    "zak_forward",
    "cross_ambiguity",
    "papr_db",
    "write_golden",
    "read_golden",
]


class ParameterMismatchError(ValueError):
    """Operands carry different modulation parameters."""


@dataclass(frozen=True)
class ModulationParams:
    """Frame geometry: an M x N information grid on one (tau_p, nu_p) period.

    Attributes:
        M: delay bins per delay period (>= 2).
        N: Doppler bins per Doppler period (>= 2).
        nu_p: Doppler period in Hz.
        tau_p: delay period in seconds; defaults to 1/nu_p and must satisfy
            tau_p * nu_p = 1 to relative tolerance 1e-12.
        beta_tau, beta_nu: roll-off factors of the delay/Doppler shaping
            pulses, in [0, 1].
    """

    M: int
    N: int
    nu_p: float
    tau_p: float = None  # type: ignore[assignment]
    beta_tau: float = 0.6
    beta_nu: float = 0.6

    def __post_init__(self):
        if self.M < 2 or self.N < 2:
            raise ValueError(f"need M >= 2 and N >= 2, got M={self.M}, N={self.N}")
        if self.nu_p <= 0:
            raise ValueError("nu_p must be positive")
        if self.tau_p is None:
            object.__setattr__(self, "tau_p", 1.0 / self.nu_p)
        if abs(self.tau_p * self.nu_p - 1.0) > 1e-12:
            raise ValueError(
                f"tau_p * nu_p = {self.tau_p * self.nu_p!r}, must equal 1"
            )
        for name in ("beta_tau", "beta_nu"):
            b = getattr(self, name)
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {b}")

    @property
    def mn(self) -> int:
        return self.M * self.N

    @property
    def bandwidth(self) -> float:
        """B = M * nu_p."""
        return self.M * self.nu_p

    @property
    def duration(self) -> float:
        """T = N * tau_p."""
        return self.N * self.tau_p

    @property
    def delay_res(self) -> float:
        """Delay bin width tau_p / M = 1/B."""
        return self.tau_p / self.M

    @property
    def doppler_res(self) -> float:
        """Doppler bin width nu_p / N = 1/T."""
        return self.nu_p / self.N


def _check_params(a, b):
    if a.params != b.params:
        raise ParameterMismatchError(
            f"modulation parameters differ: {a.params} vs {b.params}"
        )


@dataclass(frozen=True, eq=False)
class DDSignal:
    """A quasi-periodic DD-domain signal stored on one fundamental domain.

    The value at any integer pair follows from quasi-periodicity:
    value(k + nM, l + mN) = exp(j2pi n l / N) * value(k, l).
    """

    params: ModulationParams
    fd: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.fd, dtype=np.complex128)
        if arr.shape != (self.params.M, self.params.N):
            raise ValueError(
                f"fd shape {arr.shape} != (M, N) = ({self.params.M}, {self.params.N})"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "fd", arr)

    @classmethod
    def zeros(cls, params: ModulationParams) -> "DDSignal":
        return cls(params, np.zeros((params.M, params.N), dtype=np.complex128))

    def evaluate(self, k, l):
        """Evaluate at integer (k, l) anywhere on the plane.

        Returns fd[k mod M, l mod N] * exp(j2pi floor(k/M) l / N). The phase
        uses the unreduced l; shifting l by a multiple of N leaves it
        unchanged, so the reduction in l is harmless.
        """
        M, N = self.params.M, self.params.N
        k = np.asarray(k)
        l = np.asarray(l)
        phase = np.exp(2j * np.pi * np.floor_divide(k, M) * l / N)
        val = self.fd[np.mod(k, M), np.mod(l, N)] * phase
        if val.ndim == 0:
            return complex(val)
        return val

    def energy(self) -> float:
        """Fundamental-domain energy sum |fd|^2."""
        return float(np.sum(np.abs(self.fd) ** 2))

    def __add__(self, other: "DDSignal") -> "DDSignal":
        _check_params(self, other)
        return DDSignal(self.params, self.fd + other.fd)

    def __sub__(self, other: "DDSignal") -> "DDSignal":
        _check_params(self, other)
        return DDSignal(self.params, self.fd - other.fd)

    def __mul__(self, scalar) -> "DDSignal":
        return DDSignal(self.params, self.fd * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class DDFilter:
    """A finitely supported (non-quasi-periodic) DD filter.

    Taps are a map from integer (k, l) offsets to complex values. Tap
    indices are unreduced: a tap at Doppler index l + N acts differently
    from one at l (the twisted phase differs), which is how responses wider
    than one period are represented.
    """

    params: ModulationParams
    taps: dict

    def __post_init__(self):
        object.__setattr__(self, "taps", dict(self.taps))

    @classmethod
    def single_tap(cls, params, k: int, l: int, value=1.0) -> "DDFilter":
        return cls(params, {(int(k), int(l)): complex(value)})

    @classmethod
    def from_arrays(cls, params, ks, ls, values) -> "DDFilter":
        taps = {}
        for k, l, v in zip(ks, ls, values):
            key = (int(k), int(l))
            taps[key] = taps.get(key, 0.0) + complex(v)
        return cls(params, taps)

    def sorted_items(self):
        """Deterministic (position-sorted) tap list."""
        return sorted(self.taps.items())

    def positions(self) -> np.ndarray:
        return np.array(sorted(self.taps), dtype=np.int64).reshape(-1, 2)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.sorted_items()], dtype=np.complex128)

    def energy(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.taps.values()))

    def scaled(self, c) -> "DDFilter":
        return DDFilter(self.params, {p: c * v for p, v in self.taps.items()})


@dataclass(frozen=True, eq=False)
class TDSignal:
    """Cyclic time-domain realization: M*N*Q samples at rate Q*M*nu_p."""

    params: ModulationParams
    samples: np.ndarray
    Q: int = 1
    cyclic: bool = True

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.complex128)
        expected = self.params.mn * self.Q
        if arr.shape != (expected,):
            raise ValueError(f"need {expected} samples, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


# ---------------------------------------------------------------------------
# twisted convolution
# ---------------------------------------------------------------------------

@lru_cache(maxsize=6)
def _shift_kernel(M: int, N: int, pos_bytes: bytes, conj_twist: bool):
    """Gather indices and phases for evaluating a signal at shifted positions.

    For shifts (a_t, b_t) the stack entry gives, per output cell (k, l),
    evaluate(x, k - a_t, l - b_t) * exp(+-j2pi b_t (k - a_t)/(MN)) as
    x.fd[iK, iL] * phase.  Cached on the shift positions only, so repeated
    filters on a fixed support reuse it.
    """
    pos = np.frombuffer(pos_bytes, dtype=np.int64).reshape(-1, 2)
    a = pos[:, 0][:, None]
    b = pos[:, 1][:, None]
    kk = np.arange(M)[None, :]
    ll = np.arange(N)[None, :]
    u = kk - a                       # (T, M)
    w = ll - b                       # (T, N)
    iK = np.mod(u, M)
    iL = np.mod(w, N)
    fK = np.floor_divide(u, M)
    sign = -1.0 if conj_twist else 1.0
    phase = np.exp(
        2j * np.pi * (fK[:, :, None] * w[:, None, :] / N
                      + sign * b[:, :, None] * u[:, :, None] / (M * N))
    )
    return iK, iL, phase


def _filter_kernel(h: DDFilter, conj_twist: bool = False):
    pos = h.positions()
    return pos, _shift_kernel(h.params.M, h.params.N, pos.tobytes(), conj_twist)


def twisted_convolve_fs(h: DDFilter, x: DDSignal) -> DDSignal:
    """Twisted convolution of a filter with a quasi-periodic signal.

    y[k, l] = sum_taps h[k', l'] * x(k - k', l - l') * exp(j2pi l'(k - k')/(MN))
    evaluated on the fundamental domain; the result is quasi-periodic by
    construction.
    """
    _check_params(h, x)
    if not h.taps:
        return DDSignal.zeros(x.params)
    pos, (iK, iL, phase) = _filter_kernel(h)
    vals = h.values()
    gathered = x.fd[iK[:, :, None], iL[:, None, :]]
    out = np.einsum("t,tkl->kl", vals, gathered * phase, optimize=True)
    return DDSignal(x.params, out)


def twisted_convolve_ff(a: DDFilter, b: DDFilter) -> DDFilter:
    """Compose two DD filters: support is the Minkowski sum of supports."""
    _check_params(a, b)
    mn = a.params.mn
    out: dict = {}
    for (ka, la), va in a.taps.items():
        for (kb, lb), vb in b.taps.items():
            key = (ka + kb, la + lb)
            out[key] = out.get(key, 0.0) + va * vb * np.exp(
                2j * np.pi * la * kb / mn
            )
    return DDFilter(a.params, out)


# ---------------------------------------------------------------------------
# Zak transform pair
# ---------------------------------------------------------------------------

def zak_inverse(x: DDSignal, Q: int = 1) -> TDSignal:
    """Synthesize the cyclic time-domain realization of a DD signal.

    For Q = 1, td[k + nM] = (1/sqrt(N)) sum_l fd[k, l] exp(j2pi n l / N);
    this map is unitary.  For Q > 1 the Q = 1 sequence is oversampled by
    cyclic spectral zero-padding (band-limited interpolation).
    """
    if Q < 1:
        raise ValueError("Q must be a positive integer")
    N = x.params.N
    td_mat = np.fft.ifft(x.fd, axis=1) * np.sqrt(N)
    samples = td_mat.flatten(order="F")
    if Q > 1:
        samples = resample(samples, Q * x.params.mn)
    return TDSignal(x.params, samples, Q=Q)


def zak_forward(td: TDSignal) -> DDSignal:
    """Analyze a critically sampled cyclic waveform back to the DD domain.

    fd[k, l] = (1/sqrt(N)) sum_n td[k + nM] exp(-j2pi n l / N); inverse of
    ``zak_inverse(. , 1)``.
    """
    if td.Q != 1:
        raise ValueError("zak_forward expects a critically sampled signal (Q=1)")
    M, N = td.params.M, td.params.N
    mat = td.samples.reshape((M, N), order="F")
    fd = np.fft.fft(mat, axis=1) / np.sqrt(N)
    return DDSignal(td.params, fd)


# ---------------------------------------------------------------------------
# cross-ambiguity
# ---------------------------------------------------------------------------

def _window_offsets(window) -> np.ndarray:
    if hasattr(window, "offsets"):
        window = window.offsets()
    pos = np.array([(int(k), int(l)) for k, l in window], dtype=np.int64)
    return pos.reshape(-1, 2)


def cross_ambiguity(y: DDSignal, x: DDSignal, window) -> DDFilter:
    """Correlate y against DD shifts of x over a finite offset window.

    A[k, l] = sum over one fundamental domain of
    y[k', l'] * conj(x(k' - k, l' - l)) * exp(-j2pi l (k' - k)/(MN)).
    """
    _check_params(y, x)
    pos = _window_offsets(window)
    M, N = y.params.M, y.params.N
    iK, iL, phase = _shift_kernel(M, N, pos.tobytes(), conj_twist=False)
    stack = np.conj(x.fd[iK[:, :, None], iL[:, None, :]] * phase)
    vals = np.einsum("kl,tkl->t", y.fd, stack, optimize=True)
    return DDFilter.from_arrays(y.params, pos[:, 0], pos[:, 1], vals)


# ---------------------------------------------------------------------------
# PAPR
# ---------------------------------------------------------------------------

def papr_db(td: TDSignal) -> float:
    """Peak-to-average power ratio of a waveform in dB."""
    p = np.abs(td.samples) ** 2
    mean = p.mean()
    if mean == 0.0:
        raise ValueError("PAPR undefined for the zero signal")
    return float(10.0 * np.log10(p.max() / mean))


# ---------------------------------------------------------------------------
# golden-file format: one line per cell, "k,l,re,im", 17 significant digits
# ---------------------------------------------------------------------------

def write_golden(signal: DDSignal, path):
    with open(path, "w") as fh:
        for k in range(signal.params.M):
            for l in range(signal.params.N):
                v = signal.fd[k, l]
                fh.write(f"{k},{l},{v.real:.17g},{v.imag:.17g}\n")


def read_golden(path, params: ModulationParams) -> DDSignal:
    fd = np.zeros((params.M, params.N), dtype=np.complex128)
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k, l, re, im = line.split(",")
            fd[int(k), int(l)] = float(re) + 1j * float(im)
    return DDSignal(params, fd)
