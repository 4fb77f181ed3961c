"""Baseband waveform chain: shaping, resampling, equalization, dispersion, pilots.

A :class:`Waveform` carries the symbol timing along with its samples: symbol
``k`` sits at fractional sample index ``offset + k * sample_rate / symbol_rate``.
Every operation here is linear in the samples and keeps that timing up to date.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal

SPEED_OF_LIGHT = 299_792_458.0
WAVEFORM_MAGIC = b"DMWF"
WAVEFORM_VERSION = 1
_HEADER = "<4sHdddqQ"

# Kaiser beta of the anti-aliasing filter used for rate conversion; the scipy
# default of 5 leaves ~1e-3 ripple, too much for the round-trip budget
RESAMPLE_KAISER = 12.0


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: float
    symbol_rate: float | None = None
    # sample index (possibly fractional) of the first symbol instant
    offset: float = 0.0
    n_symbols: int | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128).reshape(-1)
        if s.size == 0:
            raise ValueError("waveform is empty")
        if not self.sample_rate > 0:
            raise ValueError("sample rate must be positive")
        if self.symbol_rate is not None and not self.symbol_rate > 0:
            raise ValueError("symbol rate must be positive")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def samples_per_symbol(self) -> float:
        if self.symbol_rate is None:
            raise ValueError("waveform has no symbol timing")
        return self.sample_rate / self.symbol_rate

    def symbol_positions(self) -> np.ndarray:
        if self.n_symbols is None:
            raise ValueError("waveform has no symbol count")
        return self.offset + np.arange(self.n_symbols) * self.samples_per_symbol

    def with_samples(self, samples, **changes) -> Waveform:
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class RrcSpec:
    rolloff: float = 0.4
    span_symbols: int = 64
    samples_per_symbol: int = 2

    def __post_init__(self):
        if not 0 < self.rolloff <= 1:
            raise ValueError("rolloff must lie in (0, 1]")
        if self.span_symbols < 8 or self.span_symbols % 2:
            raise ValueError("span must be an even number >= 8")
        if self.samples_per_symbol < 2:
            raise ValueError("need at least 2 samples per symbol")

    def taps(self) -> np.ndarray:
        half = self.span_symbols * self.samples_per_symbol // 2
        h = rrc_pulse(np.arange(-half, half + 1) / self.samples_per_symbol, self.rolloff)
        return h / math.sqrt(float(np.sum(h * h)))


def rrc_pulse(t, rolloff: float) -> np.ndarray:
    """Root-raised-cosine impulse response at times ``t`` in symbol periods."""
    t = np.asarray(t, dtype=float)
    b = rolloff
    out = np.empty_like(t)
    zero = np.isclose(t, 0.0, atol=1e-12)
    edge = np.isclose(np.abs(t), 1.0 / (4 * b), atol=1e-9)
    rest = ~(zero | edge)
    out[zero] = 1 - b + 4 * b / math.pi
    out[edge] = b / math.sqrt(2) * ((1 + 2 / math.pi) * math.sin(math.pi / (4 * b)) + (1 - 2 / math.pi) * math.cos(math.pi / (4 * b)))
    tr = t[rest]
    num = np.sin(math.pi * tr * (1 - b)) + 4 * b * tr * np.cos(math.pi * tr * (1 + b))
    den = math.pi * tr * (1 - (4 * b * tr) ** 2)
    out[rest] = num / den
    return out


def rrc_shape(symbols, spec: RrcSpec, symbol_rate: float = 1.0) -> Waveform:
    """Upsample by zero insertion and filter with unit-energy RRC taps (full convolution)."""
    sym = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    if sym.size == 0:
        raise ValueError("no symbols to shape")
    sps = spec.samples_per_symbol
    up = np.zeros((sym.size - 1) * sps + 1, dtype=np.complex128)
    up[::sps] = sym
    taps = spec.taps()
    out = np.convolve(up, taps)
    return Waveform(out, symbol_rate * sps, symbol_rate, (taps.size - 1) / 2, sym.size)


def matched_filter(w: Waveform, spec: RrcSpec) -> Waveform:
    """RRC matched filter at the waveform's own rate (must be ``spec``'s rate)."""
    if w.symbol_rate is not None and not math.isclose(w.samples_per_symbol, spec.samples_per_symbol):
        raise ValueError("matched filter expects the RRC design rate")
    taps = spec.taps()
    return w.with_samples(np.convolve(w.samples, taps[::-1].conj()), offset=w.offset + (taps.size - 1) / 2)


def fractional_delay(x: np.ndarray, delay: float) -> np.ndarray:
    """Band-limited delay by ``delay`` samples (circular, via FFT)."""
    f = np.fft.fftfreq(x.size)
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * math.pi * f * delay))


def sample_symbols(w: Waveform) -> np.ndarray:
    """Values at the symbol instants; fractional timing uses a band-limited shift."""
    pos = w.symbol_positions()
    frac = w.offset - math.floor(w.offset)
    x = w.samples
    start = math.floor(w.offset)
    if frac > 1e-9 and 1 - frac > 1e-9:
        x = fractional_delay(x, -frac)
        pos = pos - frac
    idx = np.rint(pos).astype(np.int64)
    if not np.allclose(idx, pos, atol=1e-6):
        raise ValueError("symbol instants do not fall on samples; resample first")
    if idx[-1] >= x.size or start < 0:
        raise ValueError("waveform too short for its symbols")
    return x[idx]


def rate_ratio(source: float, target: float, max_den: int = 10**4) -> Fraction:
    """Rational ``target / source``; anything not rational within 1e-12 is rejected."""
    if not (source > 0 and target > 0):
        raise ValueError("rates must be positive")
    ratio = Fraction(target / source).limit_denominator(max_den)
    if abs(float(ratio) - target / source) > 1e-12 * (target / source):
        raise ValueError(f"rate ratio {target / source!r} is not a small rational")
    return ratio


def resample(w: Waveform, target_rate: float) -> Waveform:
    """Polyphase rate conversion; sample ``k`` of the output is at input time ``k * down / up``."""
    ratio = rate_ratio(w.sample_rate, target_rate)
    if ratio == 1:
        return w
    up, down = ratio.numerator, ratio.denominator
    y = signal.resample_poly(w.samples, up, down, window=("kaiser", RESAMPLE_KAISER))
    return w.with_samples(y, sample_rate=target_rate, offset=w.offset * up / down)


@dataclass(frozen=True)
class DeviceResponse:
    """Tabulated complex frequency response.

    ``freqs`` in Hz (ascending).  When every tabulated frequency is non-negative
    the response is extended to negative frequencies by Hermitian symmetry, as
    for a real-valued device.
    """

    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if f.size < 2 or f.size != v.size:
            raise ValueError("need matching frequency and response arrays")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if not np.all(np.isfinite(v)):
            raise ValueError("response must be finite")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "values", v)

    @classmethod
    def flat(cls, f_max: float = 1e15) -> DeviceResponse:
        return cls(np.array([0.0, f_max]), np.ones(2))

    @classmethod
    def lowpass(cls, f3db: float, f_max: float = 2e11, points: int = 4001) -> DeviceResponse:
        """First-order low-pass ``1 / (1 + i f / f3db)``."""
        if not f3db > 0:
            raise ValueError("3-dB frequency must be positive")
        f = np.linspace(0.0, f_max, points)
        return cls(f, 1.0 / (1.0 + 1j * f / f3db))

    def __call__(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self.freqs[0] >= 0:
            a = np.abs(f)
            re = np.interp(a, self.freqs, self.values.real)
            im = np.interp(a, self.freqs, self.values.imag)
            return np.where(f < 0, re - 1j * im, re + 1j * im)
        return np.interp(f, self.freqs, self.values.real) + 1j * np.interp(f, self.freqs, self.values.imag)


def apply_response(w: Waveform, resp: DeviceResponse) -> Waveform:
    """Filter by the device response (circular FFT multiply)."""
    f = np.fft.fftfreq(w.samples.size, 1.0 / w.sample_rate)
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) * resp(f)))


def equalizer_taps(resp: DeviceResponse, sample_rate: float, taps: int = 255, gain_cap_db: float | None = 20.0, band: float = 0.8) -> np.ndarray:
    """Frequency-sampled FIR approximating ``1 / resp``.

    The inverse magnitude is capped at ``gain_cap_db``.  Outside ``band`` times
    Nyquist the target is blended back toward the in-band edge value with a
    raised-cosine taper, which keeps the FIR short without touching the band.
    """
    if taps < 3:
        raise ValueError("need at least 3 taps")
    if taps % 2 == 0:
        taps += 1
    f = np.fft.fftfreq(taps, 1.0 / sample_rate)
    h = resp(f)
    nyq = sample_rate / 2
    mag = np.abs(h)
    in_band = np.abs(f) <= band * nyq
    if gain_cap_db is None:
        if np.any(mag[in_band] == 0):
            raise ValueError("response vanishes in band and no gain cap is set")
        inv = 1.0 / h
    else:
        floor = 10.0 ** (-gain_cap_db / 20.0)
        safe = np.where(mag > 0, h, floor)
        inv = np.where(mag >= floor, 1.0 / safe, np.exp(-1j * np.angle(safe)) / floor)
    # taper the excursion beyond the band edge toward the edge value
    edge_f = band * nyq
    edge = 1.0 / resp(np.array([edge_f]))[0] if gain_cap_db is None else inv[np.argmin(np.abs(np.abs(f) - edge_f))]
    a = np.clip((np.abs(f) - edge_f) / max(nyq - edge_f, 1e-300), 0.0, 1.0)
    blend = 0.5 * (1 - np.cos(math.pi * a))
    inv = np.where(in_band, inv, (1 - blend) * inv + blend * np.abs(edge) * np.exp(1j * np.angle(inv)))
    h_t = np.fft.fftshift(np.fft.ifft(inv))
    return h_t * np.kaiser(taps, 6.0)


def equalize(w: Waveform, resp: DeviceResponse, taps: int = 255, gain_cap_db: float | None = 20.0) -> Waveform:
    """Apply the inverse-response FIR, centred so timing is unchanged."""
    h = equalizer_taps(resp, w.sample_rate, taps, gain_cap_db)
    return w.with_samples(signal.convolve(w.samples, h, mode="same", method="auto"))


@dataclass(frozen=True)
class CdParams:
    dispersion: float = 17.0  # ps / (nm km)
    length_km: float = 10.0
    wavelength_nm: float = 1550.0

    def __post_init__(self):
        for name in ("dispersion", "length_km", "wavelength_nm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.length_km < 0:
            raise ValueError("length must be non-negative")
        if not self.wavelength_nm > 0:
            raise ValueError("wavelength must be positive")

    @property
    def phase_coefficient(self) -> float:
        """``pi D L lambda^2 / c`` in s^2 (radians per Hz^2)."""
        d = self.dispersion * 1e-6  # s / m^2
        lam = self.wavelength_nm * 1e-9
        return math.pi * d * self.length_km * 1e3 * lam * lam / SPEED_OF_LIGHT


def cd_transfer(f, params: CdParams, sign: int = 1) -> np.ndarray:
    return np.exp(sign * 1j * params.phase_coefficient * np.asarray(f, dtype=float) ** 2)


def cd_apply(w: Waveform, params: CdParams) -> Waveform:
    f = np.fft.fftfreq(w.samples.size, 1.0 / w.sample_rate)
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) * cd_transfer(f, params, 1)))


def cd_compensate(w: Waveform, params: CdParams) -> Waveform:
    f = np.fft.fftfreq(w.samples.size, 1.0 / w.sample_rate)
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) * cd_transfer(f, params, -1)))


@dataclass(frozen=True)
class PilotConfig:
    period_symbols: int = 64
    amplitude_ratio: float = 10.0
    phase: float = 0.0

    def __post_init__(self):
        if self.period_symbols < 2:
            raise ValueError("pilot period must be >= 2")
        if not self.amplitude_ratio > 1:
            raise ValueError("pilots must be stronger than the quantum symbols")


def pilot_positions(n_symbols: int, cfg: PilotConfig) -> np.ndarray:
    pos = np.arange(0, n_symbols, cfg.period_symbols)
    if pos[-1] != n_symbols - 1:
        pos = np.append(pos, n_symbols - 1)
    return pos


def insert_pilots(data, cfg: PilotConfig, reference_amplitude: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Frame with a pilot every ``period`` symbols and one closing pilot.

    Returns ``(frame, pilot_mask)``.  Pilot amplitude is ``amplitude_ratio``
    times the RMS data amplitude unless ``reference_amplitude`` is given.
    """
    data = np.asarray(data, dtype=np.complex128).reshape(-1)
    if data.size == 0:
        raise ValueError("no data symbols")
    per = cfg.period_symbols - 1
    blocks = -(-data.size // per)
    n = blocks * cfg.period_symbols + 1
    mask = np.zeros(n, dtype=bool)
    mask[pilot_positions(n, cfg)] = True
    ref = reference_amplitude if reference_amplitude is not None else float(np.sqrt(np.mean(np.abs(data) ** 2)))
    frame = np.zeros(n, dtype=np.complex128)
    frame[mask] = cfg.amplitude_ratio * ref * np.exp(1j * cfg.phase)
    slots = np.flatnonzero(~mask)[: data.size]
    frame[slots] = data
    return frame, mask


def remove_pilots(frame, mask, n_data: int | None = None) -> np.ndarray:
    out = np.asarray(frame)[~np.asarray(mask)]
    return out if n_data is None else out[:n_data]


def estimate_pilot_phases(w: Waveform, cfg: PilotConfig, rolloff: float = 0.4, span_symbols: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Phase of each pilot relative to its nominal phase, at any sample rate.

    Correlates the waveform with the RRC pulse centred on each pilot instant,
    which is the matched-filter output there, so neighbours cancel by the
    Nyquist property.  Returns ``(instants, phases)`` with instants in samples.
    """
    if w.n_symbols is None:
        raise ValueError("waveform has no symbol timing")
    ppos = pilot_positions(w.n_symbols, cfg)
    if ppos.size < 2:
        raise ValueError("need at least two pilots")
    sps = w.samples_per_symbol
    t = w.offset + ppos * sps
    half = int(math.ceil(span_symbols / 2 * sps))
    k = np.arange(-half, half + 1)
    out = np.empty(t.size, dtype=np.complex128)
    x = w.samples
    for i, ti in enumerate(t):
        c = int(round(ti))
        idx = c + k
        ok = (idx >= 0) & (idx < x.size)
        g = rrc_pulse((idx[ok] - ti) / sps, rolloff)
        out[i] = np.dot(x[idx[ok]], g)
    if np.any(out == 0):
        raise ValueError("pilot missing from waveform")
    return t, np.unwrap(np.angle(out)) - cfg.phase


def phase_recover(w: Waveform, cfg: PilotConfig, rolloff: float = 0.4) -> Waveform:
    """Derotate by the pilot phase, interpolated linearly between pilots."""
    t, ph = estimate_pilot_phases(w, cfg, rolloff)
    phi = np.interp(np.arange(w.samples.size), t, ph)
    return w.with_samples(w.samples * np.exp(-1j * phi))


def apply_phase(w: Waveform, phase) -> Waveform:
    """Rotate sample ``k`` by ``phase[k]`` (scalar or array)."""
    return w.with_samples(w.samples * np.exp(1j * np.asarray(phase, dtype=float)))


def qpsk_decide(values) -> np.ndarray:
    """Nearest QPSK symbol index for phases ``x pi/2 + pi/4``."""
    theta = np.mod(np.angle(np.asarray(values)), 2 * np.pi)
    return np.minimum(np.floor(2 * theta / np.pi).astype(np.int64), 3)


def evm(received, reference) -> float:
    """RMS error vector relative to RMS reference amplitude, after a best-fit complex gain."""
    r = np.asarray(received)
    x = np.asarray(reference)
    g = np.vdot(x, r) / np.vdot(x, x)
    return float(np.sqrt(np.mean(np.abs(r / g - x) ** 2) / np.mean(np.abs(x) ** 2)))


def write_waveform(w: Waveform, path) -> None:
    """Little-endian header then interleaved float64 (re, im) pairs."""
    header = struct.pack(
        _HEADER,
        WAVEFORM_MAGIC,
        WAVEFORM_VERSION,
        w.sample_rate,
        w.symbol_rate or 0.0,
        w.offset,
        -1 if w.n_symbols is None else w.n_symbols,
        w.samples.size,
    )
    body = np.empty(2 * w.samples.size, dtype="<f8")
    body[0::2] = w.samples.real
    body[1::2] = w.samples.imag
    Path(path).write_bytes(header + body.tobytes())


def read_waveform(path) -> Waveform:
    raw = Path(path).read_bytes()
    size = struct.calcsize(_HEADER)
    if len(raw) < size:
        raise ValueError("truncated waveform file")
    magic, version, rate, sym_rate, offset, n_sym, count = struct.unpack(_HEADER, raw[:size])
    if magic != WAVEFORM_MAGIC:
        raise ValueError("not a waveform file")
    if version != WAVEFORM_VERSION:
        raise ValueError(f"unsupported waveform version {version}")
    body = np.frombuffer(raw[size:], dtype="<f8")
    if body.size != 2 * count:
        raise ValueError("sample count does not match header")
    return Waveform(body[0::2] + 1j * body[1::2], rate, sym_rate or None, offset, None if n_sym < 0 else n_sym)


@dataclass(frozen=True)
class LoopbackConfig:
    """Synthetic Tx/Rx chain.

    Rates keep the 40 : 65 : 50 proportions of symbol rate, DAC rate and ADC
    rate, each doubled so the shaped signal is sampled above Nyquist.
    """

    n_symbols: int = 10_000
    symbol_rate: float = 40e9
    dac_rate: float = 130e9
    adc_rate: float = 100e9
    rrc: RrcSpec = RrcSpec()
    pilots: PilotConfig = PilotConfig()
    tx_f3db: float | None = 7.8e9
    rx_f3db: float | None = 7.8e9
    eq_taps: int = 1023
    gain_cap_db: float = 20.0
    cd: CdParams | None = CdParams()
    compensate_cd: bool = True
    phase_offset: float = 0.0
    phase_drift: float = 0.0  # total linear drift over the block, rad
    # data-symbol SNR at the matched-filter output for noise added at the ADC;
    # the receiver equalizer enhances it further
    snr_db: float | None = None


@dataclass(frozen=True)
class LoopbackReport:
    symbol_error_rate: float
    evm: float
    max_isi: float
    residual_phase: float  # common rotation left after recovery, rad
    phase_error_rms: float  # per-symbol phase error, rad
    n_symbols: int


def run_loopback(cfg: LoopbackConfig, rng: np.random.Generator) -> LoopbackReport:
    """Shape, pre-equalize, disperse, rotate, then undo it all and decide symbols."""
    tx_sym = rng.integers(0, 4, cfg.n_symbols)
    data = np.exp(1j * (tx_sym * np.pi / 2 + np.pi / 4))
    frame, mask = insert_pilots(data, cfg.pilots, 1.0)
    base_rate = cfg.symbol_rate * cfg.rrc.samples_per_symbol
    w = rrc_shape(frame, cfg.rrc, cfg.symbol_rate)
    w = resample(w, cfg.dac_rate)
    if cfg.tx_f3db is not None:
        tx = DeviceResponse.lowpass(cfg.tx_f3db)
        w = apply_response(equalize(w, tx, cfg.eq_taps, cfg.gain_cap_db), tx)
    if cfg.cd is not None:
        w = cd_apply(w, cfg.cd)
    n = len(w)
    true_phase = cfg.phase_offset + cfg.phase_drift * np.arange(n) / n
    w = apply_phase(w, true_phase)
    w = resample(w, cfg.adc_rate)
    rx = DeviceResponse.lowpass(cfg.rx_f3db) if cfg.rx_f3db is not None else None
    if rx is not None:
        w = apply_response(w, rx)
    if cfg.snr_db is not None:
        # the matched filter runs at the base rate, where white noise keeps
        # base/adc of its per-sample variance and the unit-energy taps pass it unchanged
        sigma2 = 10 ** (-cfg.snr_db / 10) * w.samples_per_symbol / cfg.rrc.samples_per_symbol
        noise = rng.normal(0, np.sqrt(sigma2 / 2), (len(w), 2)) @ np.array([1, 1j])
        w = w.with_samples(w.samples + noise)
    if cfg.cd is not None and cfg.compensate_cd:
        w = cd_compensate(w, cfg.cd)
    if rx is not None:
        w = equalize(w, rx, cfg.eq_taps, cfg.gain_cap_db)
    w = phase_recover(w, cfg.pilots, cfg.rrc.rolloff)
    w = resample(w, base_rate)
    y = sample_symbols(matched_filter(w, cfg.rrc))
    rx_data = remove_pilots(y, mask, data.size)
    err = rx_data - data
    ph = np.angle(rx_data / data)
    return LoopbackReport(
        symbol_error_rate=float(np.mean(qpsk_decide(rx_data) != tx_sym)),
        evm=evm(rx_data, data),
        max_isi=float(np.max(np.abs(err))),
        residual_phase=float(abs(np.angle(np.vdot(data, rx_data)))),
        phase_error_rms=float(np.sqrt(np.mean(ph**2))),
        n_symbols=int(data.size),
    )
