"""End-to-end runs: protocol simulation, characterization, IR benchmark, DSP loopback, key rate."""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .channel import ChannelParams, RandomSource, heterodyne_variance, received_mean, sample_heterodyne
from .config import ExperimentConfig
from .keymap import KeyMapParams, postselect_fraction_oracle, sift
from .phasespace import estimate_displaced_moments, qpsk_amplitudes, qpsk_state
from .polar import (
    CRC_BY_LENGTH,
    LeakAccount,
    SclConfig,
    fer_benchmark,
    k_for_efficiency,
    leak_ec_from_efficiency,
    reconcile_block,
    write_csv,
)
from .polar.bench import build_code
from .privacy import (
    KeyLengthParams,
    ToeplitzSeed,
    aggregate_skr,
    epsilon_budget,
    key_length,
    load_sidecar,
    toeplitz_hash,
    write_key,
)
from .protocol_tests import (
    AcceptanceSet,
    EnergyTestParams,
    acceptance_test,
    count_test_rounds,
    energy_test,
    gaussian_displaced_moments,
    select_test_rounds,
)

log = logging.getLogger(__name__)

# substream labels
_ALICE, _CHANNEL, _TESTS, _IR, _PA = 1, 2, 3, 4, 5


class StageAbort(RuntimeError):
    def __init__(self, stage: str, reason: str):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason


@dataclass
class RunReport:
    command: str
    seed: int
    config: dict
    stages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    aborted: bool = False
    abort_stage: str | None = None
    abort_reason: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_jsonable)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.command}-report.json"
        path.write_text(self.to_json())
        return path


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


class _Timer:
    def __init__(self, report: RunReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.name] = time.perf_counter() - self.t0
        return False


def channel_params(cfg: ExperimentConfig) -> ChannelParams:
    c = cfg.channel
    return ChannelParams(c.eta_ch, c.eta_d, c.nu_el, c.excess_noise)


def keymap_params(cfg: ExperimentConfig) -> KeyMapParams:
    p = cfg.protocol
    return KeyMapParams(p.delta_r, p.m_limit, p.phase_offset)


def expected_displacements(cfg: ExperimentConfig) -> dict[int, complex]:
    ch = channel_params(cfg)
    return {x: complex(received_mean(qpsk_state(x, cfg.protocol.amplitude), ch)) for x in range(4)}


def model_acceptance_set(cfg: ExperimentConfig) -> AcceptanceSet:
    """Acceptance set predicted by the Gaussian channel model."""
    exp = gaussian_displaced_moments(heterodyne_variance(channel_params(cfg)))
    p = cfg.protocol
    return AcceptanceSet.from_detection_limit(
        {x: dict(exp) for x in range(4)},
        p.m_limit,
        t_f=p.t_f,
        eps_at=cfg.epsilon.at,
        m_x=p.m_x,
        two_sided=p.two_sided,
        displacements=expected_displacements(cfg),
    )


def _simulate(cfg: ExperimentConfig, rng: RandomSource):
    symbols = rng.fork(_ALICE).generator.integers(0, 4, cfg.n_rounds)
    alpha = qpsk_amplitudes(symbols, cfg.protocol.amplitude)
    ch = channel_params(cfg)
    samples = sample_heterodyne(received_mean(alpha, ch), ch, rng.fork(_CHANNEL))
    return symbols, samples


def _state_moments(samples, symbols, displacements):
    out = {}
    for x in range(4):
        sel = samples[symbols == x]
        if sel.shape[0] == 0:
            raise StageAbort("acceptance_test", f"no test rounds for state {x}")
        out[x] = estimate_displaced_moments(sel, displacements[x])
    return out


def _design_qber(cfg: ExperimentConfig, observed: float) -> float:
    if cfg.ir.design_qber is not None:
        return cfg.ir.design_qber
    # snap to a coarse grid so repeated runs share the cached construction
    return round(min(max(round(observed / 0.005) * 0.005, 0.005), 0.495), 6)


def run_protocol(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Simulate one protocol execution; aborts are recorded, never raised."""
    report = RunReport("protocol", cfg.seed, cfg.resolved())
    rng = RandomSource(cfg.seed)
    try:
        _run_protocol(cfg, rng, report, out_dir)
    except StageAbort as exc:
        report.aborted = True
        report.abort_stage = exc.stage
        report.abort_reason = exc.reason
        log.warning("protocol aborted at %s: %s", exc.stage, exc.reason)
    if out_dir is not None:
        report.write(out_dir)
    return report


def _run_protocol(cfg: ExperimentConfig, rng: RandomSource, report: RunReport, out_dir) -> None:
    p = cfg.protocol
    eps = cfg.epsilon
    with _Timer(report, "simulate"):
        symbols, samples = _simulate(cfg, rng)
    report.stages["simulate"] = {"rounds": cfg.n_rounds}

    with _Timer(report, "energy_test"):
        test_idx, key_idx = select_test_rounds(cfg.n_rounds, p.testing_ratio, rng.fork(_TESTS))
        if p.beta_et <= 0:
            # every outcome sits at radius >= 0, so all are outliers
            report.stages["energy_test"] = {"k_t": int(test_idx.size), "outliers": int(test_idx.size), "allowed": 0, "passed": False}
            raise StageAbort("energy_test", "beta_ET = 0 makes every test round an outlier")
        et = energy_test(samples[test_idx], EnergyTestParams(p.beta_et, int(test_idx.size), p.outlier_fraction))
        report.stages["energy_test"] = {"k_t": int(test_idx.size), "outliers": et.outliers, "allowed": et.allowed, "passed": et.passed}
        if not et.passed:
            raise StageAbort("energy_test", f"{et.outliers} outliers exceed the allowance of {et.allowed}")

    with _Timer(report, "acceptance_test"):
        accept = AcceptanceSet.load(p.acceptance_file) if p.acceptance_file else model_acceptance_set(cfg)
        disp = accept.displacements or expected_displacements(cfg)
        observed = _state_moments(samples[test_idx], symbols[test_idx], disp)
        verdict = acceptance_test(observed, accept)
        report.stages["acceptance_test"] = {
            "passed": verdict.passed,
            "observed": {x: {"n": m.mean_n, "n2": m.mean_n2, "count": m.count} for x, m in observed.items()},
            "margins": {f"{s}:{k}": v for (s, k), v in verdict.margins.items()},
        }
        if not verdict.passed:
            raise StageAbort("acceptance_test", "observed moments fall outside the acceptance set")

    with _Timer(report, "sift"):
        sr = sift(samples[key_idx], symbols[key_idx], keymap_params(cfg))
        report.stages["sift"] = {
            "key_rounds": int(key_idx.size),
            "postselect_fraction": sr.postselect_fraction,
            "qber": sr.qber,
            "symbol_error_rate": sr.symbol_error_rate,
            "raw_bits": int(sr.bob_bits.size),
        }
        if not 0 < sr.qber < 0.5:
            raise StageAbort("sift", f"QBER {sr.qber} outside (0, 0.5)")

    with _Timer(report, "reconcile"):
        ir = cfg.ir
        n_ec = 1 << ir.n_log2
        q_design = _design_qber(cfg, sr.qber)
        scl = SclConfig(ir.list_size, CRC_BY_LENGTH.get(ir.crc_len), ir.exact)
        _, k = k_for_efficiency(ir.beta_qkd, q_design, n_ec, scl.crc_len)
        if k <= scl.crc_len:
            raise StageAbort("reconcile", "code dimension leaves no room for key bits")
        code = build_code(q_design, ir.n_log2, ir.beta_qkd, scl, RandomSource(ir.construction_seed), ir.construction, ir.mc_trials)
        blocks = sr.bob_bits.size // n_ec
        if blocks == 0:
            raise StageAbort("reconcile", f"only {sr.bob_bits.size} sifted bits, block length is {n_ec}")
        kept_bob, kept_alice = [], []
        disclosed = failures = 0
        for b in range(blocks):
            sl = slice(b * n_ec, (b + 1) * n_ec)
            res = reconcile_block(sr.bob_bits[sl], sr.alice_bits[sl], code, scl, q_design, ir.n_hash, rng.fork(_IR, 1, b))
            disclosed += res.disclosed_bits
            if res.success:
                kept_bob.append(sr.bob_bits[sl])
                kept_alice.append(res.corrected_block)
            else:
                failures += 1
        acct = LeakAccount(blocks, n_ec, k, ir.n_hash, failures, q_design, scl.crc_len)
        report.stages["reconcile"] = {
            "design_qber": q_design,
            "block_length": n_ec,
            "k": k,
            "blocks": blocks,
            "failures": failures,
            "fer": float(acct.fer),
            "beta_qkd": acct.beta_qkd,
            "disclosed_bits": disclosed,
            "leak_ec": acct.leak_total,
            "construction": code.construction_tag,
        }
        if not kept_bob:
            raise StageAbort("reconcile", "every block failed")

    with _Timer(report, "privacy_amplification"):
        budget = epsilon_budget(eps.pa, eps.bar, eps.et, eps.at, eps.ec)
        stage = {"eps_sec": budget.eps_sec, "eps_cor": budget.eps_cor, "eps_total": budget.eps_total}
        report.stages["privacy_amplification"] = stage
        if cfg.entropy_sidecar is None:
            stage["key_length"] = None
            stage["note"] = "no entropy sidecar supplied; key length not evaluated"
            return
        side = load_sidecar(cfg.entropy_sidecar)
        params = KeyLengthParams(
            n=int(key_idx.size),
            entropy_rate=side.entropy_rate,
            delta_bar=side.delta_bar,
            delta_w=side.delta_w,
            leak_ec=float(disclosed),
            eps_pa=eps.pa,
            eps_ec=eps.ec,
            eps_et=eps.et,
            eps_at=eps.at,
            eps_bar=eps.bar,
        )
        bound = key_length(params)
        bob_key = np.concatenate(kept_bob)
        alice_key = np.concatenate(kept_alice).astype(np.uint8)
        length = min(bound, bob_key.size)
        stage.update(
            {
                "key_length_bound": bound,
                "key_length": length,
                "reconciled_bits": int(bob_key.size),
                "secret_fraction_per_round": length / cfg.n_rounds,
            }
        )
        if length == 0:
            raise StageAbort("privacy_amplification", "key length bound is zero")
        seed = ToeplitzSeed.random(length, bob_key.size, rng.fork(_PA))
        stage["seed_bits"] = int(seed.bits.size)
        stage["seed_digest"] = seed.digest()
        kb = toeplitz_hash(bob_key, seed)
        ka = toeplitz_hash(alice_key, seed)
        stage["keys_match"] = bool(np.array_equal(ka, kb))
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_key(Path(out_dir) / "key.bin", kb, seed, budget)


def characterize(cfg: ExperimentConfig, out_dir=None) -> tuple[AcceptanceSet, RunReport]:
    """Honest run; the observed test-round moments become the expected ones."""
    report = RunReport("characterize", cfg.seed, cfg.resolved())
    rng = RandomSource(cfg.seed)
    symbols, samples = _simulate(cfg, rng)
    test_idx, _ = select_test_rounds(cfg.n_rounds, cfg.protocol.testing_ratio, rng.fork(_TESTS))
    disp = expected_displacements(cfg)
    obs = _state_moments(samples[test_idx], symbols[test_idx], disp)
    p = cfg.protocol
    accept = AcceptanceSet.from_detection_limit(
        {x: {"n": m.mean_n, "n2": m.mean_n2} for x, m in obs.items()},
        p.m_limit,
        t_f=p.t_f,
        eps_at=cfg.epsilon.at,
        m_x=p.m_x,
        two_sided=p.two_sided,
        displacements=disp,
    )
    report.stages["characterize"] = {"acceptance_set": accept.to_dict()}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        accept.save(Path(out_dir) / "acceptance.yaml")
        report.write(out_dir)
    return accept, report


def run_ir_bench(cfg: ExperimentConfig, out_dir=None, trials: int | None = None):
    """Sweep the IR grid and return the benchmark rows (also written as CSV)."""
    grid = cfg.ir_bench
    n_trials = trials if trials is not None else grid.trials
    rng = RandomSource(cfg.seed)
    results = []
    for i, (q, m, beta, L, c) in enumerate(itertools.product(grid.qbers, grid.n_log2, grid.betas, grid.list_sizes, grid.crc_lens)):
        scl = SclConfig(L, CRC_BY_LENGTH.get(c), cfg.ir.exact)
        code = build_code(q, m, beta, scl, RandomSource(cfg.ir.construction_seed), cfg.ir.construction, cfg.ir.mc_trials)
        results.append(fer_benchmark(q, m, beta, scl, n_trials, rng.fork(_IR, 99, i), code=code, n_hash=cfg.ir.n_hash, min_trials=1))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(results, Path(out_dir) / "ir_bench.csv")
    return results


def loopback_config(cfg: ExperimentConfig) -> dsp.LoopbackConfig:
    d = cfg.dsp
    return dsp.LoopbackConfig(
        n_symbols=d.n_symbols,
        symbol_rate=d.symbol_rate,
        dac_rate=d.dac_rate,
        adc_rate=d.adc_rate,
        rrc=dsp.RrcSpec(d.rolloff, d.span_symbols, d.samples_per_symbol),
        pilots=dsp.PilotConfig(d.pilot_period, d.pilot_ratio),
        tx_f3db=d.tx_f3db,
        rx_f3db=d.rx_f3db,
        eq_taps=d.eq_taps,
        gain_cap_db=d.gain_cap_db,
        cd=dsp.CdParams(d.dispersion, d.fiber_km, d.wavelength_nm) if d.cd_enabled else None,
        compensate_cd=d.compensate_cd,
        phase_offset=d.phase_offset,
        phase_drift=d.phase_drift,
        snr_db=d.snr_db,
    )


def run_dsp_loopback(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    report = RunReport("dsp-loopback", cfg.seed, cfg.resolved())
    gen = RandomSource(cfg.seed, (6,)).generator
    with _Timer(report, "loopback"):
        res = dsp.run_loopback(loopback_config(cfg), gen)
    report.stages["loopback"] = asdict(res)
    if out_dir is not None:
        report.write(out_dir)
    return report


def keep_fraction(cfg: ExperimentConfig) -> float:
    """Postselection survival probability from the channel model."""
    if cfg.keyrate.keep_fraction is not None:
        return cfg.keyrate.keep_fraction
    ch = channel_params(cfg)
    mean = received_mean(qpsk_state(0, cfg.protocol.amplitude), ch)
    return postselect_fraction_oracle(mean, heterodyne_variance(ch), keymap_params(cfg))


def asymptotic_leak(cfg: ExperimentConfig, key_rounds: int) -> float:
    """Leakage at the configured efficiency over the key rounds (two bits per kept symbol)."""
    kr = cfg.keyrate
    n_ec_total = 2.0 * key_rounds * keep_fraction(cfg)
    return leak_ec_from_efficiency(n_ec_total, kr.beta_qkd, kr.qber, kr.n_hash, 1 << kr.block_log2, kr.fer)


def keyrate(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Key length and rate per sidecar, plus the aggregate over all sidecars."""
    report = RunReport("keyrate", cfg.seed, cfg.resolved())
    kr = cfg.keyrate
    eps = cfg.epsilon
    total = int(round(kr.total_rounds))
    n = total - count_test_rounds(total, cfg.protocol.testing_ratio)
    leak = asymptotic_leak(cfg, n)
    sidecars = list(kr.sidecars) or ([cfg.entropy_sidecar] if cfg.entropy_sidecar else [])
    if not sidecars:
        raise ValueError("keyrate needs at least one entropy sidecar")
    rates = []
    for path in sidecars:
        side = load_sidecar(path)
        params = KeyLengthParams(n, side.entropy_rate, side.delta_bar, side.delta_w, leak, eps.pa, eps.ec, eps.et, eps.at, eps.bar)
        length = key_length(params)
        rates.append(length / total)
        report.stages[str(path)] = {"key_rounds": n, "leak_ec": leak, "key_length": length, "rate_per_symbol": length / total}
    budget = epsilon_budget(eps.pa, eps.bar, eps.et, eps.at, eps.ec)
    summary = {"eps_total": budget.eps_total, "keep_fraction": keep_fraction(cfg)}
    if len(rates) == 2:
        summary["secret_key_rate_bps"] = aggregate_skr(rates[0], rates[1], kr.symbol_rate)
    report.stages["summary"] = summary
    if out_dir is not None:
        report.write(out_dir)
    return report
