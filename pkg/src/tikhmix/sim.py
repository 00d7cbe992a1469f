"""Monte-Carlo packet simulation, operation counts and CSV output.

Every packet draws its info bits and channel from
``SeedSequence([seed, snr_index, packet])``, and all algorithms at one SNR see
the same packets. Results are merged in packet order, so the output does not
depend on the number of workers.

Output files (all in ``out``):

``results.csv``
    algo, ebn0_db, packets, bit_errors, bits, ber, ber_ci, packet_errors, per,
    per_ci, mean_iterations, oracle_tv, low_errors
``gamma.csv``
    algo, ebn0_db, iteration, packets, mean_order
``counts.csv``
    algo, ebn0_db, iteration, packets, mean_order, muls_per_symbol,
    luts_per_symbol, formula_muls, formula_luts, muls_ratio, luts_ratio

``*_ci`` columns are 95% normal-approximation half-widths. ``low_errors`` is 1
when fewer than 20 packet errors were seen. Wall time is kept out of the CSVs
so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .baselines import ORACLE_MAX_CELLS, DpConfig
from .channel import Constellation, FrameConfig, ChannelRealization, ebn0_to_sigma2, generate_realization
from .ldpc import resolve_code
from .mixture import ReductionConfig
from .spa import PRUNE_WEIGHT, SpaConfig, barb_config, initial_log_beliefs, run_turbo

ALGOS = ("unlimited", "limited", "select", "dp", "barb")
MIN_ERROR_EVENTS = 20
Z95 = 1.959963984540054
# detectors need a positive noise variance even when the channel adds none
NOISELESS_SIGMA2 = 1e-4


@dataclass
class SimConfig:
    """Experiment settings; field names double as config-file keys and CLI flags.

    ``algo`` lists detectors as ``name[:param]``: ``limited:2`` caps the order
    at 2, ``select:3`` likewise, ``dp:16`` sets Q. A bare ``limited`` or
    ``select`` uses ``max_order``.
    """

    mod_order: int = 8
    sigma_delta: float = 0.05
    ebn0: tuple = (8.0,)
    pilot_period: int = 20
    preamble: int = 1
    algo: tuple = ("limited:2",)
    max_order: int = 2
    epsilon: float = 4.0
    kl_mode: str = "exact"
    strategy: str = "cmvm"
    outer_iters: int = 4
    packets: int = 100
    seed: int = 1
    code: str = "highrate"
    out: Optional[str] = None
    instrument: bool = False
    oracle_check: bool = False
    oracle_q: int = 128
    early_stop: bool = True
    extrinsic: bool = True
    bp_iters: int = 50
    workers: int = 1
    plot: bool = False

    def __post_init__(self):
        self.ebn0 = tuple(float(v) for v in _as_list(self.ebn0))
        self.algo = tuple(str(a) for a in _as_list(self.algo))
        if self.mod_order < 2 or self.mod_order & (self.mod_order - 1):
            raise ValueError("mod_order must be a power of two >= 2")
        if self.sigma_delta < 0:
            raise ValueError("sigma_delta must be >= 0")
        if self.pilot_period < 0 or self.preamble < 0:
            raise ValueError("pilot_period and preamble must be >= 0")
        if self.max_order < 1 or self.outer_iters < 1 or self.packets < 1 or self.workers < 1:
            raise ValueError("max_order, outer_iters, packets and workers must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.ebn0:
            raise ValueError("need at least one Eb/N0 point")
        for a in self.algo:
            parse_algo(a, self.max_order)

    @classmethod
    def from_mapping(cls, data):
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in data.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            kw[name] = _coerce(known[name], raw)
        return cls(**kw)


def _as_list(v):
    if isinstance(v, str):
        return [s.strip() for s in v.split(",") if s.strip()]
    if isinstance(v, (int, float)):
        return [v]
    return list(v)


def _coerce(f, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    default = f.default
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{f.name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(_as_list(raw))
    return raw


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {no}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path, **overrides):
    with open(path) as fh:
        data = parse_config_text(fh.read())
    data.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig.from_mapping(data)


def parse_algo(spec, default_order=2):
    name, _, param = spec.partition(":")
    name = name.strip().lower()
    if name not in ALGOS:
        raise ValueError(f"unknown algorithm {spec!r}")
    if param and name in ("unlimited", "barb"):
        raise ValueError(f"{name} takes no parameter")
    value = int(param) if param else (16 if name == "dp" else default_order)
    if value < 1:
        raise ValueError(f"bad parameter in {spec!r}")
    return name, value


def make_detector(spec, cfg: SimConfig):
    name, value = parse_algo(spec, cfg.max_order)
    if name == "dp":
        return DpConfig(Q=value, name=f"dp:{value}")
    if name == "barb":
        return barb_config()
    if name == "select":
        red = ReductionConfig(epsilon=cfg.epsilon, max_order=value, kl_mode="coarse",
                              strategy="select", weight_arith="max", cmvm_mode="approx",
                              min_weight=PRUNE_WEIGHT)
        return SpaConfig(red, slip_recovery=True, llr_log_approx="linear",
                         approx_bessel=True, name=f"select:{value}")
    red = ReductionConfig(epsilon=cfg.epsilon, max_order=value if name == "limited" else None,
                          kl_mode=cfg.kl_mode, strategy=cfg.strategy, min_weight=PRUNE_WEIGHT)
    return SpaConfig(red, slip_recovery=(name == "limited"),
                     name=name if name == "unlimited" else f"limited:{value}")


def complexity_table(M, Q=16, gammas=()):
    """Per-symbol per-iteration MULS and LUT counts of the reference formulas.

    Returns ``{"dp": (muls, luts), "barb": (muls, luts), "limited": [(gamma, muls, luts), ...]}``.
    """
    if M < 1 or Q < 1 or any(g <= 0 for g in gammas):
        raise ValueError("inputs must be positive")
    dp = (4 * Q * Q * M * M + 2 * M * M * Q + 6 * M * Q + M, Q * M)
    barb = (7 * M + 5, 3 * M)
    lim = [(g, *limited_formula(M, g)) for g in gammas]
    return {"dp": dp, "barb": barb, "limited": lim}


def limited_formula(M, gamma):
    return 4 * M * gamma ** 2 + 2 * M * (gamma + 1), 3 * M * gamma ** 2 - gamma * (2 * M - 1)


def formula_counts(spec, cfg: SimConfig, gamma):
    name, value = parse_algo(spec, cfg.max_order)
    M = cfg.mod_order
    if name == "dp":
        return complexity_table(M, value)["dp"]
    if name == "barb":
        return complexity_table(M)["barb"]
    return limited_formula(M, gamma)


@dataclass
class PacketOutcome:
    bit_errors: int
    bits: int
    packet_error: bool
    orders: list
    muls: list
    luts: list
    oracle_tv: float = float("nan")


@dataclass
class SimResult:
    config: SimConfig
    rows: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    wall_time: float = 0.0
    outcomes: dict = field(default_factory=dict, repr=False)

    def row(self, algo, ebn0):
        for r in self.rows:
            if r["algo"] == algo and r["ebn0_db"] == ebn0:
                return r
        raise KeyError((algo, ebn0))

    def gamma_curve(self, algo, ebn0):
        return [g["mean_order"] for g in self.gamma if g["algo"] == algo and g["ebn0_db"] == ebn0]


def _packet_job(args):
    cfg, snr_idx, packet = args
    return packet, simulate_packet(cfg, snr_idx, packet)


def simulate_packet(cfg: SimConfig, snr_idx, packet):
    """Run every configured algorithm on one seeded packet; returns ``{algo: PacketOutcome}``."""
    code = resolve_code(cfg.code)
    C = Constellation(cfg.mod_order)
    b = C.bits_per_symbol
    if code.n % b:
        raise ValueError(f"code length {code.n} is not a multiple of {b} bits per symbol")
    ss = np.random.SeedSequence([cfg.seed, snr_idx, packet])
    bit_seed, chan_seed = ss.spawn(2)
    info = np.random.default_rng(bit_seed).integers(0, 2, code.k)
    cw = code.encode(info)
    frame = FrameConfig.for_data(code.n // b, cfg.pilot_period, cfg.preamble)
    sym = frame.assemble(C.map_bits(cw))
    ebn0 = cfg.ebn0[snr_idx]
    sigma2 = ebn0_to_sigma2(ebn0, b, code.rate, frame.n_data, frame.K)
    real = generate_realization(C.points[sym], sigma_delta=cfg.sigma_delta, seed=chan_seed,
                                sigma2=sigma2)
    if real.sigma2 < NOISELESS_SIGMA2:
        real = ChannelRealization(real.theta, real.r, NOISELESS_SIGMA2, real.sigma_delta,
                                  real.seed, real.symbols)
    oracle_pu = None
    if cfg.oracle_check:
        oracle = DpConfig(Q=cfg.oracle_q)
        if frame.K * oracle.L_total(C.M) > ORACLE_MAX_CELLS:
            raise ValueError("oracle grid exceeds the memory bound; lower oracle_q")
        oracle_pu, _ = oracle.detect(real, initial_log_beliefs(frame, C.M), frame, C)
    out = {}
    for spec in cfg.algo:
        det = make_detector(spec, cfg)
        res = run_turbo(real, frame, code, cfg.outer_iters, det, C, bp_iters=cfg.bp_iters,
                        early_stop=cfg.early_stop, extrinsic=cfg.extrinsic,
                        true_codeword=cw, instrument=cfg.instrument)
        errs = int(np.count_nonzero(res.info_bits != info))
        tv = float("nan")
        if oracle_pu is not None:
            first = det.detect(real, initial_log_beliefs(frame, C.M), frame, C)[0]
            tv = float(np.mean(0.5 * np.abs(np.exp(first) - np.exp(oracle_pu)).sum(axis=1)))
        out[spec] = PacketOutcome(
            errs, int(info.size), errs > 0,
            [s.mean_order for s in res.iterations],
            [s.muls / frame.K for s in res.iterations],
            [s.luts / frame.K for s in res.iterations],
            tv,
        )
    return out


def _validate_oracle(cfg: SimConfig):
    if not cfg.oracle_check:
        return
    code = resolve_code(cfg.code)
    b = int(math.log2(cfg.mod_order))
    frame = FrameConfig.for_data(code.n // b, cfg.pilot_period, cfg.preamble)
    if frame.K * cfg.oracle_q * cfg.mod_order > ORACLE_MAX_CELLS:
        raise ValueError(f"oracle grid K*L = {frame.K * cfg.oracle_q * cfg.mod_order} "
                         f"exceeds {ORACLE_MAX_CELLS}")


def _ci(p, n):
    return Z95 * math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else float("nan")


def _aggregate(cfg: SimConfig, outcomes):
    rows, gamma, counts, sparse = [], [], [], []
    for si, ebn0 in enumerate(cfg.ebn0):
        for spec in cfg.algo:
            per_packet = [outcomes[(si, p)][spec] for p in range(cfg.packets)]
            n = len(per_packet)
            bit_err = sum(o.bit_errors for o in per_packet)
            bits = sum(o.bits for o in per_packet)
            pkt_err = sum(o.packet_error for o in per_packet)
            ber, per = bit_err / bits, pkt_err / n
            low = pkt_err < MIN_ERROR_EVENTS
            if low:
                sparse.append(f"{spec}@{ebn0:g}dB")
            tvs = [o.oracle_tv for o in per_packet]
            rows.append({
                "algo": spec, "ebn0_db": ebn0, "packets": n,
                "bit_errors": bit_err, "bits": bits, "ber": ber, "ber_ci": _ci(ber, bits),
                "packet_errors": pkt_err, "per": per, "per_ci": _ci(per, n),
                "mean_iterations": float(np.mean([len(o.orders) for o in per_packet])),
                "oracle_tv": float(np.mean(tvs)) if cfg.oracle_check else float("nan"),
                "low_errors": int(low),
            })
            for it in range(cfg.outer_iters):
                ran = [o for o in per_packet if len(o.orders) > it]
                if not ran:
                    break
                g = float(np.mean([o.orders[it] for o in ran]))
                gamma.append({"algo": spec, "ebn0_db": ebn0, "iteration": it + 1,
                              "packets": len(ran), "mean_order": g})
                if cfg.instrument:
                    mu = float(np.mean([o.muls[it] for o in ran]))
                    lu = float(np.mean([o.luts[it] for o in ran]))
                    fm, fl = formula_counts(spec, cfg, g)
                    counts.append({"algo": spec, "ebn0_db": ebn0, "iteration": it + 1,
                                   "packets": len(ran), "mean_order": g,
                                   "muls_per_symbol": mu, "luts_per_symbol": lu,
                                   "formula_muls": fm, "formula_luts": fl,
                                   "muls_ratio": mu / fm if fm else float("nan"),
                                   "luts_ratio": lu / fl if fl else float("nan")})
    if sparse:
        warnings.warn(f"fewer than {MIN_ERROR_EVENTS} packet errors at {', '.join(sparse)}; "
                      "confidence half-widths are unreliable there", stacklevel=3)
    return rows, gamma, counts


RESULT_COLUMNS = ["algo", "ebn0_db", "packets", "bit_errors", "bits", "ber", "ber_ci",
                  "packet_errors", "per", "per_ci", "mean_iterations", "oracle_tv", "low_errors"]
GAMMA_COLUMNS = ["algo", "ebn0_db", "iteration", "packets", "mean_order"]
COUNT_COLUMNS = ["algo", "ebn0_db", "iteration", "packets", "mean_order", "muls_per_symbol",
                 "luts_per_symbol", "formula_muls", "formula_luts", "muls_ratio", "luts_ratio"]


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(round(v, 10)) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_outputs(result: SimResult, out):
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "results.csv"), RESULT_COLUMNS, result.rows)
    write_csv(os.path.join(out, "gamma.csv"), GAMMA_COLUMNS, result.gamma)
    if result.config.instrument:
        write_csv(os.path.join(out, "counts.csv"), COUNT_COLUMNS, result.counts)


def run(cfg: SimConfig) -> SimResult:
    """Simulate every (SNR, packet) pair and aggregate; writes CSVs when ``cfg.out`` is set."""
    _validate_oracle(cfg)
    t0 = time.perf_counter()
    jobs = [(cfg, si, p) for si in range(len(cfg.ebn0)) for p in range(cfg.packets)]
    outcomes = {}
    if cfg.workers == 1:
        for job in jobs:
            outcomes[(job[1], job[2])] = simulate_packet(*job)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for job, (_, res) in zip(jobs, pool.map(_packet_job, jobs, chunksize=4)):
                outcomes[(job[1], job[2])] = res
    rows, gamma, counts = _aggregate(cfg, outcomes)
    result = SimResult(cfg, rows, gamma, counts, time.perf_counter() - t0, outcomes)
    if cfg.out:
        write_outputs(result, cfg.out)
        if cfg.plot:
            from .plotting import render_all

            render_all(result, cfg.out)
    return result


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, **kw)
