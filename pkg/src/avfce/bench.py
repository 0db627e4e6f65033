"""NMSE and latency harness.

Every evaluation cell (method, SNR, NFE) owns a noise stream derived from
the master seed, so reports are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import zlib
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .autodiff import checked_mode
from .baselines import apply_lmmse, fit_lmmse
from .checkpoint import Checkpoint
from .flow import denoise, infer
from .metrics import nmse_db
from .signal import PilotMatrix, SnrSpec, ls_decorrelate, to_angular, transmit

REPORT_COLUMNS = (
    "method",
    "snr_db",
    "nfe",
    "nmse_db",
    "latency_ms_median",
    "latency_ms_p90",
    "n_samples",
    "seed",
)
SWEEP_COLUMNS = ("method", "snr_db", "nfe", "nmse_db", "gain_db", "n_samples", "seed")
BASELINE_METHODS = ("ls", "lmmse", "lmmse-identity")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isinf(value):
        return "-inf" if value < 0 else "inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def _json_value(value):
    text = _fmt(value)
    if value is None:
        return None
    if isinstance(value, str) or text in ("-inf", "inf", "nan"):
        return text
    if isinstance(value, (int, np.integer)):
        return int(value)
    return float(text)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    columns: tuple = REPORT_COLUMNS
    checks: list = field(default_factory=list)

    def add(self, **row) -> None:
        missing = set(self.columns) - set(row)
        for key in missing:
            row[key] = None
        self.rows.append(row)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return out.getvalue()

    def to_json(self) -> str:
        doc = {
            "columns": list(self.columns),
            "rows": [{c: _json_value(row[c]) for c in self.columns} for row in self.rows],
        }
        if self.checks:
            doc["checks"] = self.checks
        return json.dumps(doc, indent=2) + "\n"

    def lookup(self, method: str, snr_db: float, nfe: int = 1) -> dict:
        for row in self.rows:
            if row["method"] == method and row["snr_db"] == snr_db and row["nfe"] == nfe:
                return row
        raise KeyError((method, snr_db, nfe))


def cell_seed(master: int, method: str, snr_db: float, nfe: int) -> np.random.SeedSequence:
    snr_key = int(round(snr_db * 1000)) + 10**9
    return np.random.SeedSequence([int(master), zlib.crc32(method.encode()), snr_key, int(nfe)])


def observe(H, snr_db: float, rng: np.random.Generator, pilots: PilotMatrix | None = None) -> np.ndarray:
    """Pilot transmission plus LS decorrelation for a batch of channels."""
    pilots = pilots or PilotMatrix.dft(H.shape[-1])
    return ls_decorrelate(transmit(H, pilots, SnrSpec(snr_db), rng), pilots)


def _chunked(fn, X, chunk: int = 128):
    return np.concatenate([fn(X[i : i + chunk]) for i in range(0, len(X), chunk)])


class Harness:
    """Holds the evaluation channels and the competing estimators."""

    def __init__(self, channels, models: dict | None = None, lmmse_train=None, seed: int = 0,
                 min_samples: int = 1):
        self.channels = np.asarray(channels, dtype=np.complex128)
        if len(self.channels) < min_samples:
            raise ValueError(f"need at least {min_samples} evaluation samples, got {len(self.channels)}")
        self.models = {}
        for label, model in (models or {}).items():
            if isinstance(model, Checkpoint):
                model = (model.net(use_ema=True), model.domain)
            self.models[label] = model
        self.lmmse_train = self.channels if lmmse_train is None else np.asarray(lmmse_train)
        self.seed = seed
        self._lmmse = {}

    @property
    def methods(self) -> tuple:
        return BASELINE_METHODS + tuple(self.models)

    def _lmmse_model(self, source: str):
        if source not in self._lmmse:
            self._lmmse[source] = fit_lmmse(self.lmmse_train, source)
        return self._lmmse[source]

    def estimate(self, method: str, H_hat, snr_db: float, nfe: int = 1) -> np.ndarray:
        if method == "ls":
            return H_hat
        if method in ("lmmse", "lmmse-identity"):
            source = "sample" if method == "lmmse" else "identity"
            return apply_lmmse(self._lmmse_model(source), H_hat, SnrSpec(snr_db).noise_variance)
        if method in self.models:
            net, domain = self.models[method]
            with checked_mode(False):
                return _chunked(lambda x: denoise(net, x, nfe, domain), H_hat)
        raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(self.methods)}")

    def check_methods(self, methods) -> None:
        bad = [m for m in methods if m not in self.methods]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; valid methods: {', '.join(self.methods)}")

    def evaluate(self, snrs, nfes=(1,), methods=None) -> EvalReport:
        methods = list(methods or self.methods)
        self.check_methods(methods)
        report = EvalReport()
        for method in methods:
            learned = method in self.models
            for snr in snrs:
                for nfe in (nfes if learned else (1,)):
                    ss = cell_seed(self.seed, method, snr, nfe)
                    H_hat = observe(self.channels, snr, np.random.default_rng(ss))
                    est = self.estimate(method, H_hat, snr, nfe)
                    report.add(method=method, snr_db=float(snr), nfe=int(nfe),
                               nmse_db=nmse_db(est, self.channels), n_samples=len(self.channels),
                               seed=int(ss.generate_state(1)[0]))
        return report

    def sweep_nfe(self, snrs, nfes, methods=None, tol_db: float = 0.2) -> EvalReport:
        """NMSE per NFE with the gain over 1-NFE; every NFE of a (method, SNR)
        cell sees the same noise so gains are paired."""
        methods = list(methods or self.models)
        self.check_methods(methods)
        nfes = sorted(set(int(n) for n in nfes) | {1})
        report = EvalReport(columns=SWEEP_COLUMNS)
        for method in methods:
            for snr in snrs:
                ss = cell_seed(self.seed, method, snr, 0)
                H_hat = observe(self.channels, snr, np.random.default_rng(ss))
                base = None
                for nfe in nfes:
                    nm = nmse_db(self.estimate(method, H_hat, snr, nfe), self.channels)
                    base = nm if nfe == 1 else base
                    report.add(method=method, snr_db=float(snr), nfe=nfe, nmse_db=nm,
                               gain_db=base - nm, n_samples=len(self.channels),
                               seed=int(ss.generate_state(1)[0]))
        report.checks = nfe_trend_checks(report, tol_db)
        return report


def nfe_trend_checks(report: EvalReport, tol_db: float = 0.2) -> list:
    """Refinement at the highest SNR, robustness of one step at the lowest."""
    checks = []
    for method in sorted({r["method"] for r in report.rows}):
        rows = [r for r in report.rows if r["method"] == method]
        snrs = sorted({r["snr_db"] for r in rows})
        nfes = {r["nfe"] for r in rows}

        def nm(snr, nfe):
            return next(r["nmse_db"] for r in rows if r["snr_db"] == snr and r["nfe"] == nfe)

        if 4 in nfes:
            hi = snrs[-1]
            ok = nm(hi, 4) <= nm(hi, 1) + tol_db
            checks.append({"check": "multi_step_refines_high_snr", "method": method, "snr_db": hi,
                           "passed": bool(ok), "nmse_1": _json_value(nm(hi, 1)), "nmse_4": _json_value(nm(hi, 4))})
        if 20 in nfes:
            lo = snrs[0]
            ok = nm(lo, 1) <= nm(lo, 20) + tol_db
            checks.append({"check": "one_step_robust_low_snr", "method": method, "snr_db": lo,
                           "passed": bool(ok), "nmse_1": _json_value(nm(lo, 1)), "nmse_20": _json_value(nm(lo, 20))})
    return checks


def bench_latency(net, n_rx: int, n_tx: int, nfes=(1,), repetitions: int = 100, warmup: int = 10,
                  end_to_end: bool = False, seed: int = 0, domain: str = "angular",
                  label: str = "avf") -> EvalReport:
    """Single-sample, single-thread wall-clock inference time per NFE."""
    if repetitions < 100:
        raise ValueError(f"repetitions must be >= 100, got {repetitions}")
    rng = np.random.default_rng(seed)
    pilots = PilotMatrix.dft(n_tx)
    H = np.sqrt(0.5) * (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx)))
    Y = transmit(H, pilots, SnrSpec(10.0), rng)
    H_ang = to_angular(ls_decorrelate(Y, pilots))

    def run(nfe):
        if end_to_end:
            return denoise(net, ls_decorrelate(Y, pilots), nfe, domain)
        return infer(net, H_ang, nfe)

    report = EvalReport()
    with threadpool_limits(limits=1), checked_mode(False):
        for nfe in nfes:
            for _ in range(warmup):
                run(nfe)
            times = np.empty(repetitions)
            for i in range(repetitions):
                t0 = time.perf_counter()
                run(nfe)
                times[i] = time.perf_counter() - t0
            times *= 1e3
            report.add(method=label, snr_db=10.0, nfe=int(nfe),
                       latency_ms_median=float(np.median(times)),
                       latency_ms_p90=float(np.percentile(times, 90)),
                       n_samples=repetitions, seed=seed)
    return report
