"""Consumption history ingestion and synthetic scenario paths.

Randomness is drawn from ``numpy`` generators keyed by
``SeedSequence(seed, spawn_key=(stream, index))``, so path ``i`` of a bundle
is the same no matter how many paths are generated alongside it.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from drbaseline.errors import DataError, ParameterError
from drbaseline.mdp import DrChain, ZDistribution
from drbaseline.utility import UtilityParams

log = logging.getLogger(__name__)

STREAM_NOISE = 0
STREAM_DR = 1
STREAM_WARMUP = 2
STREAM_ROLLOUT = 3
STREAM_FIT = 4
STREAM_SYNTH = 5

DEFAULT_HOUR = 9
DEFAULT_N_DAYS = 93


def rng_for(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, index)))


@dataclass(frozen=True)
class HistoryRecord:
    timestamp: dt.datetime
    consumption: float


@dataclass(frozen=True)
class ScenarioPath:
    """One sample path over the horizon plus the pre-horizon window (most recent first)."""

    consumption: tuple[float, ...]
    dr_flags: tuple[int, ...]
    z_values: tuple[float, ...]
    warmup: tuple[float, ...] = ()

    def __post_init__(self):
        T = len(self.consumption)
        if len(self.dr_flags) != T or len(self.z_values) != T:
            raise DataError("consumption, dr_flags and z_values must have equal length")
        if any(c < 0 for c in self.consumption) or any(c < 0 for c in self.warmup):
            raise DataError("consumption must be non-negative")

    @property
    def T(self) -> int:
        return len(self.consumption)


@dataclass
class PathBundle:
    """Stacked paths: arrays of shape (n_paths, T); ``warmup`` is (n_paths, W)."""

    consumption: np.ndarray
    dr: np.ndarray
    z: np.ndarray
    warmup: np.ndarray
    warmup_z: np.ndarray | None = None

    def __post_init__(self):
        if not (self.consumption.shape == self.dr.shape == self.z.shape):
            raise DataError("path arrays must share a shape")
        if self.warmup.shape[0] != self.consumption.shape[0]:
            raise DataError("warmup rows must match path count")

    @property
    def n_paths(self) -> int:
        return self.consumption.shape[0]

    @property
    def T(self) -> int:
        return self.consumption.shape[1]

    def initial_windows(self, Y: int) -> np.ndarray:
        if self.warmup.shape[1] < Y:
            raise ParameterError(f"warm-up holds {self.warmup.shape[1]} days, need Y={Y}")
        return self.warmup[:, :Y].copy()

    def path(self, i: int) -> ScenarioPath:
        return ScenarioPath(tuple(self.consumption[i]), tuple(int(v) for v in self.dr[i]),
                            tuple(self.z[i]), tuple(self.warmup[i]))

    def subset(self, idx) -> "PathBundle":
        wz = None if self.warmup_z is None else self.warmup_z[idx]
        return PathBundle(self.consumption[idx], self.dr[idx], self.z[idx], self.warmup[idx], wz)

    @classmethod
    def from_paths(cls, paths: Sequence[ScenarioPath]) -> "PathBundle":
        return cls(np.array([p.consumption for p in paths], dtype=float),
                   np.array([p.dr_flags for p in paths], dtype=np.int8),
                   np.array([p.z_values for p in paths], dtype=float),
                   np.array([p.warmup for p in paths], dtype=float))


def _parse_ts(text: str, row: int) -> dt.datetime:
    try:
        ts = dt.datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"row {row}: unparsable timestamp {text!r}") from exc
    return ts.replace(tzinfo=None) if ts.tzinfo else ts


def read_holidays(path: str | Path) -> set[dt.date]:
    days = set()
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            days.add(dt.date.fromisoformat(line))
        except ValueError as exc:
            raise DataError(f"holiday file line {n}: bad date {line!r}") from exc
    return days


def read_history_csv(path: str | Path) -> list[HistoryRecord]:
    """All rows of a ``timestamp,kwh`` CSV, validated and sorted."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"history file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        if "timestamp" not in cols or "kwh" not in cols:
            raise DataError(f"{path}: header must contain 'timestamp' and 'kwh', got {cols}")
        reader.fieldnames = cols
        records = []
        for row_no, row in enumerate(reader, start=2):
            ts = _parse_ts(row["timestamp"], row_no)
            try:
                kwh = float(row["kwh"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"row {row_no}: unparsable kwh {row['kwh']!r}") from exc
            if not math.isfinite(kwh) or kwh < 0:
                raise DataError(f"row {row_no}: consumption must be a finite non-negative number, got {kwh}")
            records.append(HistoryRecord(ts, kwh))
    records.sort(key=lambda r: r.timestamp)
    for a, b in zip(records, records[1:]):
        if a.timestamp == b.timestamp:
            raise DataError(f"duplicate timestamp {a.timestamp.isoformat()}")
    return records


def select_history(records: Iterable[HistoryRecord], hour: int = DEFAULT_HOUR,
                   holidays: Iterable[dt.date] = (), n_days: int | None = DEFAULT_N_DAYS
                   ) -> list[HistoryRecord]:
    """Weekday, non-holiday consumption in ``hour`` (sub-hourly rows summed per day).

    With more than ``n_days`` qualifying days, keeps the contiguous run of
    ``n_days`` with the highest total consumption.
    """
    if not 0 <= hour <= 23:
        raise ParameterError(f"hour must be in 0..23, got {hour}")
    holidays = set(holidays)
    per_day: dict[dt.date, float] = {}
    for rec in records:
        ts = rec.timestamp
        if ts.hour != hour or ts.weekday() >= 5 or ts.date() in holidays:
            continue
        per_day[ts.date()] = per_day.get(ts.date(), 0.0) + rec.consumption
    days = sorted(per_day)
    out = [HistoryRecord(dt.datetime.combine(d, dt.time(hour)), per_day[d]) for d in days]
    if n_days is not None and len(out) > n_days:
        vals = np.array([r.consumption for r in out])
        sums = np.convolve(vals, np.ones(n_days), mode="valid")
        start = int(sums.argmax())
        out = out[start:start + n_days]
    return out


def load_history(path: str | Path, hour: int = DEFAULT_HOUR,
                 holidays: str | Path | Iterable[dt.date] | None = None,
                 n_days: int | None = DEFAULT_N_DAYS) -> list[HistoryRecord]:
    if isinstance(holidays, (str, Path)):
        holidays = read_holidays(holidays)
    return select_history(read_history_csv(path), hour, holidays or (), n_days)


def synthetic_hourly_history(n_weeks: int = 30, seed: int = 0,
                             start: dt.date = dt.date(2015, 5, 4)) -> list[HistoryRecord]:
    """Hourly household load with a morning peak around 09:00, all days of the week.

    Daily level follows a gentle seasonal swell; hours carry log-normal noise.
    """
    rng = rng_for(seed, STREAM_SYNTH)
    hours = np.arange(24)
    profile = (0.45 + 2.3 * np.exp(-0.5 * ((hours - 9) / 1.1) ** 2)
               + 1.1 * np.exp(-0.5 * ((hours - 19) / 2.0) ** 2))
    n = 7 * n_weeks
    records = []
    for d in range(n):
        day = start + dt.timedelta(days=d)
        level = 1.0 + 0.12 * math.sin(math.pi * d / n)
        noise = rng.lognormal(mean=-0.08, sigma=0.4, size=24)
        load = profile * level * noise
        for h in hours:
            records.append(HistoryRecord(dt.datetime.combine(day, dt.time(int(h))), float(load[h])))
    return records


def write_history_csv(records: Iterable[HistoryRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["timestamp", "kwh"])
        for rec in records:
            out.writerow([rec.timestamp.isoformat(), repr(rec.consumption)])


def noise_sd(base: Sequence[float], snr_db: float) -> float:
    """Noise std for a mean-square-signal SNR in dB; 0 for infinite SNR."""
    b = np.asarray(base, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    power = float(np.mean(b ** 2))
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def awgn_noise(base: Sequence[float], snr_db: float, n_paths: int, seed: int,
               stream: int = STREAM_NOISE) -> np.ndarray:
    b = np.asarray(base, dtype=float)
    sd = noise_sd(b, snr_db)
    return np.stack([rng_for(seed, stream, i).standard_normal(b.size) * sd for i in range(n_paths)])


def awgn_paths(base: Sequence[float], snr_db: float, n_paths: int, seed: int) -> np.ndarray:
    """Base series plus i.i.d. Gaussian noise at ``snr_db``, clamped at zero."""
    b = np.asarray(base, dtype=float)
    return np.maximum(b[None, :] + awgn_noise(b, snr_db, n_paths, seed), 0.0)


def dr_sequences(T: int, chain: DrChain, n_paths: int, seed: int, y0: int = 0) -> np.ndarray:
    """(n_paths, T) DR flags from the two-state chain, day 0 fixed at ``y0``."""
    if y0 not in (0, 1):
        raise ParameterError("y0 must be 0 or 1")
    out = np.empty((n_paths, T), dtype=np.int8)
    for i in range(n_paths):
        u = rng_for(seed, STREAM_DR, i).random(T)
        out[i] = _chain_from_uniforms(u, chain, y0)
    return out


def _chain_from_uniforms(u: np.ndarray, chain: DrChain, y_first: int | None,
                         y_prev: int | None = None) -> np.ndarray:
    """Chain realization from uniforms along the last axis.

    With ``y_first`` given, element 0 is that flag; otherwise it is drawn
    given ``y_prev``.
    """
    y = np.empty(u.shape, dtype=np.int8)
    prev = None
    for j in range(u.shape[-1]):
        if j == 0:
            if y_first is not None:
                y[..., 0] = y_first
            else:
                y[..., 0] = u[..., 0] < (chain.p1 if y_prev else chain.p0)
        else:
            y[..., j] = u[..., j] < np.where(prev == 1, chain.p1, chain.p0)
        prev = y[..., j]
    return y


def z_from_consumption(consumption, params: UtilityParams) -> np.ndarray:
    """The utility scale under which each consumption is the intrinsic optimum."""
    c = np.asarray(consumption, dtype=float)
    if np.any(c > params.a_hat):
        log.warning("clamping %d consumption values above a_hat=%g", int((c > params.a_hat).sum()),
                    params.a_hat)
        c = np.minimum(c, params.a_hat)
    return params.rho * params.omega / params.gamma * np.exp(c / params.rho)


def quantize_z(z, bins: int = 3) -> ZDistribution:
    """Equal-count bins at empirical quantiles; support point = bin mean."""
    zf = np.sort(np.asarray(z, dtype=float).ravel())
    if zf.size == 0:
        raise DataError("no z values to quantize")
    if bins < 1:
        raise ParameterError("need at least one bin")
    groups = [g for g in np.array_split(zf, bins) if g.size]
    # Ties across a split point: merge groups whose means coincide.
    vals, counts = [], []
    for g in groups:
        m = float(g.mean())
        if vals and abs(m - vals[-1]) <= 1e-12 * max(1.0, abs(m)):
            counts[-1] += g.size
            vals[-1] = m
        else:
            vals.append(m)
            counts.append(g.size)
    probs = np.asarray(counts, dtype=float) / zf.size
    probs[-1] = 1.0 - probs[:-1].sum()
    return ZDistribution(tuple(vals), tuple(probs))


def derive_z(consumption, params: UtilityParams, bins: int = 3) -> tuple[np.ndarray, ZDistribution]:
    z = z_from_consumption(consumption, params)
    return z, quantize_z(z, bins)


@dataclass(frozen=True)
class ScenarioModel:
    """Generative model for future days: base series + AWGN, DR events from a chain."""

    base: tuple[float, ...]
    sd: float
    chain: DrChain
    params: UtilityParams

    @classmethod
    def from_snr(cls, base: Sequence[float], snr_db: float, chain: DrChain,
                 params: UtilityParams) -> "ScenarioModel":
        return cls(tuple(float(v) for v in base), noise_sd(base, snr_db), chain, params)

    @property
    def T(self) -> int:
        return len(self.base)

    def consumption(self, noise: np.ndarray, start: int) -> np.ndarray:
        """Intrinsic consumption for days ``start..`` given standard-normal noise on the last axis."""
        b = np.asarray(self.base[start:start + noise.shape[-1]])
        return np.clip(b + self.sd * noise, 0.0, self.params.a_hat)

    def sample_future(self, rng: np.random.Generator, n: int, start: int, y_prev: int
                      ) -> tuple[np.ndarray, np.ndarray]:
        """(consumption, dr) of shape (n, T - start) for days start..T-1, DR drawn given y_prev."""
        L = self.T - start
        noise = rng.standard_normal((n, L))
        u = rng.random((n, L))
        if L == 0:
            return np.empty((n, 0)), np.empty((n, 0), dtype=np.int8)
        return self.consumption(noise, start), _chain_from_uniforms(u, self.chain, None, y_prev)

    def paths(self, n_paths: int, seed: int, warmup_len: int, y0: int = 0) -> PathBundle:
        """Sample paths: noise per day, chain from y0, warm-up window drawn around the first days."""
        T = self.T
        b = np.asarray(self.base)
        eps = np.stack([rng_for(seed, STREAM_NOISE, i).standard_normal(T) for i in range(n_paths)])
        cons = np.clip(b[None, :] + self.sd * eps, 0.0, None)
        dr = dr_sequences(T, self.chain, n_paths, seed, y0)
        reps = -(-warmup_len // T)
        wb = np.tile(b, reps)[:warmup_len][::-1]
        weps = np.stack([rng_for(seed, STREAM_WARMUP, i).standard_normal(warmup_len)
                         for i in range(n_paths)])
        warm = np.clip(wb[None, :] + self.sd * weps, 0.0, self.params.a_hat)
        z = z_from_consumption(cons, self.params)
        return PathBundle(np.minimum(cons, self.params.a_hat), dr, z, warm,
                          z_from_consumption(warm, self.params))


def write_paths_csv(bundle: PathBundle, path: str | Path) -> None:
    """Rows ``path_id,day,consumption_kwh,dr_flag,z``; warm-up days carry negative day numbers."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["path_id", "day", "consumption_kwh", "dr_flag", "z"])
        for i in range(bundle.n_paths):
            for j in range(bundle.warmup.shape[1] - 1, -1, -1):
                wz = "" if bundle.warmup_z is None else repr(float(bundle.warmup_z[i, j]))
                out.writerow([i, -(j + 1), repr(float(bundle.warmup[i, j])), 0, wz])
            for t in range(bundle.T):
                out.writerow([i, t, repr(float(bundle.consumption[i, t])), int(bundle.dr[i, t]),
                              repr(float(bundle.z[i, t]))])


def read_paths_csv(path: str | Path) -> PathBundle:
    rows: dict[int, dict[int, tuple[float, int, float | None]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"path_id", "day", "consumption_kwh", "dr_flag", "z"}
        if not need <= set(reader.fieldnames or ()):
            raise DataError(f"{path}: missing columns {sorted(need - set(reader.fieldnames or ()))}")
        for n, row in enumerate(reader, start=2):
            try:
                pid, day = int(row["path_id"]), int(row["day"])
                z = float(row["z"]) if row["z"] else None
                rows.setdefault(pid, {})[day] = (float(row["consumption_kwh"]), int(row["dr_flag"]), z)
            except ValueError as exc:
                raise DataError(f"row {n}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no rows")
    ids = sorted(rows)
    days = sorted(d for d in rows[ids[0]] if d >= 0)
    warm_days = sorted((d for d in rows[ids[0]] if d < 0), reverse=True)
    cons = np.array([[rows[i][d][0] for d in days] for i in ids])
    dr = np.array([[rows[i][d][1] for d in days] for i in ids], dtype=np.int8)
    z = np.array([[rows[i][d][2] for d in days] for i in ids], dtype=float)
    warm = np.array([[rows[i][d][0] for d in warm_days] for i in ids]).reshape(len(ids), len(warm_days))
    return PathBundle(cons, dr, z, warm)
