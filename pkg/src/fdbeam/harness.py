"""Configuration files, evaluation, CDFs, parameter sweeps and CSV output.

This is the only layer that converts to dB.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from fdbeam import metrics
from fdbeam.channel import RAYLEIGH, ChannelBatch, Scenario, SiChannelConfig, UserChannelConfig, draw_batch
from fdbeam.geometry import ArrayGeometry
from fdbeam.metrics import LinkBudget
from fdbeam.probing import ProbingCodebooks, draw_noise, measure
from fdbeam.synthesizer import (
    StreamSource,
    SynthesizerNet,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
    synthesize_batch,
    train,
)

log = logging.getLogger(__name__)

_EVAL_NOISE_TAG = 0xE7A1
_TEST_SEED_OFFSET = 0x5EED_7E57


class ConfigError(ValueError):
    """Raised for unknown keys or unparsable values in a config file."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Config:
    """Flat experiment configuration, one field per config-file key."""

    nt_rows: int = 4
    nt_cols: int = 4
    nr_rows: int = 4
    nr_cols: int = 4
    spacing_wl: float = 0.5
    array_separation_wl: float = 10.0
    kappa_db: float = 0.0
    num_rays: int | str = 64
    fov_az_deg: float = 60.0
    nlos_paths: int = 3
    nlos_power_db: float = -10.0
    p_dl: float = 1.0
    p_ul: float = 1.0
    noise_dl: float = 1.0
    noise_ul: float = 1.0
    target_max_snr_db: float = 10.0
    target_max_inr_db: float = 40.0
    m_probes: int = 16
    batch_size: int = 4096
    lr_net: float = 0.001
    lr_cb_base: float = 0.0015
    lr_cb_min: float = 0.0005
    lr_cb_period: int = 5000
    max_batches: int = 100_000
    conv_window: int = 500
    conv_tol: float = 1e-3
    seed: int = 0
    test_count: int = 20_000

    def budget(self) -> LinkBudget:
        return LinkBudget(
            p_dl=self.p_dl,
            p_ul=self.p_ul,
            noise_dl=self.noise_dl,
            noise_ul=self.noise_ul,
            target_max_snr=self.target_max_snr_db,
            target_max_inr=self.target_max_inr_db,
        )

    def scenario(self) -> Scenario:
        half = self.array_separation_wl / 2
        tx = ArrayGeometry(self.nt_rows, self.nt_cols, self.spacing_wl, center=(0.0, -half, 0.0))
        rx = ArrayGeometry(self.nr_rows, self.nr_cols, self.spacing_wl, center=(0.0, half, 0.0))
        fov = math.radians(self.fov_az_deg)
        return Scenario(
            tx=tx,
            rx=rx,
            si=SiChannelConfig(self.kappa_db, self.num_rays, self.array_separation_wl),
            user=UserChannelConfig(fov_azimuth=(-fov, fov), nlos_paths=self.nlos_paths, nlos_power_db=self.nlos_power_db),
            budget=self.budget(),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            lr_net=self.lr_net,
            lr_cb_base=self.lr_cb_base,
            lr_cb_min=self.lr_cb_min,
            lr_cb_period=self.lr_cb_period,
            max_batches=self.max_batches,
            conv_window=self.conv_window,
            conv_tol=self.conv_tol,
            seed=self.seed,
        )

    @property
    def test_seed(self) -> int:
        return self.seed + _TEST_SEED_OFFSET


def _parse_value(key: str, raw: str, kind):
    if key == "num_rays":
        if raw.lower() == RAYLEIGH:
            return RAYLEIGH
        kind = int
    try:
        if kind is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    kinds = {f.name: (int if f.type in ("int", int) else float) for f in dataclasses.fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key or not raw:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, kinds[key])
    try:
        return Config(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# evaluation


def to_db(x):
    with np.errstate(divide="ignore"):
        return 10 * np.log10(x)


def _link_columns(prefix: str, f, w, data: ChannelBatch, budget: LinkBudget) -> dict[str, np.ndarray]:
    r_dl, r_ul, total = metrics.sse(f, w, data, budget)
    inr = metrics.inr_ul(f, w, data.H, budget)
    sinr_ul = metrics.sinr(metrics.snr_ul(w, data.h_ul, budget), inr)
    sinr_dl = metrics.sinr(metrics.snr_dl(f, data.h_dl, budget), metrics.inr_dl(data.crosslink, budget))
    return {
        f"{prefix}_sse": total,
        f"{prefix}_r_dl": r_dl,
        f"{prefix}_r_ul": r_ul,
        f"{prefix}_inr_ul_db": to_db(inr),
        f"{prefix}_sinr_ul_db": to_db(sinr_ul),
        f"{prefix}_sinr_dl_db": to_db(sinr_dl),
    }


@dataclass
class EvalReport:
    """Per-sample columns for the model, the MRT+MRC baseline and capacity."""

    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(next(iter(self.columns.values())))

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def mean(self, key: str) -> float:
        return float(np.mean(self.columns[key]))

    def quantile(self, key: str, q: float) -> float:
        return float(np.quantile(self.columns[key], q))

    def summary(self) -> dict[str, float]:
        out = {}
        for key, col in self.columns.items():
            out[f"{key}_mean"] = float(np.mean(col))
            out[f"{key}_median"] = float(np.median(col))
        return out

    def to_csv(self, path=None) -> str:
        keys = list(self.columns)
        rows = zip(*(self.columns[k] for k in keys))
        return write_csv(path, ["index"] + keys, ([i, *r] for i, r in enumerate(rows)))


def eval_noise(data: ChannelBatch, codebooks: ProbingCodebooks, budget: LinkBudget, seed: int) -> np.ndarray:
    """Per-sample probing noise; sample k uses ``default_rng([seed, k, tag])``."""
    return np.stack(
        [
            draw_noise((), codebooks.m, codebooks.nr, budget, np.random.default_rng([seed, k, _EVAL_NOISE_TAG]))
            for k in range(len(data))
        ]
    )


def baseline_columns(data: ChannelBatch, budget: LinkBudget) -> dict[str, np.ndarray]:
    f, w = metrics.mrt_mrc_beams(data.y_dl, data.y_ul)
    cols = _link_columns("baseline", f, w, data, budget)
    cols["capacity"] = metrics.fd_capacity(data, budget)
    return cols


def evaluate(
    net: SynthesizerNet, codebooks: ProbingCodebooks, data: ChannelBatch, budget: LinkBudget, seed: int
) -> EvalReport:
    """Probe (with noise), synthesize and score every realization in ``data``.

    The noise for sample k depends only on (seed, k), so two models
    evaluated with the same seed see identical noise draws.
    """
    if (data.nt, data.nr) != (net.nt, net.nr) or codebooks.m != net.m:
        raise ValueError(
            f"checkpoint is for Nt={net.nt}, Nr={net.nr}, M={net.m}; data has Nt={data.nt}, Nr={data.nr}"
        )
    z = measure(data.H, codebooks, budget, None, noise=eval_noise(data, codebooks, budget, seed))
    f, w = synthesize_batch(net, z, data.y_dl, data.y_ul, budget)
    cols = _link_columns("model", f, w, data, budget)
    cols.update(baseline_columns(data, budget))
    return EvalReport(cols)


def empirical_cdf(values) -> list[tuple[float, float]]:
    """Sorted (value, k/n) pairs; the k-th smallest value has probability k/n."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empirical_cdf() of an empty sample")
    p = np.arange(1, x.size + 1) / x.size
    return list(zip(x.tolist(), p.tolist()))


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def write_csv(path, header: Sequence[str], rows) -> str:
    """Write rows with 9 significant digits and '\\n' line endings; returns the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = {"kappa": "kappa_db", "rays": "num_rays", "M": "m_probes"}
SWEEP_HEADER = ["value", "m", "mean_sse", "mean_inr_db", "baseline_sse", "capacity", "status"]


def parse_sweep_value(param: str, raw: str):
    if param == "rays" and raw.strip().lower() == RAYLEIGH:
        return RAYLEIGH
    if param in ("rays", "M"):
        return int(raw)
    return float(raw)


def run_cell(cfg: Config, ckpt_path=None, callback: Callable[[int, float], None] | None = None) -> EvalReport:
    """Train (or load) one model for ``cfg`` and evaluate it on its fixed test set."""
    scenario = cfg.scenario()
    if ckpt_path is not None and Path(ckpt_path).exists():
        net, codebooks = load_checkpoint(ckpt_path)
    else:
        tcfg = cfg.train_config()
        result = train(tcfg, StreamSource(scenario, cfg.seed, tcfg.batch_size), scenario.budget, cfg.m_probes, callback)
        net, codebooks = result.net, result.codebooks
        if ckpt_path is not None:
            save_checkpoint(ckpt_path, net, codebooks)
    test = draw_batch(scenario, cfg.test_seed, 0, cfg.test_count)
    return evaluate(net, codebooks, test, scenario.budget, cfg.test_seed)


def sweep(
    param: str,
    values: Sequence,
    base: Config,
    out=None,
    ckpt_dir=None,
    callback: Callable[[int, float], None] | None = None,
) -> list[list]:
    """One trained model per value of ``param`` (kappa | rays | M).

    Writes (value, M, mean SSE, mean INR dB, baseline SSE, capacity, status)
    per cell to ``out`` if given and returns the rows. A diverging cell is
    recorded with status ``diverged`` and the sweep moves on.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        cfg = replace(base, **{SWEEP_PARAMS[param]: value})
        ckpt = None
        if ckpt_dir is not None:
            Path(ckpt_dir).mkdir(parents=True, exist_ok=True)
            ckpt = Path(ckpt_dir) / f"{param}_{value}.fdck"
        try:
            report = run_cell(cfg, ckpt, callback)
        except TrainingDivergedError as exc:
            log.warning("cell %s=%s diverged: %s", param, value, exc)
            rows.append([str(value), cfg.m_probes, math.nan, math.nan, math.nan, math.nan, "diverged"])
            continue
        rows.append(
            [
                str(value),
                cfg.m_probes,
                report.mean("model_sse"),
                report.mean("model_inr_ul_db"),
                report.mean("baseline_sse"),
                report.mean("capacity"),
                "ok",
            ]
        )
        log.info("cell %s=%s: model SSE %.3f, baseline %.3f", param, value, rows[-1][2], rows[-1][4])
    if out is not None:
        write_csv(out, SWEEP_HEADER, rows)
    return rows
