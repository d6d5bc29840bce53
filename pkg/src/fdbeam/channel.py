"""Self-interference and user channel generation, calibration, datasets.

A realization is a pure function of (scenario, seed, index): sample ``k``
of a dataset draws from ``np.random.default_rng([seed, k])``.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from fdbeam import metrics
from fdbeam.geometry import ArrayGeometry, DegenerateGeometryError, element_positions, steering_vector
from fdbeam.metrics import LinkBudget

RAYLEIGH = "rayleigh"

DATASET_MAGIC = b"FDBM"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


class CalibrationError(ValueError):
    """Raised when a channel with zero norm cannot be scaled to a target."""


class DatasetError(OSError):
    """Raised for unreadable or malformed dataset files."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SiChannelConfig:
    """Self-interference channel parameters.

    ``kappa_db`` may be ``inf`` for a pure LOS channel. ``num_rays`` is a
    positive integer or :data:`RAYLEIGH`.
    """

    kappa_db: float = 0.0
    num_rays: int | str = 64
    array_separation: float = 10.0
    ray_azimuth: tuple[float, float] = (-np.pi, np.pi)
    ray_elevation: tuple[float, float] = (-np.pi / 3, np.pi / 3)

    def __post_init__(self):
        if self.num_rays != RAYLEIGH and (int(self.num_rays) != self.num_rays or self.num_rays < 1):
            raise ValueError(f"num_rays must be a positive integer or {RAYLEIGH!r}, got {self.num_rays!r}")
        if np.isnan(self.kappa_db):
            raise ValueError("kappa_db is NaN")

    @property
    def kappa(self) -> float:
        return float(db_to_linear(self.kappa_db))


@dataclass(frozen=True)
class UserChannelConfig:
    """Geometric user channel: one LOS path plus ``nlos_paths`` scattered paths."""

    fov_azimuth: tuple[float, float] = (-np.pi / 3, np.pi / 3)
    fov_elevation: tuple[float, float] = (-np.pi / 12, np.pi / 12)
    nlos_paths: int = 3
    nlos_power_db: float = -10.0

    def __post_init__(self):
        if self.fov_azimuth[0] > self.fov_azimuth[1] or self.fov_elevation[0] > self.fov_elevation[1]:
            raise ValueError("angular bounds must be ordered (low, high)")
        if self.nlos_paths < 0:
            raise ValueError("nlos_paths must be >= 0")
        if not np.isfinite(self.nlos_power_db):
            raise ValueError("nlos_power_db must be finite")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to draw a calibrated realization."""

    tx: ArrayGeometry
    rx: ArrayGeometry
    si: SiChannelConfig = field(default_factory=SiChannelConfig)
    user: UserChannelConfig = field(default_factory=UserChannelConfig)
    budget: LinkBudget = field(default_factory=LinkBudget)

    @classmethod
    def side_by_side(cls, rows: int, cols: int, spacing: float = 0.5, **kwargs) -> "Scenario":
        """Identical transmit/receive UPAs whose centers are separated along y."""
        si = kwargs.pop("si", SiChannelConfig())
        half = si.array_separation / 2
        tx = ArrayGeometry(rows, cols, spacing, center=(0.0, -half, 0.0))
        rx = ArrayGeometry(rows, cols, spacing, center=(0.0, half, 0.0))
        return cls(tx=tx, rx=rx, si=si, **kwargs)

    @property
    def nt(self) -> int:
        return self.tx.n

    @property
    def nr(self) -> int:
        return self.rx.n


@dataclass
class ChannelRealization:
    """One draw of all channels seen by the base station."""

    H: np.ndarray
    h_dl: np.ndarray
    h_ul: np.ndarray
    y_dl: np.ndarray
    y_ul: np.ndarray
    crosslink: complex = 0j

    def __post_init__(self):
        nr, nt = np.shape(self.H)
        if np.shape(self.h_dl) != (nt,) or np.shape(self.y_dl) != (nt,):
            raise ValueError("h_dl/y_dl must have length Nt")
        if np.shape(self.h_ul) != (nr,) or np.shape(self.y_ul) != (nr,):
            raise ValueError("h_ul/y_ul must have length Nr")


@dataclass
class ChannelBatch:
    """A stack of realizations along a leading axis."""

    H: np.ndarray
    h_dl: np.ndarray
    h_ul: np.ndarray
    y_dl: np.ndarray
    y_ul: np.ndarray
    crosslink: np.ndarray

    @classmethod
    def stack(cls, realizations: Iterable[ChannelRealization]) -> "ChannelBatch":
        rs = list(realizations)
        if not rs:
            raise ValueError("cannot stack zero realizations")
        return cls(
            H=np.stack([r.H for r in rs]),
            h_dl=np.stack([r.h_dl for r in rs]),
            h_ul=np.stack([r.h_ul for r in rs]),
            y_dl=np.stack([r.y_dl for r in rs]),
            y_ul=np.stack([r.y_ul for r in rs]),
            crosslink=np.array([r.crosslink for r in rs], dtype=complex),
        )

    def __len__(self) -> int:
        return self.H.shape[0]

    @property
    def nt(self) -> int:
        return self.H.shape[-1]

    @property
    def nr(self) -> int:
        return self.H.shape[-2]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return ChannelRealization(
                self.H[idx], self.h_dl[idx], self.h_ul[idx], self.y_dl[idx], self.y_ul[idx], complex(self.crosslink[idx])
            )
        return ChannelBatch(
            self.H[idx], self.h_dl[idx], self.h_ul[idx], self.y_dl[idx], self.y_ul[idx], self.crosslink[idx]
        )

    def __iter__(self) -> Iterator[ChannelRealization]:
        for k in range(len(self)):
            yield self[k]


# ---------------------------------------------------------------------------
# self-interference channel


@functools.lru_cache(maxsize=32)
def _si_los_cached(tx: ArrayGeometry, rx: ArrayGeometry) -> np.ndarray:
    p_tx = element_positions(tx)
    p_rx = element_positions(rx)
    r = np.linalg.norm(p_rx[:, None, :] - p_tx[None, :, :], axis=-1)
    if np.any(r <= 0):
        raise DegenerateGeometryError("transmit and receive elements coincide")
    r_ref = np.linalg.norm(np.subtract(rx.center, tx.center))
    if r_ref == 0:
        r_ref = 1.0
    H = (r_ref / r) * np.exp(-2j * np.pi * r)
    H *= np.sqrt(tx.n * rx.n) / np.linalg.norm(H)
    H.setflags(write=False)
    return H


def si_los(tx: ArrayGeometry, rx: ArrayGeometry) -> np.ndarray:
    """Near-field spherical-wave coupling between two arrays, shape (Nr, Nt).

    Entry (i, j) has 1/r amplitude and phase -2*pi*r for the exact distance r
    from transmit element j to receive element i. Frobenius norm is sqrt(Nt*Nr).
    """
    return _si_los_cached(tx, rx).copy()


def _nlos_draw(num_rays: int, rng: np.random.Generator, azimuth, elevation):
    alpha = (rng.standard_normal(num_rays) + 1j * rng.standard_normal(num_rays)) / np.sqrt(2)
    az_tx = rng.uniform(*azimuth, num_rays)
    el_tx = rng.uniform(*elevation, num_rays)
    az_rx = rng.uniform(*azimuth, num_rays)
    el_rx = rng.uniform(*elevation, num_rays)
    return alpha, az_tx, el_tx, az_rx, el_rx


def _nlos_assemble(tx, rx, alpha, az_tx, el_tx, az_rx, el_rx) -> np.ndarray:
    a_tx = steering_vector(tx, az_tx, el_tx)
    a_rx = steering_vector(rx, az_rx, el_rx)
    num_rays = alpha.shape[-1]
    weighted = np.swapaxes(a_rx * alpha[..., None], -1, -2)
    return weighted @ np.conj(a_tx) / np.sqrt(num_rays)


def si_nlos(
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    num_rays: int,
    rng: np.random.Generator,
    azimuth: tuple[float, float] = (-np.pi, np.pi),
    elevation: tuple[float, float] = (-np.pi / 3, np.pi / 3),
) -> np.ndarray:
    """Sum of ``num_rays`` far-field reflections with CN(0, 1) amplitudes.

    Steering vectors have unit-modulus entries, so the 1/sqrt(L) prefactor
    gives E||H||_F^2 = Nt*Nr.
    """
    if num_rays < 1:
        raise ValueError("num_rays must be >= 1")
    return _nlos_assemble(tx, rx, *_nlos_draw(num_rays, rng, azimuth, elevation))


def si_rayleigh(nt: int, nr: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. CN(0, 1) entries, shape (nr, nt)."""
    return (rng.standard_normal((nr, nt)) + 1j * rng.standard_normal((nr, nt))) / np.sqrt(2)


def rician_mix(H_los, H_nlos, kappa: float) -> np.ndarray:
    """Rician combination of a LOS and an NLOS component; ``kappa`` is linear."""
    H_los = np.asarray(H_los)
    H_nlos = np.asarray(H_nlos)
    if H_los.shape != H_nlos.shape:
        raise ValueError(f"shape mismatch: {H_los.shape} vs {H_nlos.shape}")
    if not kappa >= 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if np.isinf(kappa):
        return H_los.astype(complex)
    return np.sqrt(kappa / (kappa + 1)) * H_los + np.sqrt(1 / (kappa + 1)) * H_nlos


def si_channel(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Uncalibrated Rician self-interference channel for ``scenario``."""
    return _si_assemble(scenario, [_si_draw(scenario, rng)])[0]


def _si_draw(scenario: Scenario, rng: np.random.Generator):
    cfg = scenario.si
    if cfg.num_rays == RAYLEIGH:
        return si_rayleigh(scenario.nt, scenario.nr, rng)
    return _nlos_draw(int(cfg.num_rays), rng, cfg.ray_azimuth, cfg.ray_elevation)


def _si_assemble(scenario: Scenario, draws: list) -> np.ndarray:
    H_los = _si_los_cached(scenario.tx, scenario.rx)
    if scenario.si.num_rays == RAYLEIGH:
        H_nlos = np.stack(draws)
    else:
        H_nlos = _nlos_assemble(scenario.tx, scenario.rx, *(np.stack(part) for part in zip(*draws)))
    return rician_mix(np.broadcast_to(H_los, H_nlos.shape), H_nlos, scenario.si.kappa)


# ---------------------------------------------------------------------------
# user channels


def _user_draw(cfg: UserChannelConfig, rng: np.random.Generator):
    p = cfg.nlos_paths
    az = rng.uniform(*cfg.fov_azimuth, 1 + p)
    el = rng.uniform(*cfg.fov_elevation, 1 + p)
    gains = np.empty(1 + p, dtype=complex)
    gains[0] = 1.0
    sigma = np.sqrt(db_to_linear(cfg.nlos_power_db) / 2)
    gains[1:] = sigma * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    return az, el, gains


def _user_assemble(geom: ArrayGeometry, az, el, gains):
    paths = steering_vector(geom, az, el)
    y = paths[..., 0, :]
    h = np.einsum("...p,...pn->...n", gains, paths)
    return h, y


def user_channel(geom: ArrayGeometry, cfg: UserChannelConfig, rng: np.random.Generator):
    """Draw a user channel ``h`` and the LOS-only knowledge vector ``y``.

    The LOS path has unit gain and the NLOS paths have CN(0, nlos power)
    gains, all with directions uniform over the field of view. Returns
    ``(h, y)``.
    """
    return _user_assemble(geom, *_user_draw(cfg, rng))


# ---------------------------------------------------------------------------
# calibration


def calibrate(real, budget: LinkBudget):
    """Scale channels so the max SNRs and max INR hit the budget's targets.

    Works for a :class:`ChannelRealization` or a :class:`ChannelBatch`
    (each member scaled independently). ``y_dl``/``y_ul`` are left alone:
    they carry unit-gain LOS knowledge, not absolute power.

    Raises:
        CalibrationError: if any of h_dl, h_ul, H is zero.
    """
    h_dl = np.asarray(real.h_dl)
    h_ul = np.asarray(real.h_ul)
    H = np.asarray(real.H)
    if (
        np.any(np.all(h_dl == 0, axis=-1))
        or np.any(np.all(h_ul == 0, axis=-1))
        or np.any(np.all(H == 0, axis=(-1, -2)))
    ):
        raise CalibrationError("cannot calibrate a zero channel")
    snr_target = float(db_to_linear(budget.target_max_snr))
    inr_target = float(db_to_linear(budget.target_max_inr))
    c_dl = np.sqrt(snr_target / metrics.max_snr_dl(h_dl, budget))
    c_ul = np.sqrt(snr_target / metrics.max_snr_ul(h_ul, budget))
    c_si = np.sqrt(inr_target / metrics.max_inr(H, budget))
    return replace(
        real,
        H=H * np.asarray(c_si)[..., None, None],
        h_dl=h_dl * np.asarray(c_dl)[..., None],
        h_ul=h_ul * np.asarray(c_ul)[..., None],
    )


# ---------------------------------------------------------------------------
# datasets


def _draw_sample(scenario: Scenario, seed: int, index: int):
    rng = np.random.default_rng([seed, index])
    return _si_draw(scenario, rng), _user_draw(scenario.user, rng), _user_draw(scenario.user, rng)


def draw_raw_batch(scenario: Scenario, seed: int, start: int, count: int) -> ChannelBatch:
    """Uncalibrated realizations ``start .. start+count-1`` of the stream keyed by ``seed``.

    Random draws are made per sample from ``default_rng([seed, index])``, so
    each sample is independent of how the stream is chunked.
    """
    draws = [_draw_sample(scenario, seed, k) for k in range(start, start + count)]
    si, dl, ul = zip(*draws)
    H = _si_assemble(scenario, list(si))
    h_dl, y_dl = _user_assemble(scenario.tx, *(np.stack(part) for part in zip(*dl)))
    h_ul, y_ul = _user_assemble(scenario.rx, *(np.stack(part) for part in zip(*ul)))
    return ChannelBatch(H, h_dl, h_ul, y_dl, y_ul, np.zeros(count, dtype=complex))


def draw_raw(scenario: Scenario, seed: int, index: int) -> ChannelRealization:
    """Uncalibrated realization ``index`` of the stream keyed by ``seed``."""
    return draw_raw_batch(scenario, seed, index, 1)[0]


def draw_batch(scenario: Scenario, seed: int, start: int, count: int) -> ChannelBatch:
    """Calibrated realizations ``start .. start+count-1`` as one batch."""
    return calibrate(draw_raw_batch(scenario, seed, start, count), scenario.budget)


def generate_dataset(scenario: Scenario, seed: int, count: int, chunk: int = 1024) -> Iterator[ChannelBatch]:
    """Yield ``count`` calibrated realizations in chunks."""
    if count < 1:
        raise ValueError("count must be >= 1")
    for start in range(0, count, chunk):
        yield draw_batch(scenario, seed, start, min(chunk, count - start))


def write_dataset(path, batches: Iterable[ChannelBatch], crosslink: bool = False) -> int:
    """Stream batches to ``path`` in the FDBM binary format.

    Returns the number of records written.
    """
    path = Path(path)
    count = 0
    dims = None
    try:
        with open(path, "wb") as fh:
            fh.write(b"\0" * _HEADER.size)
            for b in batches:
                if dims is None:
                    dims = (b.nt, b.nr)
                elif (b.nt, b.nr) != dims:
                    raise ValueError("all batches must share array sizes")
                parts = [b.H.reshape(len(b), -1), b.h_dl, b.h_ul, b.y_dl, b.y_ul]
                if crosslink:
                    parts.append(b.crosslink[:, None])
                fh.write(np.concatenate(parts, axis=1).astype("<c16").tobytes())
                count += len(b)
            if dims is None:
                raise ValueError("no realizations to write")
            fh.seek(0)
            fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, count, dims[0], dims[1], int(crosslink)))
    except OSError as exc:
        raise DatasetError(f"failed writing dataset {path}: {exc}") from exc
    return count


def read_dataset(path) -> ChannelBatch:
    """Read an FDBM dataset file into a :class:`ChannelBatch`."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"failed reading dataset {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise DatasetError(f"{path}: truncated header")
    magic, version, count, nt, nr, flags = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise DatasetError(f"{path}: unsupported version {version}")
    has_cross = bool(flags & 1)
    width = nr * nt + 2 * nt + 2 * nr + int(has_cross)
    body = raw[_HEADER.size:]
    if len(body) != count * width * 16:
        raise DatasetError(f"{path}: expected {count} records, file size does not match")
    data = np.frombuffer(body, dtype="<c16").reshape(count, width).astype(complex)
    splits = np.cumsum([nr * nt, nt, nr, nt, nr])
    H, h_dl, h_ul, y_dl, y_ul, rest = np.split(data, splits, axis=1)
    crosslink = rest[:, 0] if has_cross else np.zeros(count, dtype=complex)
    return ChannelBatch(H.reshape(count, nr, nt), h_dl, h_ul, y_dl, y_ul, crosslink)
