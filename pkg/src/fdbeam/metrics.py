"""Link-quality chain for a full-duplex base station.

All functions return linear quantities and broadcast over leading batch
dimensions: a beam of shape (..., N) pairs with a channel of shape (..., N).
Inner products conjugate their first argument, so ``_inner(a, b)`` is a^* b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MAX_SLACK = 1e-12


class ZeroBeamError(ValueError):
    """Raised when a receive beam with zero norm is used in an UL metric."""


class ConvergenceError(ArithmeticError):
    """Raised when power iteration fails to converge."""


@dataclass(frozen=True)
class LinkBudget:
    """Transmit/noise powers (linear) and calibration targets (dB)."""

    p_dl: float = 1.0
    p_ul: float = 1.0
    noise_dl: float = 1.0
    noise_ul: float = 1.0
    target_max_snr: float = 10.0
    target_max_inr: float = 40.0

    def __post_init__(self):
        for name in ("p_dl", "p_ul", "noise_dl", "noise_ul"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class BeamPair:
    """Serving transmit beam ``f`` (Nt) and receive beam ``w`` (Nr)."""

    f: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=complex)
        self.w = np.asarray(self.w, dtype=complex)
        if not is_feasible(self.f) or not is_feasible(self.w):
            raise ValueError("beam entries must have magnitude <= 1")


def is_feasible(x) -> bool:
    """Per-antenna power constraint: every entry has magnitude at most one."""
    return bool(np.all(np.abs(x) <= 1 + _MAX_SLACK))


def _inner(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return np.sum(np.conj(a) * b, axis=-1)


def _sq_norm(x):
    return np.sum(np.abs(x) ** 2, axis=-1)


def _check_nonzero(w):
    norm = _sq_norm(w)
    if np.any(norm == 0):
        raise ZeroBeamError("receive beam w has zero norm")
    return norm


def snr_dl(f, h_dl, budget: LinkBudget):
    nt = np.shape(h_dl)[-1]
    return budget.p_dl * np.abs(_inner(h_dl, f)) ** 2 / (nt * budget.noise_dl)


def snr_ul(w, h_ul, budget: LinkBudget):
    norm = _check_nonzero(w)
    return budget.p_ul * np.abs(_inner(w, h_ul)) ** 2 / (norm * budget.noise_ul)


def inr_ul(f, w, H, budget: LinkBudget):
    """Self-interference power after transmit beam f and receive beam w."""
    H = np.asarray(H)
    f = np.asarray(f)
    if H.shape[-1] != f.shape[-1] or H.shape[-2] != np.shape(w)[-1]:
        raise ValueError(f"dimension mismatch: H {H.shape}, f {f.shape}, w {np.shape(w)}")
    norm = _check_nonzero(w)
    coupled = _inner(w, np.einsum("...ij,...j->...i", H, f))
    nt = H.shape[-1]
    return budget.p_dl * np.abs(coupled) ** 2 / (nt * norm * budget.noise_ul)


def inr_dl(crosslink, budget: LinkBudget):
    """Cross-link interference seen by the DL user."""
    return budget.p_ul * np.abs(crosslink) ** 2 / budget.noise_dl


def sinr(snr, inr):
    return snr / (1 + inr)


def sse(f, w, realization, budget: LinkBudget):
    """DL, UL and sum spectral efficiency in bits/s/Hz.

    ``realization`` is anything with ``H``, ``h_dl``, ``h_ul`` and
    ``crosslink`` attributes (a single realization or a batch).
    """
    r_dl = np.log2(1 + sinr(snr_dl(f, realization.h_dl, budget), inr_dl(realization.crosslink, budget)))
    r_ul = np.log2(1 + sinr(snr_ul(w, realization.h_ul, budget), inr_ul(f, w, realization.H, budget)))
    return r_dl, r_ul, r_dl + r_ul


def max_snr_dl(h_dl, budget: LinkBudget):
    """DL SNR of the equal-gain, phase-matched beam (optimal under |f_i| <= 1)."""
    nt = np.shape(h_dl)[-1]
    return budget.p_dl * np.sum(np.abs(h_dl), axis=-1) ** 2 / (nt * budget.noise_dl)


def max_snr_ul(h_ul, budget: LinkBudget):
    return budget.p_ul * _sq_norm(h_ul) / budget.noise_ul


def spectral_norm_sq(H, tol: float = 1e-10, max_iter: int = 100_000):
    """Largest eigenvalue of H^* H by power iteration.

    Iterates until the Rayleigh quotient changes by less than ``tol``
    relative. Works on a stack of matrices (..., Nr, Nt).

    Raises:
        ConvergenceError: if some matrix has not converged after ``max_iter``.
    """
    H = np.asarray(H, dtype=complex)
    batch_shape = H.shape[:-2]
    H = H.reshape((-1,) + H.shape[-2:])
    A = np.conj(np.swapaxes(H, -1, -2)) @ H
    nt = A.shape[-1]
    # fixed start with no special symmetry; orthogonality to the top
    # eigenvector is a measure-zero event
    x0 = np.exp(1j * np.arange(nt) * 0.7) * (1 + 0.1 * np.arange(nt))
    x = np.broadcast_to(x0 / np.linalg.norm(x0), (A.shape[0], nt)).copy()
    lam = np.zeros(A.shape[0])
    active = np.arange(A.shape[0])
    for _ in range(max_iter):
        if active.size == 0:
            break
        y = np.einsum("bij,bj->bi", A[active], x[active])
        new = np.real(np.sum(np.conj(x[active]) * y, axis=-1))
        norm = np.linalg.norm(y, axis=-1)
        zero = norm == 0
        norm[zero] = 1.0
        x[active] = y / norm[:, None]
        done = zero | (np.abs(new - lam[active]) <= tol * np.abs(new))
        lam[active] = new
        active = active[~done]
    else:
        if active.size:
            raise ConvergenceError(
                f"power iteration did not converge for {active.size} matrices in {max_iter} steps"
            )
    return lam.reshape(batch_shape)


def max_inr(H, budget: LinkBudget):
    """INR ceiling over transmit beams with ||f||^2 <= Nt (spectral-norm optimum)."""
    if not np.all(np.any(np.asarray(H) != 0, axis=(-1, -2))):
        raise ValueError("max_inr needs a nonzero H")
    return budget.p_dl * spectral_norm_sq(H) / budget.noise_ul


def mrt_mrc_baseline(y_dl, y_ul) -> BeamPair:
    """Phase-only MRT transmit beam and peak-normalized MRC receive beam."""
    y_dl = np.asarray(y_dl, dtype=complex)
    y_ul = np.asarray(y_ul, dtype=complex)
    f, w = mrt_mrc_beams(y_dl, y_ul)
    return BeamPair(f, w)


def mrt_mrc_beams(y_dl, y_ul):
    """Batched form of :func:`mrt_mrc_baseline`, returning raw arrays."""
    mag_dl = np.abs(y_dl)
    peak_ul = np.max(np.abs(y_ul), axis=-1, keepdims=True)
    if np.any(np.max(mag_dl, axis=-1) == 0) or np.any(peak_ul == 0):
        raise ValueError("MRT/MRC needs nonzero channel knowledge")
    # SNR_DL uses y^* f, so the matched beam carries y's own phase;
    # zero entries of y_dl get zero weight
    safe = np.where(mag_dl == 0, 1.0, mag_dl)
    f = np.where(mag_dl == 0, 0.0, y_dl / safe)
    w = y_ul / peak_ul
    return f, w


def fd_capacity(realization, budget: LinkBudget):
    """Interference-free sum capacity with perfect DL/UL channel knowledge."""
    return np.log2(1 + max_snr_dl(realization.h_dl, budget)) + np.log2(
        1 + max_snr_ul(realization.h_ul, budget)
    )
