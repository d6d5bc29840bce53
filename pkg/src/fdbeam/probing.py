"""Probing codebooks and the self-interference measurement model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fdbeam.metrics import LinkBudget

#: Pass as ``rng`` to :func:`measure` to drop the receiver noise term.
NOISELESS = None


def project_unit_disk(re, im) -> np.ndarray:
    """Map each complex entry re + j*im onto the closed unit disk.

    Entries already inside the disk are returned unchanged; entries outside
    are scaled radially onto the unit circle.
    """
    re = np.asarray(re, dtype=float)
    im = np.asarray(im, dtype=float)
    if re.shape != im.shape:
        raise ValueError(f"shape mismatch: {re.shape} vs {im.shape}")
    z = re + 1j * im
    return z / np.maximum(1.0, np.abs(z))


@dataclass
class ProbingCodebooks:
    """Raw real/imaginary weights of the transmit (F) and receive (W) codebooks.

    ``f_re``/``f_im`` are Nt x M, ``w_re``/``w_im`` are Nr x M. Column m is
    the m-th probing beam pair. The arrays are updated in place by training
    and re-projected after every step.
    """

    f_re: np.ndarray
    f_im: np.ndarray
    w_re: np.ndarray
    w_im: np.ndarray

    def __post_init__(self):
        if self.f_re.shape != self.f_im.shape or self.w_re.shape != self.w_im.shape:
            raise ValueError("real and imaginary parts must share a shape")
        if self.f_re.shape[1] != self.w_re.shape[1]:
            raise ValueError("F and W must have the same number of columns")

    @property
    def m(self) -> int:
        return self.f_re.shape[1]

    @property
    def nt(self) -> int:
        return self.f_re.shape[0]

    @property
    def nr(self) -> int:
        return self.w_re.shape[0]

    @property
    def F(self) -> np.ndarray:
        return project_unit_disk(self.f_re, self.f_im)

    @property
    def W(self) -> np.ndarray:
        return project_unit_disk(self.w_re, self.w_im)

    def project_(self) -> None:
        """Project the stored raw weights onto the unit disk, in place."""
        for re, im in ((self.f_re, self.f_im), (self.w_re, self.w_im)):
            z = project_unit_disk(re, im)
            re[...] = z.real
            im[...] = z.imag


def init_codebooks(nt: int, nr: int, m: int, rng: np.random.Generator) -> ProbingCodebooks:
    """Uniform raw weights on [-1/sqrt(2), 1/sqrt(2)], so every entry starts inside the disk."""
    if min(nt, nr) < 1 or m < 0:
        raise ValueError("need nt, nr >= 1 and m >= 0")
    b = 1 / np.sqrt(2)
    return ProbingCodebooks(
        f_re=rng.uniform(-b, b, (nt, m)),
        f_im=rng.uniform(-b, b, (nt, m)),
        w_re=rng.uniform(-b, b, (nr, m)),
        w_im=rng.uniform(-b, b, (nr, m)),
    )


def measure(H, codebooks: ProbingCodebooks, budget: LinkBudget, rng, noise=None) -> np.ndarray:
    """Received self-interference for each probing pair.

    z_m = sqrt(P_DL/Nt) w_m^* H f_m + w_m^* n_m with n_m ~ CN(0, noise_ul I).
    ``H`` may be a stack (..., Nr, Nt); the result has shape (..., M). Pass
    ``rng=NOISELESS`` to omit the noise, or supply the receiver noise
    directly as ``noise`` with shape (..., M, Nr).
    """
    H = np.asarray(H)
    F, W = codebooks.F, codebooks.W
    if H.shape[-1] != F.shape[0] or H.shape[-2] != W.shape[0]:
        raise ValueError(f"codebooks ({W.shape[0]}x{F.shape[0]}) do not match H {H.shape[-2:]}")
    nt = H.shape[-1]
    z = np.sqrt(budget.p_dl / nt) * np.einsum("rm,...rt,tm->...m", np.conj(W), H, F)
    if noise is None and rng is not NOISELESS:
        noise = draw_noise(H.shape[:-2], codebooks.m, codebooks.nr, budget, rng)
    if noise is not None:
        z = z + np.einsum("rm,...mr->...m", np.conj(W), noise)
    return z


def draw_noise(batch_shape, m: int, nr: int, budget: LinkBudget, rng: np.random.Generator) -> np.ndarray:
    """Receiver noise n_m ~ CN(0, noise_ul I) for M measurements, shape (*batch_shape, M, Nr)."""
    shape = tuple(batch_shape) + (m, nr)
    return np.sqrt(budget.noise_ul / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
