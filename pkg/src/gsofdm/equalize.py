"""Detection back-ends: single-tap, banded TF-domain MMSE and IMFC-style cancellation.

All path-based operators use the demodulated-grid model of a path set
(gain ``g_p``, delay ``tau_p``, Doppler ``nu_p``)::

    G_l[k, k'] = sum_p g_p exp(-j2pi f_k' scs tau_p) exp(j2pi nu_p t_l) D(k - k', nu_p)

with ``f_k'`` the signed subcarrier index, ``t_l`` the useful-part start
time of symbol ``l`` and ``D`` the leakage kernel from :mod:`gsofdm.modem`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from .ddchannel import PathSet
from .modem import leakage_kernel
from .numerology import ConstellationSpec, Numerology, demap_symbols, map_bits

log = logging.getLogger(__name__)


class EqualizerError(RuntimeError):
    """Numerical failure inside an equalizer."""


def _shift_rows(z: np.ndarray, m: int) -> np.ndarray:
    """``out[k] = z[k - m]`` along axis 0, zero-filled."""
    if m == 0:
        return z
    out = np.zeros_like(z)
    if m > 0:
        out[m:] = z[:-m]
    else:
        out[:m] = z[-m:]
    return out


def _clip_band(band: int, numerology: Numerology) -> int:
    if band < 0:
        raise ValueError("band must be non-negative")
    return min(int(band), numerology.n_subcarriers - 1)


@dataclass(frozen=True)
class PathOperator:
    """Per-path factors of the banded channel model for a whole frame.

    ``coef[p, l, m + B] = g_p exp(j2pi nu_p t_l) D(m, nu_p)`` and
    ``ramp[p, k] = exp(-j2pi f_k scs tau_p)``.
    """

    coef: np.ndarray
    ramp: np.ndarray
    band: int

    @property
    def n_paths(self) -> int:
        return self.ramp.shape[0]

    def diagonals(self) -> np.ndarray:
        """Stacked diagonals ``(L, 2B+1, K)`` with ``[l, m+B, k'] = G_l[k'+m, k']``."""
        diag = np.einsum("plm,pk->lmk", self.coef, self.ramp)
        k = self.ramp.shape[1]
        kk = np.arange(k)
        for i, m in enumerate(range(-self.band, self.band + 1)):
            diag[:, i, (kk + m < 0) | (kk + m >= k)] = 0.0
        return diag

    def apply_path(self, p: int, x: np.ndarray) -> np.ndarray:
        """Path ``p``'s contribution to the received grid for symbols ``x`` (K x L)."""
        z = self.ramp[p][:, None] * x
        out = np.zeros_like(z)
        for i, m in enumerate(range(-self.band, self.band + 1)):
            out += self.coef[p, :, i][None, :] * _shift_rows(z, m)
        return out

    def adjoint_path(self, p: int, r: np.ndarray) -> np.ndarray:
        out = np.zeros_like(r)
        for i, m in enumerate(range(-self.band, self.band + 1)):
            out += np.conj(self.coef[p, :, i])[None, :] * _shift_rows(r, -m)
        return np.conj(self.ramp[p])[:, None] * out

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape, dtype=np.complex128)
        for p in range(self.n_paths):
            out += self.apply_path(p, x)
        return out

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        out = np.zeros(r.shape, dtype=np.complex128)
        for p in range(self.n_paths):
            out += self.adjoint_path(p, r)
        return out

    def column_energy(self) -> np.ndarray:
        """``sum_k |G_l[k, k']|^2`` as a (K, L) array."""
        return np.sum(np.abs(self.diagonals()) ** 2, axis=1).T

    def ctf(self) -> np.ndarray:
        """Main diagonal of every ``G_l`` as a (K, L) array."""
        return (self.ramp.T @ self.coef[:, :, self.band]).astype(np.complex128)


def path_operator(paths: PathSet, numerology: Numerology, band: int) -> PathOperator:
    band = _clip_band(band, numerology)
    offsets = np.arange(-band, band + 1)
    t = numerology.useful_start_times()
    f = numerology.subcarrier_offsets()
    kern = np.array([leakage_kernel(offsets, nu, numerology) for nu in paths.dopplers]).reshape(len(paths), -1)
    rot = np.exp(2j * np.pi * paths.dopplers[:, None] * t[None, :])
    coef = paths.gains[:, None, None] * rot[:, :, None] * kern[:, None, :]
    ramp = np.exp(-2j * np.pi * paths.delays[:, None] * numerology.scs * f[None, :])
    return PathOperator(coef, ramp, band)


@dataclass(frozen=True)
class IciChannelMatrix:
    """Banded inter-carrier coupling matrix of one OFDM symbol.

    ``diagonals[m + B, k'] = G[k' + m, k']`` for ``|m| <= B``.
    """

    symbol_index: int
    half_bandwidth: int
    diagonals: np.ndarray

    @property
    def size(self) -> int:
        return self.diagonals.shape[1]

    def dense(self) -> np.ndarray:
        k, b = self.size, self.half_bandwidth
        g = np.zeros((k, k), dtype=np.complex128)
        cols = np.arange(k)
        for i, m in enumerate(range(-b, b + 1)):
            rows = cols + m
            ok = (rows >= 0) & (rows < k)
            g[rows[ok], cols[ok]] = self.diagonals[i, ok]
        return g

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        y = np.zeros_like(x)
        for i, m in enumerate(range(-self.half_bandwidth, self.half_bandwidth + 1)):
            y += _shift_rows(self.diagonals[i] * x, m)
        return y


def build_ici_matrices(paths: PathSet, numerology: Numerology, band: int) -> list[IciChannelMatrix]:
    op = path_operator(paths, numerology, band)
    diag = op.diagonals()
    return [IciChannelMatrix(l, op.band, diag[l]) for l in range(numerology.n_symbols)]


def build_ici_matrix(paths: PathSet, numerology: Numerology, symbol_index: int, band: int) -> IciChannelMatrix:
    if not 0 <= symbol_index < numerology.n_symbols:
        raise ValueError(f"symbol index {symbol_index} outside the frame")
    return build_ici_matrices(paths, numerology, band)[symbol_index]


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "symbols", getattr(x, "values", x)), dtype=np.complex128)


def single_tap_equalize(rx_grid, ctf, noise_var: float) -> np.ndarray:
    """Per-RE MMSE scalar ``conj(H) y / (|H|^2 + noise_var)``."""
    y = _as_array(rx_grid)
    h = _as_array(ctf)
    if y.shape != h.shape:
        raise ValueError(f"rx {y.shape} and CTF {h.shape} shapes differ")
    den = np.abs(h) ** 2 + noise_var
    dead = den == 0
    if np.any(dead):
        log.debug("single-tap: %d REs with zero channel and zero noise set to 0", int(dead.sum()))
    return np.divide(np.conj(h) * y, den, out=np.zeros_like(y), where=~dead)


def banded_mmse_equalize(rx_grid, matrices, noise_var: float) -> np.ndarray:
    """Per-symbol ``(G^H G + noise_var I)^-1 G^H y`` on the banded system."""
    y = _as_array(rx_grid)
    mats = list(matrices)
    if len(mats) != y.shape[1]:
        raise ValueError(f"{len(mats)} ICI matrices for {y.shape[1]} symbols")
    k = y.shape[0]
    out = np.empty_like(y)
    for l, mat in enumerate(mats):
        g = mat.dense()
        a = g.conj().T @ g + noise_var * np.eye(k)
        u = min(2 * mat.half_bandwidth, k - 1)
        ab = np.zeros((u + 1, k), dtype=np.complex128)
        for d in range(u + 1):
            ab[u - d, d:] = np.diagonal(a, offset=d)
        try:
            x = solveh_banded(ab, g.conj().T @ y[:, l], lower=False)
        except (LinAlgError, ValueError) as exc:
            raise EqualizerError(f"banded MMSE solve failed at symbol {mat.symbol_index}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise EqualizerError(f"banded MMSE produced non-finite output at symbol {mat.symbol_index}")
        out[:, l] = x
    return out


def _clamp(x: np.ndarray, radius: float) -> np.ndarray:
    mag = np.abs(x)
    scale = np.where(mag > radius, radius / np.maximum(mag, 1e-300), 1.0)
    return x * scale


def imfc_equalize(
    rx_grid,
    paths: PathSet,
    numerology: Numerology,
    noise_var: float,
    n_iters: int = 4,
    band: int = 4,
    constellation: ConstellationSpec | None = None,
    operator: PathOperator | None = None,
    return_info: bool = False,
):
    """IMFC-style iterative per-path matched-filter cancellation.

    Starts from single-tap MMSE on the path-reconstructed CTF. Each pass
    regenerates the received grid path by path, matched-filters the residual
    on every path (conjugate delay ramp, Doppler de-rotation and leakage),
    combines the paths by maximum-ratio weighting normalised per RE, and
    clamps the carried estimate to the constellation's outer radius. The
    returned soft symbols are the last accepted unclamped update; a pass that
    increases the residual energy is rejected and ends the loop.
    """
    if len(paths) == 0:
        raise ValueError("IMFC needs at least one path")
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    y = _as_array(rx_grid)
    op = operator if operator is not None else path_operator(paths, numerology, band)
    radius = (constellation or ConstellationSpec(4)).max_radius

    soft = single_tap_equalize(y, op.ctf(), noise_var)
    state = _clamp(soft, radius)
    resid = y - op.apply(state)
    energy = float(np.vdot(resid, resid).real)
    energies = [energy]
    den = op.column_energy() + noise_var
    den = np.where(den > 0, den, 1.0)
    diverged = False
    for _ in range(n_iters):
        update = state + (op.adjoint(resid) - noise_var * state) / den
        if not np.all(np.isfinite(update)):
            diverged = True
            break
        new_state = _clamp(update, radius)
        new_resid = y - op.apply(new_state)
        new_energy = float(np.vdot(new_resid, new_resid).real)
        if new_energy > energy * (1 + 1e-12) + 1e-300:
            diverged = True
            break
        soft, state, resid, energy = update, new_state, new_resid, new_energy
        energies.append(energy)
    if diverged:
        log.debug("IMFC stopped after %d accepted passes (residual grew)", len(energies) - 1)
    if return_info:
        return soft, {"residual_energy": energies, "diverged": diverged}
    return soft


def hard_decisions(soft: np.ndarray, constellation: ConstellationSpec) -> np.ndarray:
    """Nearest constellation point for each soft symbol."""
    flat = np.asarray(soft).ravel()
    pts = map_bits(demap_symbols(flat, constellation), constellation)
    return pts.reshape(np.shape(soft))
