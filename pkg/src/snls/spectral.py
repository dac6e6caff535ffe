"""Concrete eigenbases of the operator pair (A, S) on desk-scale geometries.

A is the (negative) Laplacian on a flat torus (0, 2*pi)^d or on the box
(0, pi)^d with Dirichlet or Neumann boundary conditions; S is the strictly
positive operator used for the dyadic projection machinery:

    torus:     S = I - Laplacian      s_k = 1 + |k|^2
    dirichlet: S = A = -Laplacian_D   s_k = |k|^2,  k_i >= 1
    neumann:   S = eps*I - Laplacian_N, eps = 1, so s_k = 1 + |k|^2

Fields are stored as complex coefficient vectors over an orthonormal
eigenfunction family h_k; transforms to and from a fixed quadrature grid are
FFT-based (complex exponentials on the torus, DST-I / DCT-II on the boxes)
and are exact on band-limited fields.  All transforms accept leading batch
axes, so an ensemble of coefficient vectors transforms in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.fft

BASIS_KINDS = ("torus1d", "torus2d", "dirichlet1d", "dirichlet2d", "neumann1d", "neumann2d")

NEUMANN_EPS = 1.0


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class EigenBasis:
    """Immutable spectral realization of (A, S): eigenvalues, transforms, grid."""

    kind: str
    modes_per_axis: int
    oversample: int
    dim: int
    mode_index_set: Tuple[Tuple[int, ...], ...]
    a_eigs: np.ndarray          # eigenvalues of A, shape (n_modes,)
    s_eigs: np.ndarray          # eigenvalues of S, strictly positive
    grid_shape: Tuple[int, ...]
    grid_axes: Tuple[np.ndarray, ...]   # 1d node coordinates per axis
    quad_weight: float          # uniform quadrature weight per node
    domain_measure: float

    @property
    def n_modes(self) -> int:
        return len(self.mode_index_set)

    @property
    def n_grid(self) -> int:
        return int(np.prod(self.grid_shape))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Pointwise synthesis sum_k c_k h_k on the grid; batched over leading axes."""
        if coeffs.shape[-1] != self.n_modes:
            raise BasisError(
                f"coefficient length {coeffs.shape[-1]} does not match basis with {self.n_modes} modes")
        return _SYNTH[self.kind](self, np.asarray(coeffs, dtype=np.complex128))

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Quadrature inner products <f, h_k>; exact for band-limited f."""
        if values.shape[-self.dim:] != self.grid_shape:
            raise BasisError(
                f"grid shape {values.shape[-self.dim:]} does not match basis grid {self.grid_shape}")
        return _ANALYZE[self.kind](self, np.asarray(values, dtype=np.complex128))


@dataclass
class SpectralField:
    """State vector u in H_n: complex coefficients aligned with mode_index_set."""

    coeffs: np.ndarray
    basis: EigenBasis

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (self.basis.n_modes,):
            raise BasisError(
                f"expected {self.basis.n_modes} coefficients, got shape {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs.view(np.float64))):
            raise BasisError("non-finite coefficient")

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy(), self.basis)


# ---------------------------------------------------------------------------
# construction

def make_basis(kind: str, modes_per_axis: int, oversample: int = 2) -> EigenBasis:
    if kind not in BASIS_KINDS:
        raise BasisError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
    if modes_per_axis < 2:
        raise BasisError("modes_per_axis must be at least 2")
    if oversample < 2:
        raise BasisError("oversample must be at least 2 (Lp quadrature contract)")
    if kind.startswith("torus") and modes_per_axis % 2 != 0:
        raise BasisError("torus bases require an even modes_per_axis (FFT layout)")

    dim = 2 if kind.endswith("2d") else 1
    M = modes_per_axis
    N = oversample * M

    if kind.startswith("torus"):
        ks = np.fft.fftfreq(M, d=1.0 / M).astype(int)       # 0, 1, .., M/2-1, -M/2, .., -1
        axis_nodes = np.arange(N) * (2.0 * np.pi / N)
        measure_axis = 2.0 * np.pi
        grid_per_axis = N
    elif kind.startswith("dirichlet"):
        ks = np.arange(1, M + 1)
        axis_nodes = np.arange(1, N) * (np.pi / N)          # interior nodes only
        measure_axis = np.pi
        grid_per_axis = N - 1
    else:  # neumann, midpoint rule for exact discrete cosine orthogonality
        ks = np.arange(M)
        axis_nodes = (np.arange(N) + 0.5) * (np.pi / N)
        measure_axis = np.pi
        grid_per_axis = N

    if dim == 1:
        modes = tuple((int(k),) for k in ks)
        ksq = ks.astype(float) ** 2
        grid_shape = (grid_per_axis,)
        grid_axes = (axis_nodes,)
    else:
        k1, k2 = np.meshgrid(ks, ks, indexing="ij")
        modes = tuple((int(a), int(b)) for a, b in zip(k1.ravel(), k2.ravel()))
        ksq = (k1.astype(float) ** 2 + k2.astype(float) ** 2).ravel()
        grid_shape = (grid_per_axis, grid_per_axis)
        grid_axes = (axis_nodes, axis_nodes)

    a_eigs = ksq
    if kind.startswith("dirichlet"):
        s_eigs = ksq.copy()
    else:
        s_eigs = 1.0 + ksq if kind.startswith("torus") else NEUMANN_EPS + ksq

    quad_weight = (measure_axis / N) ** dim
    return EigenBasis(
        kind=kind,
        modes_per_axis=M,
        oversample=oversample,
        dim=dim,
        mode_index_set=modes,
        a_eigs=a_eigs,
        s_eigs=s_eigs,
        grid_shape=grid_shape,
        grid_axes=grid_axes,
        quad_weight=quad_weight,
        domain_measure=measure_axis ** dim,
    )


# ---------------------------------------------------------------------------
# torus transforms: h_k(x) = exp(i k.x) / (2 pi)^{d/2}

def _torus_positions(basis: EigenBasis) -> np.ndarray:
    N = basis.oversample * basis.modes_per_axis
    ks = np.array([m[0] for m in basis.mode_index_set]) if basis.dim == 1 else None
    if basis.dim == 1:
        return np.mod(ks, N)
    k = np.array(basis.mode_index_set)
    return np.mod(k[:, 0], N) * N + np.mod(k[:, 1], N)


def _synth_torus(basis: EigenBasis, coeffs: np.ndarray) -> np.ndarray:
    N = basis.oversample * basis.modes_per_axis
    pos = _torus_pos_cache(basis)
    lead = coeffs.shape[:-1]
    buf = np.zeros(lead + (N ** basis.dim,), dtype=np.complex128)
    buf[..., pos] = coeffs
    norm = (2.0 * np.pi) ** (basis.dim / 2.0)
    if basis.dim == 1:
        return np.fft.ifft(buf, axis=-1) * (N / norm)
    buf = buf.reshape(lead + (N, N))
    return np.fft.ifft2(buf, axes=(-2, -1)) * (N * N / norm)


def _analyze_torus(basis: EigenBasis, values: np.ndarray) -> np.ndarray:
    N = basis.oversample * basis.modes_per_axis
    pos = _torus_pos_cache(basis)
    norm = (2.0 * np.pi) ** (basis.dim / 2.0)
    if basis.dim == 1:
        hat = np.fft.fft(values, axis=-1)
        return hat[..., pos] * (norm / N)
    hat = np.fft.fft2(values, axes=(-2, -1))
    lead = values.shape[:-2]
    return hat.reshape(lead + (N * N,))[..., pos] * (norm / (N * N))


_pos_cache: dict = {}


def _torus_pos_cache(basis: EigenBasis) -> np.ndarray:
    key = (basis.kind, basis.modes_per_axis, basis.oversample)
    if key not in _pos_cache:
        _pos_cache[key] = _torus_positions(basis)
    return _pos_cache[key]


# ---------------------------------------------------------------------------
# Dirichlet transforms: h_k(x) = sqrt(2/pi) sin(k x) per axis on (0, pi)
# DST-I on the N-1 interior nodes gives exact discrete orthogonality.

def _dst1(values: np.ndarray, axis: int) -> np.ndarray:
    return scipy.fft.dst(values, type=1, axis=axis)


def _synth_dirichlet(basis: EigenBasis, coeffs: np.ndarray) -> np.ndarray:
    M = basis.modes_per_axis
    n_axis = basis.grid_shape[0]
    factor = 1.0 / np.sqrt(2.0 * np.pi)      # sqrt(2/pi) * (1/2)
    if basis.dim == 1:
        buf = np.zeros(coeffs.shape[:-1] + (n_axis,), dtype=np.complex128)
        buf[..., :M] = coeffs
        return _dst1(buf, -1) * factor
    lead = coeffs.shape[:-1]
    buf = np.zeros(lead + (n_axis, n_axis), dtype=np.complex128)
    buf[..., :M, :M] = coeffs.reshape(lead + (M, M))
    return _dst1(_dst1(buf, -1), -2) * factor ** 2


def _analyze_dirichlet(basis: EigenBasis, values: np.ndarray) -> np.ndarray:
    M = basis.modes_per_axis
    N = basis.oversample * basis.modes_per_axis
    factor = np.sqrt(2.0 * np.pi) / (2.0 * N)   # (pi/N) * sqrt(2/pi) / 2
    if basis.dim == 1:
        return _dst1(values, -1)[..., :M] * factor
    hat = _dst1(_dst1(values, -1), -2)[..., :M, :M] * factor ** 2
    return hat.reshape(values.shape[:-2] + (M * M,))


# ---------------------------------------------------------------------------
# Neumann transforms: h_0 = 1/sqrt(pi), h_k = sqrt(2/pi) cos(k x) per axis,
# midpoint nodes, DCT-II/DCT-III pair.

def _neumann_norm_factors(basis: EigenBasis) -> np.ndarray:
    M = basis.modes_per_axis
    nf = np.full(M, np.sqrt(2.0 / np.pi))
    nf[0] = 1.0 / np.sqrt(np.pi)
    return nf


def _synth_neumann(basis: EigenBasis, coeffs: np.ndarray) -> np.ndarray:
    M = basis.modes_per_axis
    N = basis.oversample * basis.modes_per_axis
    nf = _neumann_norm_factors(basis)

    def one_axis(c, axis):
        z = np.moveaxis(c, axis, -1).copy()
        z *= nf
        z[..., 1:] *= 0.5
        buf = np.zeros(z.shape[:-1] + (N,), dtype=np.complex128)
        buf[..., :M] = z
        out = scipy.fft.dct(buf, type=3, axis=-1)
        return np.moveaxis(out, -1, axis)

    if basis.dim == 1:
        return one_axis(coeffs, -1)
    lead = coeffs.shape[:-1]
    c2 = coeffs.reshape(lead + (M, M))
    return one_axis(one_axis(c2, -1), -2)


def _analyze_neumann(basis: EigenBasis, values: np.ndarray) -> np.ndarray:
    M = basis.modes_per_axis
    N = basis.oversample * basis.modes_per_axis
    nf = _neumann_norm_factors(basis)

    def one_axis(v, axis):
        out = scipy.fft.dct(v, type=2, axis=axis)
        out = np.moveaxis(out, axis, -1)[..., :M]
        out = out * (nf * (np.pi / (2.0 * N)))
        return np.moveaxis(out, -1, axis)

    if basis.dim == 1:
        return one_axis(values, -1)
    hat = one_axis(one_axis(values, -1), -2)
    return hat.reshape(values.shape[:-2] + (M * M,))


_SYNTH = {
    "torus1d": _synth_torus, "torus2d": _synth_torus,
    "dirichlet1d": _synth_dirichlet, "dirichlet2d": _synth_dirichlet,
    "neumann1d": _synth_neumann, "neumann2d": _synth_neumann,
}
_ANALYZE = {
    "torus1d": _analyze_torus, "torus2d": _analyze_torus,
    "dirichlet1d": _analyze_dirichlet, "dirichlet2d": _analyze_dirichlet,
    "neumann1d": _analyze_neumann, "neumann2d": _analyze_neumann,
}


# ---------------------------------------------------------------------------
# public operations

def to_spectral(values: np.ndarray, basis: EigenBasis) -> SpectralField:
    return SpectralField(basis.analyze(values), basis)


def from_spectral(u: SpectralField) -> np.ndarray:
    return u.basis.synthesize(u.coeffs)


def apply_frac_power(u: SpectralField, which: str, exponent: float) -> SpectralField:
    """Coefficient-wise multiplication by a_k^exponent or s_k^exponent.

    Negative powers of A map the kernel mode (a_k = 0) to 0 by convention;
    the kernel mode only occurs for torus/neumann k = 0 and the convention is
    used by diagnostics only, never by the dynamics.
    """
    if not np.isfinite(exponent):
        raise BasisError("exponent must be finite")
    if which == "A":
        eigs = u.basis.a_eigs
    elif which == "S":
        eigs = u.basis.s_eigs
    else:
        raise BasisError(f"which must be 'A' or 'S', got {which!r}")
    if exponent == 0.0:
        return SpectralField(u.coeffs.copy(), u.basis)
    with np.errstate(divide="ignore"):
        mult = np.where(eigs > 0.0, np.power(eigs, exponent, where=eigs > 0.0), 0.0)
    return SpectralField(u.coeffs * mult, u.basis)


@dataclass(frozen=True)
class NormRecord:
    h_norm_sq: float
    v_norm_sq: float
    basis: EigenBasis = field(repr=False)
    _grid_abs: np.ndarray = field(repr=False)

    def lp_norm(self, p: float) -> float:
        if p < 1.0 or not np.isfinite(p):
            raise BasisError("lp_norm requires p in [1, inf)")
        return float((self.basis.quad_weight * np.sum(self._grid_abs ** p)) ** (1.0 / p))


def norms(u: SpectralField) -> NormRecord:
    """H and V norms from coefficients, Lp norms by oversampled-grid quadrature."""
    absq = np.abs(u.coeffs) ** 2
    h = float(np.sum(absq))
    v = float(np.sum((1.0 + u.basis.a_eigs) * absq))
    grid_abs = np.abs(from_spectral(u))
    return NormRecord(h_norm_sq=h, v_norm_sq=v, basis=u.basis, _grid_abs=grid_abs)


def h_norm_sq(coeffs: np.ndarray) -> np.ndarray:
    """Batched squared H-norm along the last axis."""
    # the float view needs a contiguous layout; FFT slices are strided
    c = np.ascontiguousarray(coeffs)
    r = c.view(np.float64).reshape(c.shape + (2,))
    return np.sum(r * r, axis=(-2, -1))


def v_norm_sq(coeffs: np.ndarray, basis: EigenBasis) -> np.ndarray:
    """Batched squared V-norm: sum (1 + a_k) |c_k|^2."""
    return np.sum((1.0 + basis.a_eigs) * (np.abs(coeffs) ** 2), axis=-1)
