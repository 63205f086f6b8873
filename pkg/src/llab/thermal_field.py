"""Discretized thermal Bose field.

The one-particle space of the thermal (Araki-Woods) representation is
functions on the doubled frequency line, sampled on a :class:`DoubledGrid`.
A function ``f`` on the grid is identified with the coefficient vector
``sqrt(w_j) f(u_j)``, so ``a(f) = sum_j sqrt(w_j) conj(f(u_j)) a_j``.

Positive-frequency inner products carry the radial measure ``omega^2 d omega``;
the isotropic angular factor ``4 pi`` is tracked by the callers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

LOG_SPACE_THRESHOLD = 30.0


class FieldError(ValueError):
    """Invalid grid or form factor, or an unsupported field-operator request."""


class GridMismatchError(FieldError):
    pass


class UnsupportedGridError(FieldError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise FieldError("radial nodes and weights must be 1-d arrays of equal length")
        if np.any(nodes <= 0):
            raise FieldError("radial nodes must be positive")
        if np.any(np.diff(nodes) <= 0):
            raise FieldError("radial nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise FieldError("radial weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def midpoint(cls, omega_max: float, n: int) -> "RadialGrid":
        """Uniform cells of width ``omega_max / n``, nodes at cell centres."""
        h = omega_max / n
        return cls(h * (np.arange(n) + 0.5), np.full(n, h))

    @classmethod
    def gauss_legendre(cls, omega_max: float, n: int) -> "RadialGrid":
        x, w = leggauss(n)
        return cls(0.5 * omega_max * (x + 1.0), 0.5 * omega_max * w)

    def inner(self, f, g) -> complex:
        """``<f, g>`` with measure ``omega^2 d omega`` (antilinear in ``f``)."""
        return complex(np.sum(self.weights * self.nodes ** 2 * np.conj(f) * g))


@dataclass(frozen=True)
class DoubledGrid:
    """Nodes on the doubled line, symmetric under ``u -> -u``, zero excluded."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise FieldError("doubled-grid nodes and weights must be 1-d arrays of equal length")
        if np.any(nodes == 0):
            raise FieldError("doubled grid must exclude u = 0")
        if np.any(np.diff(nodes) <= 0):
            raise FieldError("doubled-grid nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise FieldError("doubled-grid weights must be positive")
        if not (np.allclose(nodes, -nodes[::-1], rtol=0, atol=1e-12 * max(1.0, np.abs(nodes).max()))
                and np.allclose(weights, weights[::-1], rtol=1e-12, atol=0)):
            raise FieldError("doubled grid must be symmetric under u -> -u")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def from_radial(cls, radial: RadialGrid) -> "DoubledGrid":
        return cls(np.concatenate([-radial.nodes[::-1], radial.nodes]),
                   np.concatenate([radial.weights[::-1], radial.weights]))

    @classmethod
    def uniform(cls, u_max: float, n_positive: int) -> "DoubledGrid":
        """Midpoint grid ``u = +-(j + 1/2) h`` with ``h = u_max / n_positive``."""
        return cls.from_radial(RadialGrid.midpoint(u_max, n_positive))

    @cached_property
    def positive(self) -> RadialGrid:
        half = len(self.nodes) // 2
        return RadialGrid(self.nodes[half:], self.weights[half:])

    @property
    def spacing(self) -> float:
        """Common node spacing; raises if the grid is not uniform."""
        steps = np.diff(self.nodes)
        h = steps.mean()
        if not (np.allclose(steps, h, rtol=1e-9, atol=0)
                and np.allclose(self.weights, h, rtol=1e-9, atol=0)):
            raise UnsupportedGridError("grid is not uniform (central differences need equal spacing)")
        return float(h)

    def inner(self, f, g) -> complex:
        """``<f, g>`` with measure ``du`` (antilinear in ``f``)."""
        return complex(np.sum(self.weights * np.conj(f) * g))


@dataclass(frozen=True)
class FormFactor:
    """Isotropic coupling function sampled on a radial grid."""

    grid: RadialGrid
    samples: np.ndarray
    ir_exponent: float
    uv_exponent: float
    angular_mode: str = "isotropic"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != self.grid.nodes.shape:
            raise GridMismatchError("form-factor samples do not match the radial grid")
        if self.angular_mode != "isotropic":
            raise FieldError(f"unsupported angular mode {self.angular_mode!r}")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def power_exponential(cls, grid: RadialGrid, p: float, cutoff: float,
                          amplitude: complex = 1.0, uv_exponent: float = 4.0) -> "FormFactor":
        """``g(omega) = amplitude * omega^p * exp(-omega / cutoff)``.

        The exponential decay satisfies every power-law UV bound, so
        ``uv_exponent`` is only recorded.
        """
        w = grid.nodes
        return cls(grid, amplitude * w ** p * np.exp(-w / cutoff), p, uv_exponent)

    def check_bounds(self, k1: float, k2: float, K1: float, K2: float) -> list[str]:
        """Grid check of the IR and UV power bounds; returns violation messages."""
        w, a = self.grid.nodes, np.abs(self.samples)
        problems = []
        low = w < k1
        bad = low & (a > k2 * w ** self.ir_exponent * (1 + 1e-12))
        if bad.any():
            problems.append(f"IR bound |g| <= {k2} w^{self.ir_exponent} fails at w={w[bad][0]:.6g}")
        high = w > K1
        bad = high & (a > K2 * w ** (-self.uv_exponent) * (1 + 1e-12))
        if bad.any():
            problems.append(f"UV bound |g| <= {K2} w^-{self.uv_exponent} fails at w={w[bad][0]:.6g}")
        return problems


@dataclass(frozen=True)
class PowerExpTemplate:
    """Analytic form factor ``amplitude * omega^p * exp(-omega / cutoff)``."""

    p: float
    cutoff: float
    amplitude: complex = 1.0
    uv_exponent: float = 4.0

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.amplitude * omega ** self.p * np.exp(-omega / self.cutoff)

    def sample(self, grid: RadialGrid) -> FormFactor:
        return FormFactor(grid, self(grid.nodes), self.p, self.uv_exponent)

    def scaled(self, s: float) -> "PowerExpTemplate":
        return PowerExpTemplate(self.p, self.cutoff, s * self.amplitude, self.uv_exponent)


def planck_weight(omega, beta: float):
    """Bose occupation ``1 / (exp(beta omega) - 1)``, stable at both ends."""
    omega = np.asarray(omega, dtype=float)
    if beta <= 0:
        raise FieldError(f"beta must be positive, got {beta}")
    if np.any(omega <= 0):
        raise FieldError("planck_weight needs omega > 0")
    x = beta * omega
    out = np.empty_like(x)
    small = x <= LOG_SPACE_THRESHOLD
    out[small] = 1.0 / np.expm1(x[small])
    big = ~small
    out[big] = np.exp(-x[big] - np.log1p(-np.exp(-x[big])))
    return out if out.ndim else float(out)


def _positive_index(f: FormFactor, out: DoubledGrid) -> np.ndarray:
    pos = out.positive
    if len(pos) != len(f.grid) or not np.allclose(pos.nodes, f.grid.nodes, rtol=1e-12, atol=0):
        raise GridMismatchError("doubled grid's positive nodes differ from the form-factor grid")
    if not np.allclose(pos.weights, f.grid.weights, rtol=1e-12, atol=0):
        raise GridMismatchError("doubled grid's positive weights differ from the form-factor grid")
    return np.arange(len(pos))


def bogoliubov_map(f: FormFactor, beta: float, out: DoubledGrid) -> np.ndarray:
    """``tau_beta f`` on the doubled grid.

    ``u > 0``: ``u sqrt(1 + n(u)) f(u)``; ``u < 0``: ``-|u| sqrt(n(|u|)) conj f(|u|)``,
    with ``n`` the Planck weight.
    """
    _positive_index(f, out)
    w = f.grid.nodes
    n = planck_weight(w, beta)
    plus = w * np.sqrt(1.0 + n) * f.samples
    minus = -w * np.sqrt(n) * np.conj(f.samples)
    return np.concatenate([minus[::-1], plus])


def kms_weighted(values, grid: DoubledGrid, beta: float) -> np.ndarray:
    """Pointwise multiplication by ``exp(-beta u / 2)``."""
    values = np.asarray(values, dtype=complex)
    if values.shape != grid.nodes.shape:
        raise GridMismatchError("values do not match the doubled grid")
    return values * np.exp(-0.5 * beta * grid.nodes)


def kms_bogoliubov(f: FormFactor, beta: float, out: DoubledGrid) -> np.ndarray:
    """``exp(-beta u / 2) tau_beta f`` without forming large exponentials.

    ``u > 0``: ``u sqrt(n(u)) f(u)``; ``u < 0``: ``-|u| sqrt(1 + n(|u|)) conj f(|u|)``.
    """
    _positive_index(f, out)
    w = f.grid.nodes
    n = planck_weight(w, beta)
    plus = w * np.sqrt(n) * f.samples
    minus = -w * np.sqrt(1.0 + n) * np.conj(f.samples)
    return np.concatenate([minus[::-1], plus])


class FockSpace:
    """Bosonic Fock space over a doubled grid, truncated at ``N <= n_max``.

    Basis states are ordered by total number, then lexicographically by the
    sorted tuple of occupied mode indices.
    """

    def __init__(self, grid: DoubledGrid, n_max: int):
        if n_max < 1:
            raise FieldError("n_max must be >= 1")
        self.grid = grid
        self.mode_count = len(grid)
        self.n_max = int(n_max)
        self.basis: list[tuple[int, ...]] = []
        for k in range(self.n_max + 1):
            for modes in combinations_with_replacement(range(self.mode_count), k):
                occ = [0] * self.mode_count
                for j in modes:
                    occ[j] += 1
                self.basis.append(tuple(occ))
        self.index = {occ: i for i, occ in enumerate(self.basis)}
        self.occupations = np.array(self.basis, dtype=float).reshape(len(self.basis), self.mode_count)
        self._ladder = self._ladder_structure()

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @staticmethod
    def expected_dimension(mode_count: int, n_max: int) -> int:
        return sum(comb(mode_count + k - 1, k) for k in range(n_max + 1))

    @cached_property
    def total_number(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    @property
    def vacuum_index(self) -> int:
        return 0

    def _ladder_structure(self):
        rows, cols, modes, vals = [], [], [], []
        for src, occ in enumerate(self.basis):
            for j, nj in enumerate(occ):
                if nj:
                    lowered = list(occ)
                    lowered[j] -= 1
                    rows.append(self.index[tuple(lowered)])
                    cols.append(src)
                    modes.append(j)
                    vals.append(np.sqrt(nj))
        return (np.array(rows, dtype=int), np.array(cols, dtype=int),
                np.array(modes, dtype=int), np.array(vals, dtype=float))

    def mode_annihilator(self, j: int) -> sp.csr_matrix:
        rows, cols, modes, vals = self._ladder
        sel = modes == j
        return sp.csr_matrix((vals[sel], (rows[sel], cols[sel])),
                             shape=(self.dimension, self.dimension), dtype=complex)


def _check_on_grid(f, F: FockSpace) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    if f.shape != (F.mode_count,):
        raise GridMismatchError(f"function has shape {f.shape}, Fock grid has {F.mode_count} modes")
    return f


def annihilator(f, F: FockSpace) -> sp.csr_matrix:
    f = _check_on_grid(f, F)
    rows, cols, modes, vals = F._ladder
    coeff = np.sqrt(F.grid.weights) * np.conj(f)
    data = coeff[modes] * vals
    return sp.csr_matrix((data, (rows, cols)), shape=(F.dimension, F.dimension), dtype=complex)


def creator(f, F: FockSpace) -> sp.csr_matrix:
    return annihilator(f, F).conj().T.tocsr()


def field_op(f, F: FockSpace) -> sp.csr_matrix:
    a = annihilator(f, F)
    return ((a + a.conj().T) / np.sqrt(2.0)).tocsr()


def second_quantize(h, F: FockSpace) -> sp.csr_matrix:
    """``dGamma(h)``.

    A vector ``h`` is a multiplication operator, giving the diagonal
    ``sum_j n_j h(u_j)``. A square matrix ``h`` is a one-particle operator on
    the coefficient vectors, giving ``sum_jk h_jk a_j^* a_k``.
    """
    h = np.asarray(h) if not sp.issparse(h) else h
    if not sp.issparse(h) and h.ndim == 1:
        if h.shape != (F.mode_count,):
            raise GridMismatchError("multiplier does not match the Fock grid")
        if np.iscomplexobj(h) and np.any(np.imag(h) != 0):
            raise FieldError("multiplication operator for dGamma must be real")
        return sp.diags(F.occupations @ np.real(h)).astype(complex).tocsr()
    h = sp.coo_matrix(h)
    if h.shape != (F.mode_count, F.mode_count):
        raise GridMismatchError("one-particle operator does not match the Fock grid")
    ann = [F.mode_annihilator(j) for j in range(F.mode_count)]
    out = sp.csr_matrix((F.dimension, F.dimension), dtype=complex)
    for j, k, v in zip(h.row, h.col, h.data):
        if v != 0:
            out = out + v * (ann[j].conj().T @ ann[k])
    return out.tocsr()


def number_operator(F: FockSpace) -> sp.csr_matrix:
    return second_quantize(np.ones(F.mode_count), F)


def translation_generator(grid: DoubledGrid) -> np.ndarray:
    """``i d/du`` by central differences with zero extension past the ends."""
    h = grid.spacing
    n = len(grid)
    D = (np.eye(n, k=1) - np.eye(n, k=-1)) / (2.0 * h)
    return 1j * D


def central_difference(values, grid: DoubledGrid) -> np.ndarray:
    """``d/du`` of grid values, the same stencil as :func:`translation_generator`."""
    return -1j * (translation_generator(grid) @ np.asarray(values, dtype=complex))


def samples_to_csv(nodes, weights, values=None) -> str:
    """CSV with columns ``node, weight, re, im``; ``values`` default to zero."""
    nodes, weights = np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float)
    values = np.zeros(len(nodes), dtype=complex) if values is None else np.asarray(values, dtype=complex)
    if not nodes.shape == weights.shape == values.shape:
        raise GridMismatchError("nodes, weights and values must have the same length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "weight", "re", "im"])
    for row in zip(nodes, weights, values.real, values.imag):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def samples_from_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["node", "weight", "re", "im"]:
        raise FieldError("expected header node,weight,re,im")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, 4)
    return data[:, 0], data[:, 1], data[:, 2] + 1j * data[:, 3]


def form_factor_to_csv(f: FormFactor) -> str:
    return samples_to_csv(f.grid.nodes, f.grid.weights, f.samples)


def form_factor_from_csv(text: str, ir_exponent: float, uv_exponent: float) -> FormFactor:
    nodes, weights, values = samples_from_csv(text)
    return FormFactor(RadialGrid(nodes, weights), values, ir_exponent, uv_exponent)
