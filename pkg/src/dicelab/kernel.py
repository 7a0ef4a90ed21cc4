"""The discrete skew kernel M*_n, its paired spectrum and the limit spectrum.

M_n has entries 1{i<j} + 1{i=j}/2, so b^T M_n a counts the face pairs won
by a (ties as halves). M*_n projects out the constant and linear
directions on both sides, leaving a skew-symmetric matrix whose bilinear
form equals the match margin on valid frequency vectors.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .dice import FrequencyVector
from .errors import DimensionMismatch, DomainError, GridTooSmall, PairingFailure

SPECTRUM_VERSION = "1"
MAX_N = 2048
CONSTRUCTIONS = ("projection", "closed_form")
CACHE_ENV = "DICE_LAB_CACHE"


@dataclass(frozen=True, eq=False)
class SkewKernelMatrix:
    n: int
    entries: np.ndarray
    construction: str = "projection"


def comparison_matrix(n: int) -> np.ndarray:
    """M_n: strict upper triangle of ones plus one half on the diagonal."""
    return np.triu(np.ones((n, n)), 1) + 0.5 * np.eye(n)


def null_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    v1 = np.full(n, 1.0 / math.sqrt(n))
    i = np.arange(1, n + 1, dtype=float)
    v2 = (i - (n + 1) / 2) / math.sqrt(n * (n * n - 1) / 12) if n > 1 else np.zeros(n)
    return v1, v2


def _projection(n: int) -> np.ndarray:
    m = comparison_matrix(n)
    v1, v2 = null_basis(n)
    # apply P = I - v1 v1^T - v2 v2^T on both sides without forming P
    def proj_cols(a):
        return a - np.outer(a @ v1, v1) - np.outer(a @ v2, v2)

    m = proj_cols(m)
    m = proj_cols(m.T).T
    return m


def _closed_form(n: int) -> np.ndarray:
    if n < 2:
        return np.zeros((n, n))
    i = np.arange(1, n + 1, dtype=float)
    x = (n + 1 - 2 * i) / (n - 1)
    xx, yy = x[:, None], x[None, :]
    ind = ((xx >= yy).astype(float) - (xx <= yy).astype(float)) / 2
    return (
        ind
        - 3 * (xx - yy) * (1 - 1 / n) / 4
        - 3 * xx * yy * (xx - yy) * (n - 1) ** 2 / (4 * n * (n + 1))
    )


def build_m_star(n: int, construction: str = "projection") -> SkewKernelMatrix:
    if n < 2:
        raise DomainError("M* needs n >= 2")
    if n > MAX_N:
        raise DomainError(f"dense kernels are capped at n={MAX_N}")
    if construction == "projection":
        m = _projection(n)
        # the projected matrix is skew up to rounding; make it exactly so
        m = (m - m.T) / 2
    elif construction == "closed_form":
        m = _closed_form(n)
    else:
        raise ValueError(f"construction must be one of {CONSTRUCTIONS}")
    return SkewKernelMatrix(n, m, construction)


def beats_bilinear(fa: FrequencyVector, fb: FrequencyVector, m: SkewKernelMatrix,
                   zero_tol: float | None = None) -> int:
    """Sign of b^T M* a, with values within ``zero_tol`` treated as zero.

    On valid frequency vectors the form equals the (half-integer) match
    margin, so the default tolerance of 1/8 separates zero from +-1/2 with
    a wide berth.
    """
    if not (fa.n == fb.n == m.n):
        raise DimensionMismatch("frequency vectors and kernel must share n")
    val = float(fb.counts @ m.entries @ fa.counts)
    tol = 0.125 if zero_tol is None else zero_tol
    if abs(val) <= tol:
        return 0
    return 1 if val > 0 else -1


def kernel_f(x, y):
    """Continuum kernel; f(x, x) = 0 by the indicator convention."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(x) > 1) or np.any(np.abs(y) > 1) or np.any(np.isnan(x)) or np.any(np.isnan(y)):
        raise DomainError("kernel arguments must lie in [-1, 1]")
    ind = (x >= y).astype(float) - (x <= y).astype(float)
    out = ind / 4 - 3 * (x - y) * (1 + x * y) / 8
    return out.item() if out.ndim == 0 else out


# Integral of f^2 over [-1, 1]^2, exact (piecewise polynomial on the two
# triangles x > y and x < y). Since M* ~ 2 f on a grid of spacing 2/n, this fixes
# sum_l sigma_l^2 = KERNEL_F_SQUARED_INTEGRAL / 2.
KERNEL_F_SQUARED_INTEGRAL = 1.0 / 20.0


# ---------------------------------------------------------------- spectrum


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    n: int
    sigmas: np.ndarray
    residual_zero_count: int
    max_pair_gap: float = 0.0
    basis: np.ndarray | None = field(default=None, repr=False)

    def reconstruct(self) -> np.ndarray:
        """Rebuild M from the paired basis: sum of sigma (w u^T - u w^T)."""
        if self.basis is None:
            raise ValueError("spectrum was computed without a basis")
        u = self.basis[:, 0::2]
        w = self.basis[:, 1::2]
        return (w * self.sigmas) @ u.T - (u * self.sigmas) @ w.T


def pair_tolerance(n: int) -> float:
    return 1e-7 * n


def spectrum(m: SkewKernelMatrix, with_basis: bool = False, pair_tol: float | None = None) -> SpectrumEstimate:
    a = m.entries
    n = m.n
    if not np.allclose(a, -a.T, atol=1e-12, rtol=0):
        raise PairingFailure("matrix is not skew-symmetric")
    tol = pair_tolerance(n) if pair_tol is None else pair_tol
    gram = a.T @ a
    gram = (gram + gram.T) / 2
    if with_basis:
        lam, vec = scipy.linalg.eigh(gram)
    else:
        lam = scipy.linalg.eigh(gram, eigvals_only=True)
        vec = None
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    sv = np.sqrt(lam)
    half = n // 2
    first, second = sv[0 : 2 * half : 2], sv[1 : 2 * half : 2]
    gaps = np.abs(first - second)
    max_gap = float(gaps.max()) if gaps.size else 0.0
    if max_gap > tol:
        ell = int(np.argmax(gaps)) + 1
        raise PairingFailure(f"singular values of pair {ell} differ by {max_gap:.3g} > {tol:.3g}")
    zero_count = 0
    if n % 2 == 1:
        if sv[-1] > tol:
            raise PairingFailure(f"odd n but the unpaired singular value is {sv[-1]:.3g}")
        zero_count = 1
    sigmas = (first + second) / 2
    basis = None
    if with_basis:
        vec = vec[:, order]
        basis = _paired_basis(a, vec, sigmas)
    return SpectrumEstimate(n, sigmas, zero_count, max_gap, basis)


def _paired_basis(a: np.ndarray, vec: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Columns (u_1, w_1, u_2, w_2, ...) with M u = sigma w and M w = -sigma u."""
    n = a.shape[0]
    out = np.zeros((n, 2 * sigmas.size))
    for ell, s in enumerate(sigmas):
        u = vec[:, 2 * ell]
        if s == 0:
            w = vec[:, 2 * ell + 1]
        else:
            w = a @ u / s
            # re-orthonormalize against u for numerical hygiene
            w = w - (w @ u) * u
            w /= np.linalg.norm(w)
        out[:, 2 * ell] = u
        out[:, 2 * ell + 1] = w
    return out


@dataclass(frozen=True)
class KernelConstants:
    """Fitted constants for the bounded-size matrix properties at one n."""

    n: int
    max_entry: float  # largest |entry|
    max_row_norm_over_sqrt_n: float
    frobenius_over_n: float
    tail_constant: float  # max over t of t * sum_{l>=t} sigma^2 / n^2
    lipschitz_constant: float  # max |M_ji - M_ki| n / |j - k| for i outside [j, k]
    null_residual_ones: float
    null_residual_linear: float


def lipschitz_constant(a: np.ndarray) -> float:
    """Row-Lipschitz constant; adjacent rows suffice by the triangle inequality."""
    n = a.shape[0]
    diff = np.abs(a[1:, :] - a[:-1, :]) * n
    # rows j and j+1: column i must avoid {j, j+1}
    j = np.arange(n - 1)[:, None]
    i = np.arange(n)[None, :]
    mask = (i != j) & (i != j + 1)
    return float(diff[mask].max()) if mask.any() else 0.0


def tail_constant(sigmas: np.ndarray, n: int, t_max: int | None = None) -> float:
    s2 = np.asarray(sigmas, dtype=float) ** 2
    tails = np.cumsum(s2[::-1])[::-1]
    t = np.arange(1, s2.size + 1)
    if t_max is not None:
        tails, t = tails[:t_max], t[:t_max]
    return float((t * tails).max() / n**2)


def kernel_constants(n: int, sigmas: np.ndarray | None = None) -> KernelConstants:
    a = build_m_star(n).entries
    if sigmas is None:
        sigmas = spectrum(SkewKernelMatrix(n, a)).sigmas
    i = np.arange(1, n + 1, dtype=float)
    return KernelConstants(
        n=n,
        max_entry=float(np.abs(a).max()),
        max_row_norm_over_sqrt_n=float(np.sqrt((a**2).sum(axis=1)).max() / math.sqrt(n)),
        frobenius_over_n=float(np.linalg.norm(a) / n),
        tail_constant=tail_constant(sigmas, n),
        lipschitz_constant=lipschitz_constant(a),
        null_residual_ones=float(np.abs(a @ np.ones(n)).max()),
        null_residual_linear=float(np.abs(a @ i).max()),
    )


# ------------------------------------------------------------ limit spectrum


@dataclass(frozen=True, eq=False)
class LimitSpectrum:
    sigmas: np.ndarray
    uncertainty: np.ndarray
    n_grid: tuple[int, ...]
    slopes: np.ndarray | None = None
    version: str = SPECTRUM_VERSION
    # True when the listed values are the whole spectrum (no tail)
    finite: bool = False

    @classmethod
    def exact(cls, sigmas) -> "LimitSpectrum":
        sig = np.asarray(sigmas, dtype=float)
        return cls(sig, np.zeros_like(sig), (), None, SPECTRUM_VERSION, True)

    @property
    def L(self) -> int:
        return int(self.sigmas.size)

    def truncated(self, L: int) -> "LimitSpectrum":
        if L > self.L:
            raise ValueError(f"only {self.L} limit values are available")
        sl = None if self.slopes is None else self.slopes[:L]
        return LimitSpectrum(self.sigmas[:L], self.uncertainty[:L], self.n_grid, sl, self.version, self.finite)

    def scaled(self, factor: float) -> "LimitSpectrum":
        sl = None if self.slopes is None else self.slopes * factor
        return LimitSpectrum(self.sigmas * factor, self.uncertainty * abs(factor), self.n_grid, sl,
                             self.version, self.finite)

    def decay_constant(self) -> float:
        """Asymptotic value of l * sigma_l, read off the upper half of the range."""
        ell = np.arange(1, self.L + 1)
        prod = ell * self.sigmas
        return float(np.median(prod[self.L // 2 :]))

    def tail_variance(self) -> float:
        """Variance carried by the modes beyond L: 2 sum_{l>L} sigma_l^2 ~ 2 C / L."""
        c = self.decay_constant() ** 2
        return 2 * c / self.L

    def head_variance(self) -> float:
        return float(2 * (self.sigmas**2).sum())

    def to_json(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "L": self.L,
            "sigma_limit": [float(x) for x in self.sigmas],
            "uncertainty": [float(x) for x in self.uncertainty],
            "version": self.version,
        }

    @classmethod
    def from_json(cls, d: dict) -> "LimitSpectrum":
        return cls(
            np.array(d["sigma_limit"], dtype=float),
            np.array(d["uncertainty"], dtype=float),
            tuple(int(x) for x in d["n_grid"]),
            None,
            str(d.get("version", SPECTRUM_VERSION)),
        )


def extrapolate(table: dict[int, np.ndarray], L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit sigma_{n,l}/n = sigma_l + beta_l / n across the grid for l <= L."""
    grid = sorted(table)
    inv = np.array([1.0 / n for n in grid])
    y = np.stack([table[n][:L] / n for n in grid])  # (G, L)
    design = np.stack([np.ones_like(inv), inv], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    sig, beta = coef[0], coef[1]
    if len(grid) > 2:
        resid = y - design @ coef
        unc = np.sqrt((resid**2).sum(axis=0) / (len(grid) - 2))
    else:
        unc = np.abs(sig - y[-1])
    return sig, unc, beta


def check_grid(n_grid, L: int) -> tuple[int, ...]:
    grid = tuple(sorted(set(int(n) for n in n_grid)))
    if len(grid) < 2:
        raise GridTooSmall("extrapolation needs at least two grid sizes")
    if L < 1:
        raise GridTooSmall("L must be positive")
    if L > grid[0] // 4:
        raise GridTooSmall(f"L={L} exceeds min(n_grid)/4 = {grid[0] // 4}")
    if grid[-1] > MAX_N:
        raise GridTooSmall(f"grid sizes are capped at {MAX_N}")
    return grid


def estimate_limit_spectrum(n_grid=(128, 256, 512, 1024), L: int = 32,
                            cache: "SpectrumCache | None" = None) -> LimitSpectrum:
    grid = check_grid(n_grid, L)
    table = {}
    for n in grid:
        table[n] = cache.sigmas(n) if cache is not None else spectrum(build_m_star(n)).sigmas
    sig, unc, beta = extrapolate(table, L)
    return LimitSpectrum(sig, unc, grid, beta)


# ------------------------------------------------------------------ caching


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.path.expanduser("~")) / ".cache" / "dicelab"


class SpectrumCache:
    """Per-n spectra as CSV files plus a JSON sidecar for the limit spectrum."""

    SIDECAR = "limit_spectrum.json"

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.computed: list[int] = []

    def csv_path(self, n: int) -> Path:
        return self.root / f"spectrum_n{n}_v{SPECTRUM_VERSION}.csv"

    @property
    def sidecar_path(self) -> Path:
        return self.root / self.SIDECAR

    def has(self, n: int) -> bool:
        return self.csv_path(n).exists()

    def sigmas(self, n: int) -> np.ndarray:
        if self.has(n):
            return read_spectrum_csv(self.csv_path(n))[1]
        sig = spectrum(build_m_star(n)).sigmas
        self.root.mkdir(parents=True, exist_ok=True)
        write_spectrum_csv(self.csv_path(n), n, sig)
        self.computed.append(n)
        return sig

    def save_limit(self, lim: LimitSpectrum) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.sidecar_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(lim.to_json(), indent=1, sort_keys=True) + "\n")
        tmp.replace(self.sidecar_path)
        return self.sidecar_path

    def load_limit(self) -> LimitSpectrum:
        if not self.sidecar_path.exists():
            raise FileNotFoundError(f"no limit spectrum at {self.sidecar_path}")
        data = json.loads(self.sidecar_path.read_text())
        lim = LimitSpectrum.from_json(data)
        if lim.version != SPECTRUM_VERSION:
            raise ValueError(f"cached spectrum version {lim.version} != {SPECTRUM_VERSION}")
        return lim


def write_spectrum_csv(path: Path, n: int, sigmas: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "ell", "sigma_n_ell"])
        for ell, s in enumerate(sigmas, start=1):
            w.writerow([n, ell, "%.17g" % s])
    tmp.replace(path)


def read_spectrum_csv(path: Path) -> tuple[int, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no spectrum rows")
    n = int(rows[0]["n"])
    sig = np.array([float(r["sigma_n_ell"]) for r in rows])
    return n, sig
