"""Domain types, vector fields, closed forms, and asymptotic constants for the
finite-dimensional Redner--Ben-Avraham--Kahng (RBK) coagulation system with
constant kernel.

The model: a j-cluster and a k-cluster react at unit rate and produce one
|j-k|-cluster.  With all densities above the cap N initially zero, the system
closes into the N-dimensional ODE

    dc_j/dt = sum_{k=1}^{N-j} c_{j+k} c_k  -  c_j * sum_{k=1}^{N} c_k,

where the production sum is empty for j = N.  Everything in this module is a
pure function of its inputs; no shared mutable state anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

__all__ = [
    "MAX_LAW_DIMENSION",
    "AsymptoticLaw",
    "ClusterState",
    "ConvergenceDiagnostic",
    "PhiState",
    "PsiState",
    "SupportProfile",
    "SystemConfig",
    "blowup_laws",
    "checked_factorial",
    "densities",
    "embed_reduced",
    "gcd_reduce",
    "longtime_laws",
    "longtime_laws_ambient",
    "nu_odd_closed",
    "phi_field",
    "psi_field",
    "rbk_field",
    "self_similar",
    "support_profile",
]

# Factorial-based constants stay in exact integer arithmetic up to 20!;
# anything above is rejected rather than silently losing precision.
MAX_LAW_DIMENSION = 20


def checked_factorial(k: int) -> int:
    """Exact integer factorial, restricted to k <= 20 (desk-scale guard)."""
    if k < 0:
        raise ValueError(f"factorial of negative value {k}")
    if k > MAX_LAW_DIMENSION:
        raise ValueError(
            f"factorial({k}) exceeds the exact-integer guard (max {MAX_LAW_DIMENSION}!)"
        )
    return math.factorial(k)


def _as_vector(c, name: str = "c") -> np.ndarray:
    """Coerce to a finite 1-D float vector."""
    arr = np.asarray(c, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemConfig:
    """Cluster-size cap N and the initial density vector (c_1, ..., c_N).

    N = 1 is admitted so that the support reduction can return single-cluster
    configurations; the asymptotic-law machinery imposes its own stricter
    dimension requirements.
    """

    N: int
    c0: np.ndarray

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        c0 = _as_vector(self.c0, "c0").copy()
        if c0.size != self.N:
            raise ValueError(f"c0 has length {c0.size}, expected N={self.N}")
        if np.any(c0 < 0):
            raise ValueError("initial densities must be nonnegative")
        c0.setflags(write=False)
        object.__setattr__(self, "c0", c0)


@dataclass(frozen=True)
class ClusterState:
    """Time plus the density vector; the fundamental simulation state."""

    t: float
    c: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.t) or self.t < 0:
            raise ValueError(f"time must be finite and nonnegative, got {self.t}")
        c = _as_vector(self.c).copy()
        if np.any(c < 0):
            raise ValueError("densities must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class SupportProfile:
    """Positive-support subscripts P, their gcd m, their sup p, and the
    effective dimension p/m of the reduced system."""

    P: frozenset[int]
    m: int
    p: int
    n_eff: int

    def __post_init__(self):
        if not self.P:
            raise ValueError("empty support")
        if any(j < 1 for j in self.P):
            raise ValueError("support subscripts must be >= 1")
        if any(j % self.m for j in self.P):
            raise ValueError(f"m={self.m} does not divide every element of P")
        if self.p not in self.P or self.p != max(self.P):
            raise ValueError(f"p={self.p} is not the maximum of P")
        if self.n_eff * self.m != self.p:
            raise ValueError(f"n_eff={self.n_eff} inconsistent with p/m={self.p}/{self.m}")


@dataclass(frozen=True)
class PhiState:
    """Rescaled state in the blowing-up chart: phi_j = c_j / c_N against
    y(t) = int_0^t c_N.  phi_N is identically 1 and not stored."""

    y: float
    phi: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.y) or self.y < 0:
            raise ValueError(f"y must be finite and nonnegative, got {self.y}")
        phi = _as_vector(self.phi, "phi").copy()
        if np.any(phi <= 0):
            raise ValueError("phi components must be strictly positive")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class PsiState:
    """Twice-rescaled state against tau(y) = int_0^y phi_1; psi_N == 1 not
    stored.  Along exact trajectories psi_{N-1}(tau) - tau is constant."""

    tau: float
    psi: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be finite and nonnegative, got {self.tau}")
        psi = _as_vector(self.psi, "psi").copy()
        if np.any(psi <= 0):
            raise ValueError("psi components must be strictly positive")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)


@dataclass(frozen=True)
class AsymptoticLaw:
    """An (exponent, prefactor) pair describing a power-type law."""

    exponent: float
    prefactor: float

    def __post_init__(self):
        if not (np.isfinite(self.prefactor) and self.prefactor > 0):
            raise ValueError(f"prefactor must be positive, got {self.prefactor}")
        if not np.isfinite(self.exponent):
            raise ValueError("exponent must be finite")


@dataclass(frozen=True)
class ConvergenceDiagnostic:
    """A measured residual series against strictly increasing abscissae."""

    abscissae: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        x = _as_vector(self.abscissae, "abscissae").copy()
        r = np.asarray(self.residuals, dtype=float).copy()
        if r.shape != x.shape:
            raise ValueError("abscissae and residuals must have equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        x.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "abscissae", x)
        object.__setattr__(self, "residuals", r)

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1])


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------


def rbk_field(c) -> np.ndarray:
    """Right-hand side of the N-dimensional constant-kernel RBK system.

    Component j (1-based) is  sum_{k=1}^{N-j} c_{j+k} c_k - c_j * nu  with
    nu = sum_k c_k; the production sum is empty for j = N, so the last
    component is exactly -c_N * nu.
    """
    c = _as_vector(c)
    n = c.size
    # lag-j autocorrelation supplies the production sums for j = 1 .. N-1
    corr = np.correlate(c, c, mode="full")
    prod = np.zeros(n)
    prod[: n - 1] = corr[n:]
    return prod - c * c.sum()


def densities(c) -> tuple[float, float, float]:
    """Total, odd-subscript, and even-subscript densities (nu, nu_odd, nu_even).

    nu is computed as nu_odd + nu_even so the decomposition is exact.
    """
    c = _as_vector(c)
    nu_odd = float(c[0::2].sum())   # 1-based odd subscripts sit at even offsets
    nu_even = float(c[1::2].sum())
    return nu_odd + nu_even, nu_odd, nu_even


def phi_field(phi) -> np.ndarray:
    """Rate of the rescaled phi-system: phi_j' = sum_{k=1}^{N-j} phi_{j+k} phi_k
    with phi_N == 1 appended internally.

    Valid only on strictly positive data; every output component is positive
    (each sum contains the k=1 term phi_{j+1} phi_1 > 0), which is what drives
    the finite-y blowup of this chart.
    """
    phi = _as_vector(phi, "phi")
    if np.any(phi <= 0):
        raise ValueError("phi chart requires strictly positive components")
    full = np.append(phi, 1.0)
    n = full.size
    corr = np.correlate(full, full, mode="full")
    return corr[n:]


def psi_field(psi) -> np.ndarray:
    """Rate of the twice-rescaled psi-system: dpsi_j/dtau =
    (sum_{k=1}^{N-j} psi_{j+k} psi_k) / psi_1 with psi_N == 1.

    The j = N-1 component is psi_N psi_1 / psi_1 = 1 exactly, also in
    floating point.
    """
    psi = _as_vector(psi, "psi")
    if psi[0] <= 0:
        raise ValueError("psi chart is singular at psi_1 <= 0")
    if np.any(psi <= 0):
        raise ValueError("psi chart requires strictly positive components")
    full = np.append(psi, 1.0)
    n = full.size
    corr = np.correlate(full, full, mode="full")
    return corr[n:] / psi[0]


# ---------------------------------------------------------------------------
# Support lattice and reduction
# ---------------------------------------------------------------------------


def support_profile(c, zero_tol: float = 0.0) -> SupportProfile:
    """Detect the positive support P = {j : c_j > zero_tol} and its lattice.

    zero_tol = 0 is the right choice for initial data (exact zeros are
    preserved by the flow); for evolved states a tolerance on the order of
    1e-13 * nu(0) absorbs integrator-level noise.
    """
    c = _as_vector(c)
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    subscripts = np.nonzero(c > zero_tol)[0] + 1
    if subscripts.size == 0:
        raise ValueError("empty support")
    support = frozenset(int(j) for j in subscripts)
    m = reduce(math.gcd, support)
    p = max(support)
    return SupportProfile(P=support, m=m, p=p, n_eff=p // m)


def gcd_reduce(config: SystemConfig) -> tuple[SystemConfig, SupportProfile]:
    """Reduce a lattice-supported configuration to effective dimension p/m.

    With m = gcd(P) and p = sup P, the densities on the lattice,
    c~_j := c_{jm} for j = 1..p/m, satisfy the same ODE with N replaced by
    p/m; off-lattice components vanish identically.
    """
    profile = support_profile(config.c0, zero_tol=0.0)
    reduced = config.c0[profile.m - 1 :: profile.m][: profile.n_eff]
    return SystemConfig(N=profile.n_eff, c0=reduced), profile


def embed_reduced(c_reduced, m: int, N: int) -> np.ndarray:
    """Inverse of the lattice reduction: place c~_j at subscript j*m, zeros
    elsewhere.  Requires len(c~) * m <= N."""
    c_reduced = _as_vector(c_reduced, "c_reduced")
    if m < 1 or int(m) != m:
        raise ValueError(f"m must be a positive integer, got {m}")
    if c_reduced.size * m > N:
        raise ValueError(
            f"index overflow: {c_reduced.size} components at spacing m={m} "
            f"do not fit in dimension N={N}"
        )
    out = np.zeros(int(N))
    out[m * np.arange(1, c_reduced.size + 1) - 1] = c_reduced
    return out


# ---------------------------------------------------------------------------
# Asymptotic constants
# ---------------------------------------------------------------------------


def longtime_laws(n_eff: int, m: int = 1) -> dict[int, AsymptoticLaw]:
    """Long-time laws c_j(t) ~ A~_j / (t (log t)^(j/m - 1)) on the support
    lattice, in the reduced-dimension convention.

    Keys are the ambient subscripts j = m, 2m, ..., m*n_eff; the prefactor is
    (n_eff - 1)! / (n_eff - j/m)! with n_eff = p/m the effective dimension.
    The reduction to the lattice is exact, so these are the constants the
    simulation should reproduce; see :func:`longtime_laws_ambient` for the
    alternative convention that keeps the ambient dimension.
    """
    if int(n_eff) != n_eff or n_eff < 2:
        raise ValueError(
            "long-time laws need effective dimension >= 2; a single-component "
            "system decays by the exact closed form c(t) = 1/(c(0)^-1 + t)"
        )
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    n_eff, m = int(n_eff), int(m)
    if n_eff > MAX_LAW_DIMENSION:
        raise ValueError(f"effective dimension {n_eff} exceeds the factorial guard")
    laws = {}
    for i in range(1, n_eff + 1):
        # (n_eff-1)! / (n_eff-i)! as an exact integer
        prefactor = math.perm(n_eff - 1, i - 1)
        laws[i * m] = AsymptoticLaw(exponent=float(i - 1), prefactor=float(prefactor))
    return laws


def longtime_laws_ambient(N: int, m: int = 1, p: int | None = None) -> dict[int, AsymptoticLaw]:
    """As-printed variant of the long-time prefactors, (N - 1)!/(N - j/m)!,
    keeping the ambient dimension N instead of p/m.

    The two conventions coincide when m = 1 and p = N and disagree otherwise;
    the verification suite probes numerically which one the dynamics follows.
    """
    if p is None:
        p = N
    if int(N) != N or N < 2:
        raise ValueError(f"ambient dimension must be an integer >= 2, got {N}")
    if int(m) != m or m < 1 or p % m:
        raise ValueError(f"inconsistent lattice: m={m}, p={p}")
    if p > N:
        raise ValueError(f"p={p} exceeds N={N}")
    if N > MAX_LAW_DIMENSION:
        raise ValueError(f"dimension {N} exceeds the factorial guard")
    laws = {}
    for i in range(1, p // m + 1):
        prefactor = math.perm(N - 1, i - 1)
        laws[i * m] = AsymptoticLaw(exponent=float(i - 1), prefactor=float(prefactor))
    return laws


def blowup_laws(N: int) -> dict[int, AsymptoticLaw]:
    """Blowup laws of the phi-chart: phi_j(y) ~ A_j / (omega - y)^alpha_j with

        alpha_j = (N - j)/(N - 2),
        A_j     = ((N-1)!/(N-2))^alpha_j / (N - j)! ,

    for j = 1 .. N-1.  Undefined at N = 2 (the exponent denominator vanishes).
    """
    if int(N) != N or N < 3:
        raise ValueError(f"blowup laws are undefined for N={N}; need N >= 3")
    N = int(N)
    if N > MAX_LAW_DIMENSION:
        raise ValueError(f"dimension {N} exceeds the factorial guard")
    base = checked_factorial(N - 1) / (N - 2)
    laws = {}
    for j in range(1, N):
        alpha = (N - j) / (N - 2)
        laws[j] = AsymptoticLaw(
            exponent=alpha, prefactor=base**alpha / checked_factorial(N - j)
        )
    return laws


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def nu_odd_closed(nu0: float, t: float) -> float:
    """Exact decay of the odd-subscript density: nu_odd solves
    d(nu_odd)/dt = -nu_odd^2, hence nu_odd(t) = 1/(nu_odd(0)^-1 + t)."""
    if nu0 < 0 or t < 0:
        raise ValueError("nu_odd_closed requires nonnegative arguments")
    if nu0 == 0:
        return 0.0
    return 1.0 / (1.0 / nu0 + t)


def self_similar(alpha: float, kappa: float, t: float, N: int) -> np.ndarray:
    """Truncation to j = 1..N of the self-similar family of the infinite
    system, c_j(t) = (kappa + t)^-1 (1 - alpha^2) alpha^(j-1).

    Exact only for the infinite system; the truncation is an approximate
    oracle with residual controlled by alpha^N.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    j = np.arange(1, int(N) + 1)
    return (1.0 - alpha * alpha) * alpha ** (j - 1.0) / (kappa + t)
