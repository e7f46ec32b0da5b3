"""Closed-form layer of the fast-diffusion laboratory.

Everything in this module is exact (up to floating point): model parameters
and regime landmarks, the Barenblatt family in original and self-similar
variables, the discrete spectrum of the linearized flow, the terminating
hypergeometric eigenfunction polynomials, essential-spectrum thresholds in
weighted spaces, the rate/weight trade-off tables, and the time-shifted
Barenblatt quotient used as an exact nonlinear solution.

Conventions
-----------
* ``p = 2/(1-m) - n`` is the moment index; the mass-preserving regime is
  ``m in ](n-2)/n, 1[``, i.e. ``p > 0``.
* ``eta_cr = p/2 - 1`` is the weight at which the conjugated operator is
  symmetric in the cigar volume.
* Geodesic coordinate ``s`` on the cigar satisfies ``r = sqrt(B) sinh(s)``
  and ``B cosh^2 s = (B + r^2)``.
* Eigenvalues ``lambda_{lk} = -[(l+2k)p + nl + 4k(1-l-k)]`` for integer
  ``l, k >= 0`` (``l <= 1`` when n = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

__all__ = [
    "ModelParams",
    "ModeIndex",
    "SpectralDatum",
    "RateBranch",
    "SecondOrderRates",
    "BranchBoundaryError",
    "derive_params",
    "landmarks",
    "barenblatt_u",
    "barenblatt_rho",
    "to_selfsimilar",
    "from_selfsimilar",
    "eigenvalue",
    "essential_threshold",
    "is_admissible",
    "admissible_modes",
    "spectral_data",
    "eigenfunction_psi",
    "eigenfunction_v",
    "potential_profile",
    "eta_for_target_rate",
    "lambda_second_order",
    "second_order_rates",
    "delayed_barenblatt_v",
    "delayed_barenblatt_time_derivative",
    "P_STAR",
]

# Boundary between the two n=1 rate branches (intersection of the continuum
# threshold -(p/2+1)^2 with -2(p+n) at n=1).
P_STAR = 2.0 * (math.sqrt(2.0) + 1.0)


@dataclass(frozen=True)
class ModelParams:
    """The (n, m, B) triple with derived quantities.

    Use :func:`derive_params` to construct; the derived fields are redundant
    and must satisfy p = 2/(1-m) - n, beta = (1 + n/p)/2, eta_cr = p/2 - 1.
    """

    n: int
    m: float
    B: float
    p: float
    beta: float
    eta_cr: float

    @property
    def a(self) -> float:
        """Barenblatt exponent 1/(1-m) = (n+p)/2."""
        return 1.0 / (1.0 - self.m)

    @property
    def lambda_cont(self) -> float:
        """Essential-spectrum onset -(p/2+1)^2 at eta = eta_cr, l = 0."""
        return -((self.p / 2.0 + 1.0) ** 2)


def derive_params(n: int, m: float, B: float = 1.0) -> ModelParams:
    """Validate (n, m, B) and populate the derived parameters."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"spatial dimension n must be an integer >= 1, got {n!r}")
    if not B > 0:
        raise ValueError(f"Barenblatt parameter B must be positive, got {B}")
    m0 = (n - 2.0) / n
    if not (m0 < m < 1.0):
        raise ValueError(
            f"m={m} outside the mass-preserving range ]{m0}, 1[ for n={n}"
        )
    p = 2.0 / (1.0 - m) - n
    beta = 0.5 * (1.0 + n / p)
    return ModelParams(n=int(n), m=float(m), B=float(B), p=p, beta=beta,
                       eta_cr=p / 2.0 - 1.0)


def landmarks(params: ModelParams) -> dict[str, float]:
    """Regime boundaries m_q = 1 - 2/(n+q).

    Keys: ``m_0``, ``m_1``, ``m_2``, ``m_6``, ``m_n``, ``m_n+4``; for n = 1
    additionally ``m_p*`` where p* = 2(sqrt(2)+1) splits the two rate
    branches.
    """
    n = params.n
    qs = {"m_0": 0, "m_1": 1, "m_2": 2, "m_6": 6, "m_n": n, "m_n+4": n + 4}
    out = {key: 1.0 - 2.0 / (n + q) for key, q in qs.items()}
    if n == 1:
        out["m_p*"] = 1.0 - 2.0 / (1.0 + P_STAR)
    return out


@dataclass(frozen=True, order=True)
class ModeIndex:
    """Angular/radial quantum numbers (l, k); mu only labels degeneracy."""

    ell: int
    k: int
    mu: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.ell < 0 or self.k < 0:
            raise ValueError(f"mode indices must be non-negative, got {self}")

    @property
    def degree(self) -> int:
        """Polynomial degree l + 2k of the eigenfunction."""
        return self.ell + 2 * self.k


@dataclass(frozen=True)
class SpectralDatum:
    """A labelled spectral value: eigenvalue or continuum threshold."""

    kind: str  # "eigenvalue" | "continuum-threshold"
    lam: float
    eta: float
    mode: ModeIndex | None = None

    def __post_init__(self):
        if self.kind not in ("eigenvalue", "continuum-threshold"):
            raise ValueError(f"unknown spectral datum kind {self.kind!r}")
        if (self.kind == "eigenvalue") != (self.mode is not None):
            raise ValueError("mode must be present iff kind == 'eigenvalue'")


# ---------------------------------------------------------------------------
# Barenblatt profiles and the self-similar change of variables
# ---------------------------------------------------------------------------

def barenblatt_u(x_norm, params: ModelParams):
    """Stationary rescaled profile u_B(x) = (B + |x|^2)^(-1/(1-m))."""
    x = np.asarray(x_norm, dtype=float)
    return (params.B + x * x) ** (-params.a)


def barenblatt_rho(tau: float, y_norm, params: ModelParams):
    """Source-type solution rho_B(tau, y) of the original flow.

    rho_B(tau, y) = (2 p tau + 1)^(-n beta) u_B((2 p tau + 1)^(-beta) y);
    requires 1 + 2 p tau > 0.
    """
    scale = 1.0 + 2.0 * params.p * tau
    if scale <= 0.0:
        raise ValueError(f"tau={tau} at or below the domain boundary -1/(2p)")
    y = np.asarray(y_norm, dtype=float)
    return scale ** (-params.n * params.beta) * barenblatt_u(
        scale ** (-params.beta) * y, params
    )


def to_selfsimilar(tau: float, y, params: ModelParams):
    """Map original variables (tau, y) to self-similar (t, x)."""
    scale = 1.0 + 2.0 * params.p * tau
    if scale <= 0.0:
        raise ValueError(f"tau={tau} at or below the domain boundary -1/(2p)")
    t = math.log(scale) / (2.0 * params.p)
    x = scale ** (-params.beta) * np.asarray(y, dtype=float)
    return t, x


def from_selfsimilar(t: float, x, params: ModelParams):
    """Inverse of :func:`to_selfsimilar`."""
    scale = math.exp(2.0 * params.p * t)
    tau = (scale - 1.0) / (2.0 * params.p)
    y = scale ** params.beta * np.asarray(x, dtype=float)
    return tau, y


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------

def eigenvalue(mode: ModeIndex, params: ModelParams) -> float:
    """Discrete eigenvalue lambda_{lk} of the linearized flow."""
    ell, k = mode.ell, mode.k
    return -((ell + 2 * k) * params.p + params.n * ell + 4 * k * (1 - ell - k))


def essential_threshold(ell: int, eta: float, params: ModelParams) -> float:
    """Real-part maximum of the essential spectrum of L_{l,eta}.

    (eta - eta_cr)^2 - (p/2 + 1)^2 - l(l + n - 2); at eta = eta_cr, l = 0
    this is the continuum onset -(p/2+1)^2, and at eta = 0, p > 2 it equals
    lambda_01 = -2p.
    """
    de = eta - params.eta_cr
    return de * de - (params.p / 2.0 + 1.0) ** 2 - ell * (ell + params.n - 2)


def _k_bound(ell: int, eta: float, params: ModelParams) -> float:
    return 0.5 * (params.p / 2.0 + 1.0 - ell - abs(eta - params.eta_cr))


def is_admissible(mode: ModeIndex, eta: float, params: ModelParams) -> bool:
    """Whether (l, k) is an eigenvalue of L_{l,eta}: k < [p/2+1-l-|eta-eta_cr|]/2."""
    if params.n == 1 and mode.ell > 1:
        return False
    return mode.k < _k_bound(mode.ell, eta, params)


def admissible_modes(eta: float, params: ModelParams,
                     ell_max: int | None = None) -> list[tuple[ModeIndex, float]]:
    """All admissible (mode, eigenvalue) pairs at weight eta, descending lambda.

    Ties (eigenvalue crossings) are ordered by (l, k).
    """
    out = []
    ell = 0
    while _k_bound(ell, eta, params) > 0:
        if params.n == 1 and ell > 1:
            break
        if ell_max is not None and ell > ell_max:
            break
        k = 0
        while k < _k_bound(ell, eta, params):
            mode = ModeIndex(ell, k)
            out.append((mode, eigenvalue(mode, params)))
            k += 1
        ell += 1
    out.sort(key=lambda it: (-it[1], it[0].ell, it[0].k))
    return out


def _psi_coefficients(mode: ModeIndex, params: ModelParams) -> list[float]:
    """Coefficients c_j of psi_{lk}(r) = r^l sum_j c_j (r^2/B)^j.

    Terminating 2F1(k+l-1-p/2, -k; l+n/2; -r^2/B) series.  The Pochhammer
    ratios are accumulated in exact rational arithmetic on the binary64
    value of p (floats are rational), then rounded once.
    """
    ell, k = mode.ell, mode.k
    a = Fraction(ell + k - 1) - Fraction(params.p) / 2
    b = Fraction(-k)
    c = Fraction(ell) + Fraction(params.n, 2)
    coeffs = [Fraction(1)]
    term = Fraction(1)
    for j in range(k):
        # (a)_j (b)_j / ((c)_j j!) * (-1)^j, one factor at a time
        term *= -(a + j) * (b + j)
        term /= (c + j) * (j + 1)
        coeffs.append(term)
    return [float(cj) for cj in coeffs]


def spectral_data(eta: float, params: ModelParams,
                  ell_max: int = 4) -> list[SpectralDatum]:
    """Labelled spectral values at weight eta: eigenvalues plus thresholds."""
    out = [SpectralDatum("eigenvalue", lam, eta, mode)
           for mode, lam in admissible_modes(eta, params)]
    for ell in range(ell_max + 1):
        if params.n == 1 and ell > 1:
            break
        out.append(SpectralDatum("continuum-threshold",
                                 essential_threshold(ell, eta, params), eta))
    return out


def eigenfunction_psi(mode: ModeIndex, r, params: ModelParams,
                      eta: float | None = None):
    """Polynomial eigenfunction psi_{lk}(r), exact degree l + 2k.

    Admissibility is checked at eta (default eta_cr).
    """
    if eta is None:
        eta = params.eta_cr
    if not is_admissible(mode, eta, params):
        raise ValueError(f"mode {mode} not admissible at eta={eta}")
    rr = np.asarray(r, dtype=float)
    z = rr * rr / params.B
    coeffs = _psi_coefficients(mode, params)
    acc = np.zeros_like(z) + coeffs[-1]
    for cj in reversed(coeffs[:-1]):
        acc = acc * z + cj
    return rr ** mode.ell * acc


def eigenfunction_v(mode: ModeIndex, s, params: ModelParams,
                    eta: float | None = None):
    """Relative-density eigenfunction v_{lk}(s) = psi_{lk}(r) / (B + r^2).

    Here r = sqrt(B) sinh s; for B = 1 this is (cosh s)^-2 psi(sinh s).
    """
    ss = np.asarray(s, dtype=float)
    r = math.sqrt(params.B) * np.sinh(ss)
    return eigenfunction_psi(mode, r, params, eta) / (params.B + r * r)


def potential_profile(eta: float, params: ModelParams) -> dict[str, float]:
    """Far-field data of the conjugated operator L_eta.

    c_inf = -(p - eta)(2 + eta) bounds the semigroup decay, b_inf is the
    asymptotic outward drift -(p - 2 eta - 2), and the potential well has the
    universal sech^2 profile of depth (p + n - eta)(2 + eta).
    """
    p = params.p
    return {
        "c_inf": -(p - eta) * (2.0 + eta),
        "b_inf": -(p - 2.0 * eta - 2.0),
        "depth": (p + params.n - eta) * (2.0 + eta),
    }


def eta_for_target_rate(Lambda: float, params: ModelParams) -> float:
    """Weight eta <= eta_cr whose l = 0 essential threshold equals Lambda."""
    lam0 = params.lambda_cont
    if not (lam0 <= Lambda < 0.0):
        raise ValueError(
            f"target rate {Lambda} outside [{lam0}, 0[ for p={params.p}"
        )
    return params.eta_cr - math.sqrt(Lambda - lam0)


# ---------------------------------------------------------------------------
# Second-order rate/weight table
# ---------------------------------------------------------------------------

class RateBranch(str, Enum):
    """Which spectral object binds the second-order rate."""

    TIGHT = "continuum-tight"   # m < m_2, eta_cr < 0
    CONTINUUM = "continuum"     # Lambda = -(p/2+1)^2
    LAMBDA02 = "lambda02"       # Lambda = -4p+8
    LAMBDA20 = "lambda20"       # Lambda = -2(p+n)


class BranchBoundaryError(ValueError):
    """Raised at m = m_2 exactly; carries the one-sided limits."""

    def __init__(self, msg, left, right):
        super().__init__(msg)
        self.left = left
        self.right = right


@dataclass(frozen=True)
class SecondOrderRates:
    """Rate gamma and weight delta after modding out mass/center/time-shift."""

    gamma: float
    delta: float
    branch: RateBranch
    Lambda: float
    eta: float


def lambda_second_order(params: ModelParams) -> tuple[float, RateBranch]:
    """Spectral gap Lambda below lambda_01 once the time shift is modded out.

    Max over the continuum onset -(p/2+1)^2, the quadrupole value -2(p+n)
    (used for every n, with the n = 1 crossing at p* = 2(sqrt(2)+1)), and
    -4p+8 which is an eigenvalue only for p > 6.
    """
    p = params.p
    cands = [(-((p / 2.0 + 1.0) ** 2),
              RateBranch.TIGHT if p < 2.0 else RateBranch.CONTINUUM),
             (-2.0 * (p + params.n), RateBranch.LAMBDA20)]
    if p > 6.0:
        cands.append((-4.0 * p + 8.0, RateBranch.LAMBDA02))
    return max(cands, key=lambda it: it[0])


def second_order_rates(params: ModelParams) -> SecondOrderRates:
    """(gamma, delta) of the second-order asymptotics, with its branch.

    gamma = Lambda/lambda_01 and delta = eta(Lambda)/(n+p), where
    eta(Lambda) = eta_cr - sqrt(Lambda + (p/2+1)^2); the branch records which
    spectral object saturates Lambda.  m = m_2 exactly (p = 2) is rejected as
    the branch boundary; both one-sided limits ride on the exception.
    """
    p = params.p
    if p == 2.0:
        gamma = 1.0
        raise BranchBoundaryError(
            "m = m_2 exactly: branch boundary; one-sided limits "
            f"(gamma, delta) = ({gamma}, 0.0) on both sides",
            left=(gamma, 0.0), right=(gamma, 0.0),
        )
    Lambda, branch = lambda_second_order(params)
    eta = eta_for_target_rate(Lambda, params)
    lam01 = -2.0 * p
    return SecondOrderRates(
        gamma=Lambda / lam01,
        delta=eta / (params.n + p),
        branch=branch,
        Lambda=Lambda,
        eta=eta,
    )


# ---------------------------------------------------------------------------
# Delayed Barenblatt (exact solution of the rescaled flow)
# ---------------------------------------------------------------------------

def _delayed_theta(t: float, tau0: float, params: ModelParams) -> float:
    E = math.exp(2.0 * params.p * t)
    Ep = E + 2.0 * params.p * tau0
    if Ep <= 0.0:
        raise ValueError(
            f"time shift tau0={tau0} leaves the domain at t={t}: 1+2p(tau+tau0)<=0"
        )
    return (E / Ep) ** params.beta


def delayed_barenblatt_v(t: float, s, tau0: float, Bplus: float,
                         params: ModelParams):
    """Relative density of the time-shifted Barenblatt rho_{B+}(tau + tau0).

    Exact solution of the rescaled radial flow; with theta(t) =
    [(1+2p tau)/(1+2p(tau+tau0))]^beta,

        v(t, s) = theta^n [ B cosh^2 s / (B+ + theta^2 B sinh^2 s) ]^((n+p)/2).

    v == 1 for tau0 = 0, B+ = B; v -> u_{B+}/u_B uniformly at rate e^{-2pt};
    v -> theta^{-p} as s -> infinity at fixed t.
    """
    if Bplus <= 0.0:
        raise ValueError(f"Bplus must be positive, got {Bplus}")
    theta = _delayed_theta(t, tau0, params)
    ss = np.asarray(s, dtype=float)
    sh2 = np.sinh(ss) ** 2
    B = params.B
    ratio = B * (1.0 + sh2) / (Bplus + theta * theta * B * sh2)
    return theta ** params.n * ratio ** params.a


def delayed_barenblatt_time_derivative(t: float, s, tau0: float, Bplus: float,
                                       params: ModelParams):
    """Exact d/dt of :func:`delayed_barenblatt_v` (manufactured-solution oracle)."""
    theta = _delayed_theta(t, tau0, params)
    E = math.exp(2.0 * params.p * t)
    Ep = E + 2.0 * params.p * tau0
    # d theta / dt = 2 p beta theta (1 - E/E')
    dtheta = 2.0 * params.p * params.beta * theta * (1.0 - E / Ep)
    ss = np.asarray(s, dtype=float)
    sh2 = np.sinh(ss) ** 2
    v = delayed_barenblatt_v(t, ss, tau0, Bplus, params)
    B = params.B
    dlogv_dtheta = params.n / theta - params.a * 2.0 * theta * B * sh2 / (
        Bplus + theta * theta * B * sh2
    )
    return v * dlogv_dtheta * dtheta
