"""1D rate-independent elastoplasticity for lattice struts.

Saturating exponential (Voce-type) isotropic hardening combined with linear
kinematic hardening, integrated with an implicit backward-Euler return map
that carries the exact algorithmic consistent tangent.

Units are fixed project-wide: mm, N, MPa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Local solver settings for the scalar consistency equation.
RM_TOL_REL = 1e-12   # absolute residual tolerance, scaled by sigma_y0
RM_MAX_ITER = 50


@dataclass(frozen=True)
class MaterialParams:
    """Elastoplastic constants of the strut base material.

    Attributes:
        E: elastic modulus [MPa]
        H: kinematic hardening modulus [MPa]
        sigma_y0: initial yield stress [MPa]
        Q_inf: saturation flow stress [MPa]
        b: saturation exponent [-]
    """

    E: float
    H: float
    sigma_y0: float
    Q_inf: float
    b: float

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError(f"elastic modulus must be positive, got {self.E}")
        if self.sigma_y0 <= 0.0:
            raise ValueError(f"initial yield stress must be positive, got {self.sigma_y0}")
        if self.H < 0.0 or self.Q_inf < 0.0 or self.b < 0.0:
            raise ValueError("hardening parameters must be non-negative")

    def flow_stress(self, alpha: float) -> float:
        """Isotropic hardening curve sigma_y(alpha)."""
        return self.sigma_y0 + self.Q_inf * (1.0 - math.exp(-self.b * alpha))


#: Additively manufactured AlSi10Mg, the default material of every preset.
ALSI10MG = MaterialParams(E=70000.0, H=16000.0, sigma_y0=190.0, Q_inf=90.0, b=13.5)


@dataclass(frozen=True)
class PlasticState:
    """Committed history of one strut.

    Attributes:
        eps_pl: plastic strain [-]
        alpha: accumulated hardening variable [-], non-decreasing
        q: back stress [MPa]
    """

    eps_pl: float = 0.0
    alpha: float = 0.0
    q: float = 0.0


VIRGIN = PlasticState()


@dataclass(frozen=True)
class StrutResponse:
    """Stress update result for one strut over one strain step."""

    sigma: float
    D: float
    state_new: PlasticState
    yielded: bool


class ConstitutiveError(RuntimeError):
    """The local return-mapping solve did not converge."""

    def __init__(self, eps_total, state, message="return mapping did not converge"):
        super().__init__(f"{message} (eps={eps_total!r}, state={state!r})")
        self.eps_total = eps_total
        self.state = state


def yield_function(sigma: float, state: PlasticState, mat: MaterialParams) -> float:
    """Distance of the stress point to the hardened yield surface.

    Negative or zero values are admissible (elastic) states.
    """
    return abs(sigma - state.q) - mat.flow_stress(state.alpha)


def _solve_consistency(xi_abs: float, alpha_n: float, mat: MaterialParams) -> float:
    """Solve R(dl) = xi_abs - (E+H) dl - sigma_y(alpha_n + dl) = 0 for dl > 0.

    R is convex and strictly decreasing, so Newton from dl = 0 approaches the
    root monotonically from the left; the bracket [0, xi_abs/(E+H)] with a
    bisection fallback guards against numerical escape.
    """
    tol = RM_TOL_REL * mat.sigma_y0
    EH = mat.E + mat.H
    lo, hi = 0.0, xi_abs / EH
    dl = 0.0
    for _ in range(RM_MAX_ITER):
        r = xi_abs - EH * dl - mat.flow_stress(alpha_n + dl)
        if abs(r) <= tol:
            return dl
        if r > 0.0:
            lo = dl
        else:
            hi = dl
        drddl = -EH - mat.Q_inf * mat.b * math.exp(-mat.b * (alpha_n + dl))
        step = dl - r / drddl
        dl = step if lo < step < hi else 0.5 * (lo + hi)
    return -1.0


def return_map(eps_total: float, state: PlasticState, mat: MaterialParams) -> StrutResponse:
    """Backward-Euler stress update for a total axial strain.

    Elastic predictor / plastic corrector. On the elastic branch (trial state
    admissible, boundary inclusive) the state passes through unchanged with
    tangent E; on the plastic branch the scalar consistency equation is solved
    for the plastic increment and the algorithmic tangent

        D = E (H + Q_inf b exp(-b alpha_new)) / (E + H + Q_inf b exp(-b alpha_new))

    is returned, which is exact for this model in 1D.

    Raises:
        ConstitutiveError: if the local scalar solve does not converge.
    """
    sigma_trial = mat.E * (eps_total - state.eps_pl)
    xi = sigma_trial - state.q
    if abs(xi) - mat.flow_stress(state.alpha) <= 0.0:
        return StrutResponse(sigma_trial, mat.E, state, False)

    sign = 1.0 if xi >= 0.0 else -1.0
    dl = _solve_consistency(abs(xi), state.alpha, mat)
    if dl < 0.0:
        raise ConstitutiveError(eps_total, state)

    alpha_new = state.alpha + dl
    state_new = PlasticState(
        eps_pl=state.eps_pl + dl * sign,
        alpha=alpha_new,
        q=state.q + mat.H * dl * sign,
    )
    sigma = sigma_trial - mat.E * dl * sign
    hard = mat.H + mat.Q_inf * mat.b * math.exp(-mat.b * alpha_new)
    D = mat.E * hard / (mat.E + hard)
    return StrutResponse(sigma, D, state_new, True)
