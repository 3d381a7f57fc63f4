"""Linear stability of ERKN methods on y'' + omega^2 y = -eps y.

With V = h^2 omega^2 and z = h^2 eps the one-step map of (q, h q') is the
2x2 matrix

    S(V, z) = [ phi0(V) - z bbar.N^{-1} f0   phi1(V) - z bbar.N^{-1} f1 ]
              [ -V phi1(V) - z b.N^{-1} f0   phi0(V) - z b.N^{-1} f1   ]

where f0_i = phi0(c_i^2 V), f1_i = c_i phi1(c_i^2 V) and N = I + z Abar(V)
is lower triangular for diagonal implicit methods, inverted by forward
substitution.  A point with spectral radius rho(S) < 1 is stable; rho = 1
with tr(S)^2 < 4 det(S) (complex conjugate pair on the unit circle) is
periodic; anything else, including the defective tr^2 = 4 det boundary, is
counted unstable.

Grid scans classify every point of a uniform (V, z) grid; points with
V + z <= 0 fall outside the test-equation domain (omega^2 + eps > 0) and are
marked with the out-of-domain code rather than classified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .phi import phi_scalar
from .tableau import DenominatorGuardError, MethodTableau, coefficient

__all__ = [
    "CODE_UNSTABLE",
    "CODE_STABLE",
    "CODE_PERIODIC",
    "CODE_OUT_OF_DOMAIN",
    "RHO_TOL",
    "stability_matrix",
    "classify_point",
    "scan_region",
    "StabilityGrid",
    "write_grid_csv",
]

CODE_UNSTABLE = 0
CODE_STABLE = 1
CODE_PERIODIC = 2
CODE_OUT_OF_DOMAIN = 3
RHO_TOL = 1e-10
_DET_N_TOL = 1e-12


class _StageData:
    """Per-V coefficient vectors shared by every z on a scan row."""

    def __init__(self, m: MethodTableau, V: float):
        s = m.stages
        self.m = m
        self.b = np.array([coefficient(m, "b", i, v=V) for i in range(1, s + 1)])
        self.bbar = np.array([coefficient(m, "b_bar", i, v=V) for i in range(1, s + 1)])
        self.f0 = np.array([phi_scalar(0, m.c[i] ** 2 * V) for i in range(s)])
        self.f1 = np.array([m.c[i] * phi_scalar(1, m.c[i] ** 2 * V) for i in range(s)])
        self.phi0 = phi_scalar(0, V)
        self.phi1 = phi_scalar(1, V)
        self._abar = None
        self._V = V

    def abar(self):
        if self._abar is None:
            s = self.m.stages
            A = np.zeros((s, s))
            for i in range(1, s + 1):
                for j in range(1, i + 1):
                    A[i - 1, j - 1] = coefficient(self.m, "a_bar", i, j, self._V)
            self._abar = A
        return self._abar


def _forward_solve(N, rhs):
    s = len(rhs)
    y = np.zeros(s)
    for i in range(s):
        acc = rhs[i]
        for j in range(i):
            acc -= N[i, j] * y[j]
        y[i] = acc / N[i, i]
    return y


def _matrix_from(data: _StageData, V: float, z: float) -> np.ndarray:
    if z == 0.0:
        u, w = data.f0, data.f1
    else:
        # N = I + z Abar(V), lower triangular; abar evaluation is deferred to
        # here so the z = 0 line never touches the diagonal-coefficient
        # denominators.
        N = np.eye(data.m.stages) + z * data.abar()
        det = float(np.prod(np.diag(N)))
        if abs(det) < _DET_N_TOL:
            raise ArithmeticError(
                f"stage matrix I + z*Abar is singular (det={det:.3e}) "
                f"at V={V:.6g}, z={z:.6g}")
        u = _forward_solve(N, data.f0)
        w = _forward_solve(N, data.f1)
    return np.array([
        [data.phi0 - z * (data.bbar @ u), data.phi1 - z * (data.bbar @ w)],
        [-V * data.phi1 - z * (data.b @ u), data.phi0 - z * (data.b @ w)],
    ])


def stability_matrix(m: MethodTableau, V: float, z: float) -> np.ndarray:
    """The 2x2 propagation matrix S(V, z); requires V > 0 and V + z > 0."""
    if V <= 0.0:
        raise ValueError(f"V must be positive, got {V}")
    if V + z <= 0.0:
        raise ValueError(f"outside the test-equation domain: V + z = {V + z}")
    return _matrix_from(_StageData(m, V), V, z)


def _classify(S: np.ndarray):
    tr = S[0, 0] + S[1, 1]
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    disc = tr * tr - 4.0 * det
    if disc <= 0.0:
        rho = math.sqrt(max(det, 0.0))
    else:
        rho = 0.5 * (abs(tr) + math.sqrt(disc))
    if rho < 1.0 - RHO_TOL:
        return CODE_STABLE, rho
    if abs(rho - 1.0) <= RHO_TOL and tr * tr < 4.0 * det:
        return CODE_PERIODIC, rho
    return CODE_UNSTABLE, rho


def classify_point(m: MethodTableau, V: float, z: float) -> int:
    """Classification code of a single (V, z) point."""
    code, _ = _classify(stability_matrix(m, V, z))
    return code


@dataclass
class StabilityGrid:
    """Classified uniform grid: codes, spectral radii, and error flags.

    ``classification[i, j]`` and ``rho[i, j]`` belong to (V_axis[i],
    z_axis[j]); error points carry code 0 with ``flags`` set, out-of-domain
    points carry CODE_OUT_OF_DOMAIN with rho = nan.
    """

    method: str
    V_axis: np.ndarray
    z_axis: np.ndarray
    classification: np.ndarray
    rho: np.ndarray
    flags: np.ndarray


def scan_region(m: MethodTableau, V_range=(0.0, 50.0), z_range=(-50.0, 50.0),
                nV: int = 400, nz: int = 400) -> StabilityGrid:
    """Classify the uniform grid over (V_lo, V_hi] x [z_lo, z_hi].

    The V axis samples the half-open interval: V_i = V_lo + (i+1) dV.  Any
    coefficient-guard or singular-stage error is recorded in-grid (code 0,
    flag set) and the scan continues.  The result is independent of
    evaluation order.
    """
    if nV < 2 or nz < 2:
        raise ValueError("nV and nz must both be >= 2")
    V_lo, V_hi = map(float, V_range)
    if not 0.0 <= V_lo < V_hi:
        raise ValueError(f"need 0 <= V_lo < V_hi, got {V_range}")
    V_axis = V_lo + (np.arange(nV) + 1) * (V_hi - V_lo) / nV
    z_axis = np.linspace(float(z_range[0]), float(z_range[1]), nz)
    codes = np.zeros((nV, nz), dtype=np.int8)
    rho = np.full((nV, nz), np.nan)
    flags = np.zeros((nV, nz), dtype=bool)
    for i, V in enumerate(V_axis):
        data = None
        for j, z in enumerate(z_axis):
            if V + z <= 0.0:
                codes[i, j] = CODE_OUT_OF_DOMAIN
                continue
            try:
                if data is None:
                    data = _StageData(m, V)
                codes[i, j], rho[i, j] = _classify(_matrix_from(data, V, z))
            except (DenominatorGuardError, ArithmeticError):
                codes[i, j] = CODE_UNSTABLE
                flags[i, j] = True
    return StabilityGrid(method=m.name, V_axis=V_axis, z_axis=z_axis,
                         classification=codes, rho=rho, flags=flags)


def write_grid_csv(grid: StabilityGrid, path):
    """Emit `V,z,code,rho` rows, row-major in V then z, 17 significant digits."""
    with open(path, "w") as fh:
        fh.write("V,z,code,rho\n")
        for i, V in enumerate(grid.V_axis):
            for j, z in enumerate(grid.z_axis):
                fh.write(f"{V:.17g},{z:.17g},{int(grid.classification[i, j])},"
                         f"{grid.rho[i, j]:.17g}\n")
