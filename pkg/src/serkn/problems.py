"""Benchmark oscillatory Hamiltonian systems q'' + M q = -grad U(q).

Three problems with exact gradients and Hamiltonians:

* ``sine-gordon``  - periodic lattice semi-discretization of
  u_tt = u_xx - sin u, M the scaled circulant second-difference matrix.
* ``duffing``      - q'' + 100 q = k^2 (2q^3 - q), analytic solution
  q(t) = sn(10 t, k/10) in the Jacobi elliptic sn.
* ``stellar``      - two coupled oscillators modelling star orbits,
  q1'' + a^2 q1 = eps q2^2, q2'' + b^2 q2 = 2 eps q1 q2.

Sign conventions follow H = p.p/2 + q.M q/2 + U(q), so the force is
q'' = -M q - grad U(q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Problem",
    "classical_form",
    "make_sine_gordon",
    "make_duffing",
    "make_stellar",
    "make_problem",
    "duffing_reference",
    "jacobi_sn_cn_dn",
    "complete_elliptic_k",
    "EllipticModulus",
    "PROBLEM_NAMES",
]

PROBLEM_NAMES = ("sine-gordon", "duffing", "stellar")


@dataclass
class Problem:
    """An oscillatory system: stiffness M, smooth potential U and its gradient.

    ``reference`` (optional) maps t to the exact (q(t), p(t)).  All fields
    are treated as immutable after construction; gradient evaluation is pure.
    """

    name: str
    dim: int
    M: np.ndarray
    grad_potential: object
    potential: object
    reference: object = None
    params: dict = field(default_factory=dict)

    def hamiltonian(self, q: np.ndarray, p: np.ndarray) -> float:
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return float(0.5 * p @ p + 0.5 * q @ (self.M @ q) + self.potential(q))


def classical_form(prob: Problem) -> Problem:
    """Fold the stiffness into the potential: M -> 0, grad -> M q + grad U(q).

    Running the scheme on the folded problem turns the phi-propagated update
    into the plain classical RKN step (phi_j(0) = 1/j!), which is how the
    frozen RKN tableaux are meant to be benchmarked.  The Hamiltonian is
    unchanged.
    """
    M = prob.M

    def grad(q, _g=prob.grad_potential, _M=M):
        return _M @ q + _g(q)

    def pot(q, _u=prob.potential, _M=M):
        return 0.5 * float(q @ (_M @ q)) + _u(q)

    return Problem(name=prob.name + "+classical", dim=prob.dim,
                   M=np.zeros_like(M), grad_potential=grad, potential=pot,
                   reference=prob.reference, params=dict(prob.params))


# ---------------------------------------------------------------------------
# sine-Gordon lattice
# ---------------------------------------------------------------------------

def make_sine_gordon(N: int, spacing: str = "1/N"):
    """Periodic sine-Gordon lattice with N points.

    M = circulant(-1, 2, -1)/dx^2 with wraparound corners.  ``spacing``
    selects dx = 1/N (default) or dx = 2/N (the full-width convention); the
    choice is recorded in ``params``.  Initial data: q = (pi, ..., pi),
    p_i = sqrt(N) (0.01 + sin(2 pi i / N)), i = 1..N.
    """
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    if spacing not in ("1/N", "2/N"):
        raise ValueError(f"spacing must be '1/N' or '2/N', got {spacing!r}")
    dx = (1.0 if spacing == "1/N" else 2.0) / N
    M = np.zeros((N, N))
    for i in range(N):
        M[i, i] += 2.0
        M[i, (i + 1) % N] += -1.0
        M[i, (i - 1) % N] += -1.0
    M /= dx * dx

    def grad(q):
        return np.sin(q)

    def pot(q):
        return -float(np.sum(np.cos(q)))

    prob = Problem(name="sine-gordon", dim=N, M=M, grad_potential=grad,
                   potential=pot, params={"N": N, "spacing": spacing})
    q0 = np.full(N, math.pi)
    i = np.arange(1, N + 1, dtype=float)
    p0 = math.sqrt(N) * (0.01 + np.sin(2.0 * math.pi * i / N))
    return prob, q0, p0


# ---------------------------------------------------------------------------
# Duffing oscillator and its elliptic reference
# ---------------------------------------------------------------------------

def _agm(a: float, b: float) -> float:
    while abs(a - b) > 1e-16 * a:
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return a


def complete_elliptic_k(modulus: float) -> float:
    """Complete elliptic integral K(k) = pi / (2 agm(1, sqrt(1-k^2)))."""
    if not 0.0 <= modulus < 1.0:
        raise ValueError(f"modulus must be in [0, 1), got {modulus}")
    return math.pi / (2.0 * _agm(1.0, math.sqrt(1.0 - modulus * modulus)))


@dataclass(frozen=True)
class EllipticModulus:
    """Jacobi modulus k in [0, 1) with its quarter period K(k)."""

    k: float
    K: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.k < 1.0:
            raise ValueError(f"modulus must be in [0, 1), got {self.k}")
        object.__setattr__(self, "K", complete_elliptic_k(self.k))


def jacobi_sn_cn_dn(u: float, modulus: float):
    """Jacobi elliptic sn, cn, dn with modulus k (not the parameter k^2).

    Descending Landen transformation: run the AGM a_{n+1} = (a_n + b_n)/2,
    b_{n+1} = sqrt(a_n b_n), c_{n+1} = (a_n - b_n)/2 until c_N ~ 0, set
    phi_N = 2^N a_N u and unwind sin(2 phi_{n-1} - phi_n) = (c_n/a_n) sin
    phi_n.  Then sn = sin phi_0, cn = cos phi_0, dn = cos phi_0 /
    cos(phi_1 - phi_0).
    """
    if not 0.0 <= modulus < 1.0:
        raise ValueError(f"modulus must be in [0, 1), got {modulus}")
    if modulus == 0.0:
        return math.sin(u), math.cos(u), 1.0
    a = [1.0]
    b = [math.sqrt(1.0 - modulus * modulus)]
    cs = [modulus]
    while abs(cs[-1]) > 1e-17 and len(a) < 32:
        a.append(0.5 * (a[-1] + b[-1]))
        b.append(math.sqrt(a[-2] * b[-1]))
        cs.append(0.5 * (a[-2] - b[-2]))
    n = len(a) - 1
    phis = [0.0] * (n + 1)
    phis[n] = (2.0 ** n) * a[n] * u
    for m in range(n, 0, -1):
        arg = cs[m] / a[m] * math.sin(phis[m])
        phis[m - 1] = 0.5 * (phis[m] + math.asin(max(-1.0, min(1.0, arg))))
    sn = math.sin(phis[0])
    cn = math.cos(phis[0])
    dn = cn / math.cos(phis[1] - phis[0]) if n >= 1 else math.sqrt(
        1.0 - modulus * modulus * sn * sn)
    return sn, cn, dn


def duffing_reference(t: float, k: float) -> float:
    """Exact Duffing solution q(t) = sn(10 t, k/10)."""
    sn, _, _ = jacobi_sn_cn_dn(10.0 * t, k / 10.0)
    return sn


def make_duffing(k: float):
    """Duffing oscillator q'' + 100 q = k^2 (2 q^3 - q), 0 <= k < 10.

    grad U(q) = k^2 (q - 2 q^3), U(q) = -k^2 (q^4/2 - q^2/2); initial data
    (q, p) = (0, 10).  Reference: q = sn(10t, k/10), p = 10 cn dn.
    """
    if not 0.0 <= k < 10.0:
        raise ValueError(f"k must be in [0, 10), got {k}")
    ksq = k * k
    M = np.array([[100.0]])

    def grad(q):
        return ksq * (q - 2.0 * q ** 3)

    def pot(q):
        x = float(q[0])
        return -ksq * (0.5 * x ** 4 - 0.5 * x ** 2)

    modulus = k / 10.0

    def reference(t):
        sn, cn, dn = jacobi_sn_cn_dn(10.0 * t, modulus)
        return np.array([sn]), np.array([10.0 * cn * dn])

    prob = Problem(name="duffing", dim=1, M=M, grad_potential=grad,
                   potential=pot, reference=reference, params={"k": k})
    return prob, np.array([0.0]), np.array([10.0])


# ---------------------------------------------------------------------------
# stellar orbit model
# ---------------------------------------------------------------------------

def make_stellar(a: float = 2.0, b: float = 1.0, eps: float = 1e-3):
    """Star-orbit model q1'' + a^2 q1 = eps q2^2, q2'' + b^2 q2 = 2 eps q1 q2.

    M = diag(a^2, b^2), U(q) = -eps q1 q2^2; initial (q, p) = ((1,1), (0,0)).
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"frequencies must be positive, got a={a}, b={b}")
    M = np.diag([a * a, b * b]).astype(float)

    def grad(q):
        return np.array([-eps * q[1] ** 2, -2.0 * eps * q[0] * q[1]])

    def pot(q):
        return -eps * float(q[0]) * float(q[1]) ** 2

    prob = Problem(name="stellar", dim=2, M=M, grad_potential=grad,
                   potential=pot, params={"a": a, "b": b, "eps": eps})
    return prob, np.array([1.0, 1.0]), np.array([0.0, 0.0])


def make_problem(name: str, **params):
    """Problem factory addressable by name; unknown params raise."""
    if name == "sine-gordon":
        allowed = {"N": 32, "spacing": "1/N"}
    elif name == "duffing":
        allowed = {"k": 0.03}
    elif name == "stellar":
        allowed = {"a": 2.0, "b": 1.0, "eps": 1e-3}
    else:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(PROBLEM_NAMES)}")
    unknown = set(params) - set(allowed)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    allowed.update(params)
    if name == "sine-gordon":
        return make_sine_gordon(int(allowed["N"]), allowed["spacing"])
    if name == "duffing":
        return make_duffing(float(allowed["k"]))
    return make_stellar(float(allowed["a"]), float(allowed["b"]), float(allowed["eps"]))
