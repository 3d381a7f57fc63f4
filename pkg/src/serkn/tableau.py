"""Construction of diagonal implicit symplectic ERKN tableaux.

An s-stage method is held as nodes c_i, stage weights d_i and scalar
coefficient functions b_i(v), bbar_i(v), abar_ij(v) (j <= i) of v = h^2 *
eigenvalue.  The symplecticity identities

    phi0(v) b_i(v) + v phi1(v) bbar_i(v) = d_i phi0(c_i^2 v)
    phi1(v) b_i(v) -   phi0(v) bbar_i(v) = c_i d_i phi1(c_i^2 v)
    bbar_j(v) b_i(v) - bbar_i(v) b_j(v)  = d_i abar_ij(v)      (j < i)

fix b, bbar and the strictly-lower abar once (c, d) are chosen; in closed
form b_i(v) = d_i phi0((1-c_i)^2 v) and bbar_i(v) = d_i (1-c_i)
phi1((1-c_i)^2 v) (sine/cosine addition).  The diagonal abar_ii are then
pinned by the order conditions through small linear systems in phi3/phi4.

Coefficient functions are stored as composable closures over
:func:`serkn.phi.phi_scalar` rather than truncated series: the closed forms
are exact and remain valid for v of order 10^2-10^3 where any short series
would be useless.  All closures accept floats or mpmath scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .phi import chi_scalar, phi_scalar, psi_scalar

__all__ = [
    "DenominatorGuardError",
    "MethodTableau",
    "build_one_stage",
    "build_two_stage_order3",
    "build_two_stage_order4",
    "build_three_stage",
    "rkn_limit",
    "coefficient",
    "taylor_coefficients",
    "method_names",
    "get_method",
]

GUARD = 1e-10


class DenominatorGuardError(ArithmeticError):
    """A coefficient formula hit a denominator smaller than the guard."""


def _guarded(den, what: str, v):
    if abs(den) < GUARD:
        raise DenominatorGuardError(
            f"denominator of {what} is {float(den):.3e} at v={float(v):.6g}")
    return den


@dataclass(frozen=True)
class MethodTableau:
    """Immutable s-stage diagonal implicit ERKN tableau.

    ``b``, ``b_bar`` are tuples of s scalar functions; ``a_bar`` is a tuple
    of rows, row i holding functions for j = 1..i (lower triangle including
    the diagonal).  ``classical`` marks frozen constant-coefficient tableaux
    that are meant to run as classical RKN methods (stiff part folded into
    the force).
    """

    name: str
    stages: int
    order: int
    c: tuple
    d: tuple
    b: tuple
    b_bar: tuple
    a_bar: tuple
    classical: bool = False


def coefficient(m: MethodTableau, kind: str, i: int, j: int | None = None, v=0.0):
    """Evaluate one coefficient function at v.  Stage indices are 1-based."""
    if v < 0:
        raise ValueError(f"v must be >= 0, got {v!r}")
    if not 1 <= i <= m.stages:
        raise IndexError(f"stage index i={i} out of range for {m.stages}-stage method")
    if kind == "b":
        return m.b[i - 1](v)
    if kind == "b_bar":
        return m.b_bar[i - 1](v)
    if kind == "a_bar":
        if j is None or not 1 <= j <= i:
            raise IndexError(f"a_bar index (i={i}, j={j}) outside the lower triangle")
        return m.a_bar[i - 1][j - 1](v)
    raise ValueError(f"unknown coefficient kind {kind!r}")


def _weight_pair(d, c):
    """b(v) = d*phi0(beta^2 v), bbar(v) = d*beta*phi1(beta^2 v), beta = 1-c."""
    beta = 1.0 - c
    bsq = beta * beta

    def b(v, _d=d, _bsq=bsq):
        return _d * phi_scalar(0, _bsq * v)

    def b_bar(v, _d=d, _beta=beta, _bsq=bsq):
        return _d * _beta * phi_scalar(1, _bsq * v)

    return b, b_bar


def _pair_abar(bi, bbi, bj, bbj, di):
    """abar_ij = (b_i bbar_j - b_j bbar_i)/d_i for j < i."""

    def a(v):
        return (bi(v) * bbj(v) - bj(v) * bbi(v)) / di

    return a


def build_one_stage(variant: str) -> MethodTableau:
    """SERKN1s2: c1 = 1/2, d1 = 1, order 2; abar_11 is free.

    variant "phi0" takes abar_11 = phi0(v)  (SERKN1s2(1));
    variant "bbar" takes abar_11 = bbar_1   (SERKN1s2(2)).
    """
    if variant not in ("phi0", "bbar"):
        raise ValueError(f"variant must be 'phi0' or 'bbar', got {variant!r}")
    b1, bb1 = _weight_pair(1.0, 0.5)
    a11 = (lambda v: phi_scalar(0, v)) if variant == "phi0" else bb1
    name = "SERKN1s2(1)" if variant == "phi0" else "SERKN1s2(2)"
    return MethodTableau(name=name, stages=1, order=2, c=(0.5,), d=(1.0,),
                         b=(b1,), b_bar=(bb1,), a_bar=((a11,),))


def build_two_stage_order3() -> MethodTableau:
    """SERKN2s3: c = (1/5, 7/9), d = (25/52, 27/52), order 3.

    abar_22 = abar_11 = (phi3 - abar_21 b2)/(b1 + b2).
    """
    c = (0.2, 7.0 / 9.0)
    d = (25.0 / 52.0, 27.0 / 52.0)
    b1, bb1 = _weight_pair(d[0], c[0])
    b2, bb2 = _weight_pair(d[1], c[1])
    a21 = _pair_abar(b2, bb2, b1, bb1, d[1])

    def a_diag(v):
        den = _guarded(b1(v) + b2(v), "SERKN2s3 abar_11", v)
        return (phi_scalar(3, v) - a21(v) * b2(v)) / den

    return MethodTableau(name="SERKN2s3", stages=2, order=3, c=c, d=d,
                         b=(b1, b2), b_bar=(bb1, bb2),
                         a_bar=((a_diag,), (a21, a_diag)))


def build_two_stage_order4() -> MethodTableau:
    """SERKN2s4: Gauss nodes c = ((3-sqrt3)/6, (3+sqrt3)/6), d = (1/2, 1/2).

    abar_11, abar_22 solve the 2x2 system  bbar.A = phi4, b.A = phi3
    (A = (abar_11, abar_21 + abar_22)), written out with the common
    denominator W = b1 bbar2 - b2 bbar1.
    """
    s3 = math.sqrt(3.0)
    c = ((3.0 - s3) / 6.0, (3.0 + s3) / 6.0)
    d = (0.5, 0.5)
    b1, bb1 = _weight_pair(d[0], c[0])
    b2, bb2 = _weight_pair(d[1], c[1])
    a21 = _pair_abar(b2, bb2, b1, bb1, d[1])

    def a11(v):
        w = _guarded(b1(v) * bb2(v) - b2(v) * bb1(v), "SERKN2s4 abar_11", v)
        return (bb2(v) * phi_scalar(3, v) - b2(v) * phi_scalar(4, v)) / w

    def a22(v):
        w = _guarded(b1(v) * bb2(v) - b2(v) * bb1(v), "SERKN2s4 abar_22", v)
        return (-a21(v) * w - bb1(v) * phi_scalar(3, v) + b1(v) * phi_scalar(4, v)) / w

    return MethodTableau(name="SERKN2s4", stages=2, order=4, c=c, d=d,
                         b=(b1, b2), b_bar=(bb1, bb2),
                         a_bar=((a11,), (a21, a22)))


def _det3(m):
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def build_three_stage(c1: float, c2: float, variant_name: str) -> MethodTableau:
    """Three-stage order-4 family parametrized by nodes (c1, c2).

    c3 and the weights follow from

        c3 = (3 - 4c1 - 4c2 + 6c1c2) / (4 - 6c1 - 6c2 + 12c1c2)
        d1 = (2 - 3c3 + c2(-3 + 6c3)) / (6(c1-c2)(c1-c3))        (etc. cyclic)

    The diagonal abar_ii together with the row sums solve

        sum_i bbar_i x_i = phi4,  sum_i b_i x_i = phi3,  sum_i c_i b_i x_i = 3 phi4

    with x = (abar_11, abar_21+abar_22, abar_31+abar_32+abar_33).  That
    system written in b/bbar is exactly singular at v = 0 (bbar_i(0) =
    d_i - d_i c_i makes row1 = row2 - row3), so the first equation is
    replaced by the exact combination (row2 - row3 - row1)/v, whose entries
    -d_i (1-c_i)^3 psi((1-c_i)^2 v) and right side chi(v) are entire; the
    reduced system is nonsingular at v = 0 and agrees with the raw one for
    every v > 0.
    """
    if c1 == c2:
        raise ValueError("c1 and c2 must be distinct")
    den_c3 = 4.0 - 6.0 * c1 - 6.0 * c2 + 12.0 * c1 * c2
    if abs(den_c3) < GUARD:
        raise ValueError("node denominator 4 - 6c1 - 6c2 + 12c1c2 vanishes")
    c3 = (3.0 - 4.0 * c1 - 4.0 * c2 + 6.0 * c1 * c2) / den_c3
    if c3 in (c1, c2) or abs(c3 - c1) < 1e-12 or abs(c3 - c2) < 1e-12:
        raise ValueError(f"derived c3={c3} coincides with c1 or c2")
    c = (c1, c2, c3)
    d = (
        (2.0 - 3.0 * c3 + c2 * (-3.0 + 6.0 * c3)) / (6.0 * (c1 - c2) * (c1 - c3)),
        (-2.0 + c1 * (3.0 - 6.0 * c3) + 3.0 * c3) / (6.0 * (c1 - c2) * (c2 - c3)),
        (-2.0 + c1 * (3.0 - 6.0 * c2) + 3.0 * c2) / (6.0 * (c1 - c3) * (-c2 + c3)),
    )
    bs, bbs = zip(*(_weight_pair(d[i], c[i]) for i in range(3)))
    a21 = _pair_abar(bs[1], bbs[1], bs[0], bbs[0], d[1])
    a31 = _pair_abar(bs[2], bbs[2], bs[0], bbs[0], d[2])
    a32 = _pair_abar(bs[2], bbs[2], bs[1], bbs[1], d[2])
    beta3 = tuple((1.0 - ci) ** 3 for ci in c)
    bsq = tuple((1.0 - ci) ** 2 for ci in c)

    def row_sums(v):
        bv = [f(v) for f in bs]
        rows = [
            [-d[i] * beta3[i] * psi_scalar(bsq[i] * v) for i in range(3)],
            bv,
            [bv[i] * c[i] for i in range(3)],
        ]
        rhs = [chi_scalar(v), phi_scalar(3, v), 3.0 * phi_scalar(4, v)]
        det = _guarded(_det3(rows), f"{variant_name} diagonal system", v)
        out = []
        for col in range(3):
            mod = [list(r) for r in rows]
            for r in range(3):
                mod[r][col] = rhs[r]
            out.append(_det3(mod) / det)
        return out

    def a11(v):
        return row_sums(v)[0]

    def a22(v):
        return row_sums(v)[1] - a21(v)

    def a33(v):
        return row_sums(v)[2] - a31(v) - a32(v)

    return MethodTableau(name=variant_name, stages=3, order=4, c=c, d=d,
                         b=bs, b_bar=bbs,
                         a_bar=((a11,), (a21, a22), (a31, a32, a33)))


def rkn_limit(m: MethodTableau, name: str | None = None) -> MethodTableau:
    """Freeze every coefficient function at v = 0.

    The result is the classical RKN tableau underlying ``m`` and is flagged
    ``classical``: drivers run it with the stiffness folded into the force
    (see :func:`serkn.problems.classical_form`).
    """
    def const(x):
        return lambda v, _x=x: _x

    b = tuple(const(f(0.0)) for f in m.b)
    b_bar = tuple(const(f(0.0)) for f in m.b_bar)
    a_bar = tuple(tuple(const(f(0.0)) for f in row) for row in m.a_bar)
    return replace(m, name=name or f"{m.name}-rkn-limit", b=b, b_bar=b_bar,
                   a_bar=a_bar, classical=True)


def taylor_coefficients(f, n_terms: int):
    """First ``n_terms`` Taylor coefficients of f at 0 (coefficients of v^k).

    Computed by one-sided finite differences under mpmath at 40 digits, so
    the closures are probed only at v >= 0 and the returned floats carry far
    better than 1e-9 relative accuracy even for coefficients of magnitude
    1e-9.
    """
    import mpmath as mp

    if not 1 <= n_terms <= 4:
        raise ValueError(f"n_terms must be in 1..4, got {n_terms}")
    with mp.workdps(40):
        coeffs = mp.taylor(f, mp.mpf(0), n_terms - 1, direction=1)
    out = [float(x) for x in coeffs]
    if not all(math.isfinite(x) for x in out):
        raise ArithmeticError(f"non-finite Taylor coefficients near 0: {out}")
    return out


_SQRT15 = math.sqrt(15.0)


def _build_registry():
    serkn = [
        build_one_stage("phi0"),
        build_one_stage("bbar"),
        build_two_stage_order3(),
        build_two_stage_order4(),
        build_three_stage((5.0 - _SQRT15) / 10.0, 0.5, "SERKN3s4(1)"),
        build_three_stage((5.0 + _SQRT15) / 10.0, (5.0 - _SQRT15) / 10.0, "SERKN3s4(2)"),
    ]
    reg = {m.name: m for m in serkn}
    reg["RKN1s2"] = rkn_limit(reg["SERKN1s2(1)"], name="RKN1s2")
    reg["RKN2s3"] = rkn_limit(reg["SERKN2s3"], name="RKN2s3")
    reg["RKN3s4"] = rkn_limit(reg["SERKN3s4(1)"], name="RKN3s4")
    return reg


_REGISTRY = _build_registry()


def method_names():
    return list(_REGISTRY)


def get_method(name: str) -> MethodTableau:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown method {name!r}; available: {', '.join(_REGISTRY)}") from None
