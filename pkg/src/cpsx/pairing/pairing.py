"""Optimal ate pairing on BLS12-381.

The Miller loop runs over the absolute value of the curve parameter x
with affine twist-point arithmetic; slope denominators for all input
pairs are inverted together with one batched inversion per step. Line
evaluations hit the sparse (c0, c1w^2, c4w^3) shape, folded into the
accumulator with fq12_mul_by_014.

The final exponentiation uses the classic easy part followed by a hard
part that computes the third power of the standard pairing value. The
cube of a bilinear non-degenerate pairing is itself bilinear and
non-degenerate (3 does not divide the group order), and nothing here
needs to interoperate with other pairing stacks, so the extra factor
is harmless and saves a multi-addition chain.
"""

from __future__ import annotations

from typing import Iterable

from gmpy2 import mpz

from .curve import G1Point, G2Point
from .fields import (
    FQ12_ONE,
    X_ABS,
    Fq2,
    Fq12,
    fq2_batch_inv,
    fq2_mul,
    fq2_neg,
    fq2_scale,
    fq2_sqr,
    fq2_sub,
    fq12_conj,
    fq12_frobenius,
    fq12_inv,
    fq12_mul,
    fq12_mul_by_014,
    fq12_sqr,
)

# Bits of |x| after the leading one, most significant first.
_X_BITS = [b == "1" for b in bin(X_ABS)[3:]]


def miller_loop(pairs: Iterable[tuple[G1Point, G2Point]]) -> Fq12:
    """Shared Miller loop over (P, Q) pairs; pairs with infinity contribute 1."""
    live = [(p, q) for p, q in pairs if p is not None and q is not None]
    if not live:
        return FQ12_ONE
    # G1 evaluation points, embedded into Fq2 once up front.
    zero = mpz(0)
    xs: list[Fq2] = [(p[0], zero) for p, _ in live]
    ys: list[Fq2] = [(p[1], zero) for p, _ in live]
    q_pts = [q for _, q in live]
    t_pts = list(q_pts)
    n = len(live)

    f = FQ12_ONE
    for bit in _X_BITS:
        f = fq12_sqr(f)
        # Doubling step for every accumulator point.
        invs = fq2_batch_inv([fq2_scale(t[1], 2) for t in t_pts])
        for i in range(n):
            tx, ty = t_pts[i]
            lam = fq2_mul(fq2_scale(fq2_sqr(tx), 3), invs[i])
            f = fq12_mul_by_014(
                f,
                fq2_sub(fq2_mul(lam, tx), ty),
                fq2_neg(fq2_mul(lam, xs[i])),
                ys[i],
            )
            x3 = fq2_sub(fq2_sqr(lam), fq2_scale(tx, 2))
            t_pts[i] = (x3, fq2_sub(fq2_mul(lam, fq2_sub(tx, x3)), ty))
        if bit:
            invs = fq2_batch_inv(
                [fq2_sub(q_pts[i][0], t_pts[i][0]) for i in range(n)]
            )
            for i in range(n):
                tx, ty = t_pts[i]
                qx, qy = q_pts[i]
                lam = fq2_mul(fq2_sub(qy, ty), invs[i])
                f = fq12_mul_by_014(
                    f,
                    fq2_sub(fq2_mul(lam, qx), qy),
                    fq2_neg(fq2_mul(lam, xs[i])),
                    ys[i],
                )
                x3 = fq2_sub(fq2_sub(fq2_sqr(lam), tx), qx)
                t_pts[i] = (x3, fq2_sub(fq2_mul(lam, fq2_sub(tx, x3)), ty))
    # x is negative, so the ate length is -|x|; conjugation inverts f up to
    # factors the final exponentiation kills.
    return fq12_conj(f)


def _pow_x_abs(m: Fq12) -> Fq12:
    acc = m
    for bit in _X_BITS:
        acc = fq12_sqr(acc)
        if bit:
            acc = fq12_mul(acc, m)
    return acc


def final_exponentiation(f: Fq12) -> Fq12:
    # Easy part: f^((q^6 - 1)(q^2 + 1)). Afterwards f lies in the cyclotomic
    # subgroup, where conjugation is inversion.
    f = fq12_mul(fq12_conj(f), fq12_inv(f))
    f = fq12_mul(fq12_frobenius(f, 2), f)

    def pow_x(m: Fq12) -> Fq12:
        return fq12_conj(_pow_x_abs(m))

    def pow_x_minus_1(m: Fq12) -> Fq12:
        return fq12_conj(fq12_mul(_pow_x_abs(m), m))

    # Hard part, as the cube of the usual exponent:
    # 3 * (q^4 - q^2 + 1)/r = (x-1)^2 (x+q) (x^2 + q^2 - 1) + 3.
    a = pow_x_minus_1(pow_x_minus_1(f))
    b = fq12_mul(pow_x(a), fq12_frobenius(a, 1))
    c = fq12_mul(
        fq12_mul(pow_x(pow_x(b)), fq12_frobenius(b, 2)),
        fq12_conj(b),
    )
    return fq12_mul(c, fq12_mul(fq12_sqr(f), f))


def pairing(p: G1Point, q: G2Point) -> Fq12:
    return final_exponentiation(miller_loop([(p, q)]))


def multi_pairing(pairs: Iterable[tuple[G1Point, G2Point]]) -> Fq12:
    """Product of pairings sharing one Miller loop and one final exponentiation."""
    return final_exponentiation(miller_loop(pairs))
