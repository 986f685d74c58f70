"""Extension-field tower for the BLS12-381 pairing.

Layout: Fq2 = Fq[u]/(u^2+1), Fq6 = Fq2[v]/(v^3-xi) with xi = 1+u,
Fq12 = Fq6[w]/(w^2-v). Elements are nested tuples of gmpy2.mpz; all
functions are pure. Tuples instead of classes keep per-operation
interpreter overhead low, which dominates at these operand sizes.
"""

from __future__ import annotations

from gmpy2 import invert, mpz

# Base field prime and the prime order of G1/G2/GT.
P = mpz(0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB)
R = mpz(0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001)

# Curve family parameter; negative for this curve.
X_ABS = 0xD201000000010000
X_IS_NEGATIVE = True

Fq2 = tuple  # (c0, c1)
Fq6 = tuple  # (Fq2, Fq2, Fq2)
Fq12 = tuple  # (Fq6, Fq6)

FQ2_ZERO: Fq2 = (mpz(0), mpz(0))
FQ2_ONE: Fq2 = (mpz(1), mpz(0))
FQ6_ZERO: Fq6 = (FQ2_ZERO, FQ2_ZERO, FQ2_ZERO)
FQ6_ONE: Fq6 = (FQ2_ONE, FQ2_ZERO, FQ2_ZERO)
FQ12_ONE: Fq12 = (FQ6_ONE, FQ6_ZERO)


# --- Fq2 ---------------------------------------------------------------------

def fq2_add(a: Fq2, b: Fq2) -> Fq2:
    return ((a[0] + b[0]) % P, (a[1] + b[1]) % P)


def fq2_sub(a: Fq2, b: Fq2) -> Fq2:
    return ((a[0] - b[0]) % P, (a[1] - b[1]) % P)


def fq2_neg(a: Fq2) -> Fq2:
    return (-a[0] % P, -a[1] % P)


def fq2_conj(a: Fq2) -> Fq2:
    return (a[0], -a[1] % P)


def fq2_mul(a: Fq2, b: Fq2) -> Fq2:
    a0, a1 = a
    b0, b1 = b
    t0 = a0 * b0
    t1 = a1 * b1
    return ((t0 - t1) % P, ((a0 + a1) * (b0 + b1) - t0 - t1) % P)


def fq2_sqr(a: Fq2) -> Fq2:
    a0, a1 = a
    return ((a0 + a1) * (a0 - a1) % P, (a0 * a1 * 2) % P)


def fq2_scale(a: Fq2, k) -> Fq2:
    return (a[0] * k % P, a[1] * k % P)


def fq2_mul_xi(a: Fq2) -> Fq2:
    # multiply by xi = 1 + u
    a0, a1 = a
    return ((a0 - a1) % P, (a0 + a1) % P)


def fq2_inv(a: Fq2) -> Fq2:
    a0, a1 = a
    norm = (a0 * a0 + a1 * a1) % P
    t = invert(norm, P)
    return (a0 * t % P, -a1 * t % P)


def fq2_batch_inv(items: list[Fq2]) -> list[Fq2]:
    """Montgomery trick: n inversions for the cost of one plus 3n muls."""
    n = len(items)
    if n == 0:
        return []
    prefix = [items[0]]
    for i in range(1, n):
        prefix.append(fq2_mul(prefix[-1], items[i]))
    acc = fq2_inv(prefix[-1])
    out: list[Fq2] = [FQ2_ZERO] * n
    for i in range(n - 1, 0, -1):
        out[i] = fq2_mul(acc, prefix[i - 1])
        acc = fq2_mul(acc, items[i])
    out[0] = acc
    return out


def fq2_pow(a: Fq2, e: int) -> Fq2:
    result = FQ2_ONE
    base = a
    while e:
        if e & 1:
            result = fq2_mul(result, base)
        base = fq2_sqr(base)
        e >>= 1
    return result


# --- Fq6 ---------------------------------------------------------------------

def fq6_add(a: Fq6, b: Fq6) -> Fq6:
    return (fq2_add(a[0], b[0]), fq2_add(a[1], b[1]), fq2_add(a[2], b[2]))


def fq6_sub(a: Fq6, b: Fq6) -> Fq6:
    return (fq2_sub(a[0], b[0]), fq2_sub(a[1], b[1]), fq2_sub(a[2], b[2]))


def fq6_neg(a: Fq6) -> Fq6:
    return (fq2_neg(a[0]), fq2_neg(a[1]), fq2_neg(a[2]))


def fq6_mul(a: Fq6, b: Fq6) -> Fq6:
    a0, a1, a2 = a
    b0, b1, b2 = b
    m0 = fq2_mul(a0, b0)
    m1 = fq2_mul(a1, b1)
    m2 = fq2_mul(a2, b2)
    c0 = fq2_add(m0, fq2_mul_xi(fq2_sub(fq2_mul(fq2_add(a1, a2), fq2_add(b1, b2)), fq2_add(m1, m2))))
    c1 = fq2_add(fq2_sub(fq2_mul(fq2_add(a0, a1), fq2_add(b0, b1)), fq2_add(m0, m1)), fq2_mul_xi(m2))
    c2 = fq2_add(fq2_sub(fq2_mul(fq2_add(a0, a2), fq2_add(b0, b2)), fq2_add(m0, m2)), m1)
    return (c0, c1, c2)


def fq6_sqr(a: Fq6) -> Fq6:
    a0, a1, a2 = a
    s0 = fq2_sqr(a0)
    s1 = fq2_sqr(a1)
    s2 = fq2_sqr(a2)
    a01 = fq2_mul(a0, a1)
    a02 = fq2_mul(a0, a2)
    a12 = fq2_mul(a1, a2)
    c0 = fq2_add(s0, fq2_mul_xi(fq2_add(a12, a12)))
    c1 = fq2_add(fq2_add(a01, a01), fq2_mul_xi(s2))
    c2 = fq2_add(s1, fq2_add(a02, a02))
    return (c0, c1, c2)


def fq6_mul_by_v(a: Fq6) -> Fq6:
    return (fq2_mul_xi(a[2]), a[0], a[1])


def fq6_inv(a: Fq6) -> Fq6:
    a0, a1, a2 = a
    c0 = fq2_sub(fq2_sqr(a0), fq2_mul_xi(fq2_mul(a1, a2)))
    c1 = fq2_sub(fq2_mul_xi(fq2_sqr(a2)), fq2_mul(a0, a1))
    c2 = fq2_sub(fq2_sqr(a1), fq2_mul(a0, a2))
    t = fq2_add(fq2_mul(a0, c0), fq2_mul_xi(fq2_add(fq2_mul(a1, c2), fq2_mul(a2, c1))))
    ti = fq2_inv(t)
    return (fq2_mul(c0, ti), fq2_mul(c1, ti), fq2_mul(c2, ti))


# --- Fq12 --------------------------------------------------------------------

def fq12_mul(a: Fq12, b: Fq12) -> Fq12:
    a0, a1 = a
    b0, b1 = b
    m0 = fq6_mul(a0, b0)
    m1 = fq6_mul(a1, b1)
    r0 = fq6_add(m0, fq6_mul_by_v(m1))
    r1 = fq6_sub(fq6_mul(fq6_add(a0, a1), fq6_add(b0, b1)), fq6_add(m0, m1))
    return (r0, r1)


def fq12_sqr(a: Fq12) -> Fq12:
    a0, a1 = a
    t = fq6_mul(a0, a1)
    r0 = fq6_sub(fq6_sub(fq6_mul(fq6_add(a0, a1), fq6_add(a0, fq6_mul_by_v(a1))), t), fq6_mul_by_v(t))
    r1 = fq6_add(t, t)
    return (r0, r1)


def fq12_conj(a: Fq12) -> Fq12:
    return (a[0], fq6_neg(a[1]))


def fq12_inv(a: Fq12) -> Fq12:
    a0, a1 = a
    t = fq6_inv(fq6_sub(fq6_sqr(a0), fq6_mul_by_v(fq6_sqr(a1))))
    return (fq6_mul(a0, t), fq6_neg(fq6_mul(a1, t)))


def fq12_mul_by_014(f: Fq12, c0: Fq2, c1: Fq2, c4: Fq2) -> Fq12:
    """Multiply f by the sparse element c0 + c1*v + c4*v*w (a Miller line)."""
    f0, f1 = f
    # f0 * (c0 + c1 v)
    a0, a1, a2 = f0
    m0 = fq2_mul(a0, c0)
    m1 = fq2_mul(a1, c1)
    t0 = (
        fq2_add(m0, fq2_mul_xi(fq2_mul(a2, c1))),
        fq2_sub(fq2_mul(fq2_add(a0, a1), fq2_add(c0, c1)), fq2_add(m0, m1)),
        fq2_add(fq2_mul(a2, c0), m1),
    )
    # f1 * (c4 v)
    b0, b1, b2 = f1
    t1 = (fq2_mul_xi(fq2_mul(b2, c4)), fq2_mul(b0, c4), fq2_mul(b1, c4))
    # Karatsuba combine: (f0 + f1 w)(alpha0 + alpha1 w), alpha0+alpha1 = (c0, c1+c4, 0)
    s1 = fq2_add(c1, c4)
    g0, g1, g2 = fq6_add(f0, f1)
    m0 = fq2_mul(g0, c0)
    m1 = fq2_mul(g1, s1)
    cross = (
        fq2_add(m0, fq2_mul_xi(fq2_mul(g2, s1))),
        fq2_sub(fq2_mul(fq2_add(g0, g1), fq2_add(c0, s1)), fq2_add(m0, m1)),
        fq2_add(fq2_mul(g2, c0), m1),
    )
    r0 = fq6_add(t0, fq6_mul_by_v(t1))
    r1 = fq6_sub(cross, fq6_add(t0, t1))
    return (r0, r1)


# --- Frobenius ---------------------------------------------------------------
# Fq12 viewed as sum a_i w^i (a_i in Fq2, i=0..5): frobenius^k maps
# a_i -> conj^k(a_i) * xi^(i(p^k-1)/6).

def _gamma_row(k: int) -> tuple[Fq2, ...]:
    e = (int(P) ** k - 1) // 6
    xi: Fq2 = (mpz(1), mpz(1))
    g1 = fq2_pow(xi, e)
    row = [FQ2_ONE]
    for _ in range(5):
        row.append(fq2_mul(row[-1], g1))
    return tuple(row)

_GAMMA = {k: _gamma_row(k) for k in (1, 2, 3)}


def _to_w_basis(a: Fq12) -> list[Fq2]:
    (c00, c01, c02), (c10, c11, c12) = a
    return [c00, c10, c01, c11, c02, c12]


def _from_w_basis(ws: list[Fq2]) -> Fq12:
    return ((ws[0], ws[2], ws[4]), (ws[1], ws[3], ws[5]))


def fq12_frobenius(a: Fq12, k: int) -> Fq12:
    gam = _GAMMA[k]
    ws = _to_w_basis(a)
    if k % 2 == 1:
        ws = [fq2_conj(w) for w in ws]
    return _from_w_basis([fq2_mul(w, gam[i]) for i, w in enumerate(ws)])


def fq12_pow(a: Fq12, e: int) -> Fq12:
    if e < 0:
        raise ValueError("negative exponent")
    result = FQ12_ONE
    base = a
    while e:
        if e & 1:
            result = fq12_mul(result, base)
        base = fq12_sqr(base)
        e >>= 1
    return result
