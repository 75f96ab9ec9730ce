#!/usr/bin/env python3
"""Independent reference computations for the Rust test vectors.

Words are 16-byte big-endian integers; h() is the first 16 bytes of
SHA-256 (or SHA-512) over the concatenated words.
"""
import hashlib

P = 2**128 - 15449
G = 4
MASK = 2**128 - 1


def word(x):
    return x.to_bytes(16, "big")


def label(s):
    raw = s.encode()
    assert 0 < len(raw) <= 16
    return int.from_bytes(raw + b"\0" * (16 - len(raw)), "big")


def h(*parts, alg="sha256"):
    d = hashlib.new(alg)
    for p in parts:
        d.update(word(p))
    return int.from_bytes(d.digest()[:16], "big")


def codeword(key, bits=512):
    t = bits // 128
    out = 0
    for i in range(128):
        if (key >> (127 - i)) & 1:
            for j in range(t):
                out |= 1 << (bits - 1 - (i * t + j))
    return out


def hex_word(x):
    return f"{x:032x}"


def hash_vectors():
    cases = [
        [0],
        [label("abc")],
        [1, 2],
        [2, 1],
        [MASK, 0, MASK],
        [label("alice"), label("hunter2"), 0x0123456789ABCDEF0123456789ABCDEF],
    ]
    lines = []
    for parts in cases:
        lines.append(
            "{} {} {}".format(
                ",".join(hex_word(p) for p in parts),
                hex_word(h(*parts)),
                hex_word(h(*parts, alg="sha512")),
            )
        )
    return lines


def baseline():
    x = 0x1D2C3B4A5968778695A4B3C2D1E0F
    r_u = 0xA5A5A5A55A5A5A5A0123456789ABCDE
    r_s = 0x3141592653589793238462643383279
    ident, pw = label("alice"), label("hunter2")
    n = 0x00112233445566778899AABBCCDDEEFF
    r = 0xF0E1D2C3B4A5968778695A4B3C2D1E0F
    t1 = 1_700_000_000_000
    y = pow(G, x, P)
    hh = h(ident, x)
    e = hh ^ h(pw, n)
    l = n ^ r
    v = h(ident, pw, n)
    a1 = pow(G, r_u, P)
    a2 = pow(y, r_u, P)
    nid = ident ^ a2
    c_i = h(ident, hh, a1, a2, t1)
    # server, at T3 = T1 + 250
    t3 = t1 + 250
    a3 = pow(a1, x, P)
    assert a3 == a2
    a4 = pow(G, r_s, P)
    a5 = pow(a1, r_s, P)
    sk = h(ident, a3, a5, hh, t1, t3)
    cs = h(ident, sk, hh, t3)
    assert h(ident, a2, pow(a4, r_u, P), hh, t1, t3) == sk
    return dict(
        x=x, r_u=r_u, r_s=r_s, id=ident, pw=pw, n=n, r=r, t1=t1, t3=t3,
        Y=y, e=e, L=l, V=v, helper=codeword(r), NID=nid, A1=a1, C_i=c_i,
        A4=a4, Cs=cs, SK=sk,
    )


def improved():
    x = 0x1D2C3B4A5968778695A4B3C2D1E0F
    r_u = 0xA5A5A5A55A5A5A5A0123456789ABCDE
    r_s = 0x3141592653589793238462643383279
    ident, pw = label("bob"), label("tr0ub4dor")
    n = 0x00112233445566778899AABBCCDDEEFF
    r = 0xF0E1D2C3B4A5968778695A4B3C2D1E0F
    t1, t2 = 1_690_000_000_000, 1_690_000_000_040
    # registration
    w = h(pw, n, t1)
    g_ = h(ident, x)
    hh = g_ ^ t2
    e = hh ^ w
    l = n ^ r ^ t1
    v = h(ident, t1, pw, t2, n)
    m = h(ident ^ t2) ^ t1
    nmask = h(pw, r) ^ t2
    y = pow(G, x, P)
    # login at T3
    t3 = 1_700_000_000_000
    a1 = pow(G, r_u, P)
    a11 = a1 ^ t2 ^ t3
    a2 = pow(y, r_u, P)
    a22 = a2 ^ t3
    nid = ident ^ a22 ^ h(t1, t3, t2)
    c_i = h(ident, hh, a22, a11, t1, t3, t2)
    q = t3 ^ h(t1)
    # server at T4 = T5 = T3 + 300
    t4 = t5 = t3 + 300
    a4 = pow(G, r_s, P)
    a44 = a4 ^ t3 ^ t4
    a5 = pow(a1, r_s, P)
    a55 = a5 ^ t3 ^ t5
    sk = h(ident, a22, a55, hh, t1, t3, t5)
    cs = h(ident, sk, hh, t2, t4)
    p_ = h(t1, ident, t3) ^ t4
    q2 = h(t2, ident, t3) ^ t5
    assert h(ident, a22, pow(a4, r_u, P) ^ t3 ^ t5, hh, t1, t3, t5) == sk
    return dict(
        x=x, r_u=r_u, r_s=r_s, id=ident, pw=pw, n=n, r=r, t1=t1, t2=t2, t3=t3, t4=t4,
        Y=y, e=e, L=l, V=v, M=m, Nmask=nmask, helper=codeword(r), NID=nid, A11=a11,
        C_i=c_i, Q=q, Cs=cs, A44=a44, P=p_, Q2=q2, SK=sk,
    )


def dump(name, values):
    out = [f"[{name}]"]
    for k, v in values.items():
        if k == "helper":
            out.append(f"{k} {v:0128x}")
        elif k.startswith("t"):
            out.append(f"{k} {v}")
        else:
            out.append(f"{k} {hex_word(v)}")
    return out


if __name__ == "__main__":
    with open("hash_vectors.txt", "w") as f:
        f.write("# words(,-separated) sha256 sha512\n")
        f.write("\n".join(hash_vectors()) + "\n")
    with open("protocol_vectors.txt", "w") as f:
        f.write("\n".join(dump("baseline", baseline()) + [""] + dump("improved", improved())) + "\n")
