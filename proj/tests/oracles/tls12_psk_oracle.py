#!/usr/bin/env python3
"""Independent oracle for the TLS 1.2 PRF / PSK key schedule vectors.

Written directly from RFC 2104, RFC 5246 section 5 and RFC 4279 section 2,
without reference to the C++ implementation. Output is the hex vectors that
are frozen into testdata/*.vec.
"""
import hashlib
import hmac


def p_sha256(secret: bytes, seed: bytes, out_len: int) -> bytes:
    out = b""
    a = seed
    while len(out) < out_len:
        a = hmac.new(secret, a, hashlib.sha256).digest()
        out += hmac.new(secret, a + seed, hashlib.sha256).digest()
    return out[:out_len]


def prf(secret: bytes, label: bytes, seed: bytes, out_len: int) -> bytes:
    return p_sha256(secret, label + seed, out_len)


def psk_premaster(psk: bytes) -> bytes:
    n = len(psk)
    return n.to_bytes(2, "big") + bytes(n) + n.to_bytes(2, "big") + psk


def master_secret(psk, cr, sr):
    return prf(psk_premaster(psk), b"master secret", cr + sr, 48)


def key_block(master, cr, sr):
    kb = prf(master, b"key expansion", sr + cr, 40)
    return kb[0:16], kb[16:32], kb[32:36], kb[36:40]


def main():
    # Widely circulated IETF TLS-WG P_SHA256 vector.
    secret = bytes.fromhex("9bbe436ba940f017b17652849a71db35")
    seed = bytes.fromhex("a0ba9f936cda311827a6f796ffd5198c")
    print("PRF vector:", prf(secret, b"test label", seed, 100).hex())

    print("HMAC tc1:", hmac.new(b"\x0b" * 20, b"Hi There", hashlib.sha256).hexdigest())
    print("HMAC empty:", hmac.new(b"", b"", hashlib.sha256).hexdigest())

    psk = b"\xaa" * 16
    cr = b"\x01" * 32
    sr = b"\x02" * 32
    ms = master_secret(psk, cr, sr)
    print("premaster:", psk_premaster(psk).hex())
    print("master:", ms.hex())
    cw, sw, cs, ss = key_block(ms, cr, sr)
    print("client_write_key:", cw.hex())
    print("server_write_key:", sw.hex())
    print("client_salt:", cs.hex())
    print("server_salt:", ss.hex())
    digest = hashlib.sha256(b"handshake transcript").digest()
    print("transcript digest:", digest.hex())
    print("client finished:", prf(ms, b"client finished", digest, 12).hex())
    print("server finished:", prf(ms, b"server finished", digest, 12).hex())


if __name__ == "__main__":
    main()
