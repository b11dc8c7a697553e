"""AES-128 (ECB, single block) with full intermediate-state capture."""

from typing import List, NamedTuple, Tuple

SBOX = bytes.fromhex(
    "637c777bf26b6fc53001672bfed7ab76"
    "ca82c97dfa5947f0add4a2af9ca472c0"
    "b7fd9326363ff7cc34a5e5f171d83115"
    "04c723c31896059a071280e2eb27b275"
    "09832c1a1b6e5aa0523bd6b329e32f84"
    "53d100ed20fcb15b6acbbe394a4c58cf"
    "d0efaafb434d338545f9027f503c9fa8"
    "51a3408f929d38f5bcb6da2110fff3d2"
    "cd0c13ec5f974417c4a77e3d645d1973"
    "60814fdc222a908846eeb814de5e0bdb"
    "e0323a0a4906245cc2d3ac629195e479"
    "e7c8376d8dd54ea96c56f4ea657aae08"
    "ba78252e1ca6b4c6e8dd741f4bbd8b8a"
    "703eb5664803f60e613557b986c11d9e"
    "e1f8981169d98e949b1e87e9ce5528df"
    "8ca1890dbfe6426841992d0fb054bb16"
)

RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)

# SubBytes, ShiftRows, MixColumns, AddRoundKey
OPS = ("SubBytes", "ShiftRows", "MixColumns", "AddRoundKey")

HW = bytes(bin(i).count("1") for i in range(256))


class RoundState(NamedTuple):
    op: str
    round: int
    state: bytes


def _check16(name, value):
    if len(value) != 16:
        raise ValueError(f"{name} must be exactly 16 bytes, got {len(value)}")
    return bytes(value)


def sbox(b: int) -> int:
    return SBOX[b & 0xFF]


def hamming_weight(b: int) -> int:
    return HW[b & 0xFF]


def hamming_distance(a: int, b: int) -> int:
    return HW[(a ^ b) & 0xFF]


def _xtime(b):
    b <<= 1
    return (b ^ 0x1B) & 0xFF if b & 0x100 else b


def expand_key(key: bytes) -> List[bytes]:
    """Return the 11 round keys of AES-128; round key 0 is the cipher key."""
    key = _check16("key", key)
    words = [list(key[i:i + 4]) for i in range(0, 16, 4)]
    for i in range(4, 44):
        w = list(words[i - 1])
        if i % 4 == 0:
            w = w[1:] + w[:1]
            w = [SBOX[v] for v in w]
            w[0] ^= RCON[i // 4 - 1]
        words.append([a ^ b for a, b in zip(words[i - 4], w)])
    return [bytes(sum(words[4 * r:4 * r + 4], [])) for r in range(11)]


def _sub_bytes(s):
    return bytes(SBOX[v] for v in s)


def _shift_rows(s):
    # column-major state: byte index = 4*col + row
    return bytes(s[4 * ((c + r) % 4) + r] for c in range(4) for r in range(4))


def _mix_columns(s):
    out = bytearray(16)
    for c in range(4):
        a0, a1, a2, a3 = s[4 * c:4 * c + 4]
        t = a0 ^ a1 ^ a2 ^ a3
        out[4 * c + 0] = a0 ^ t ^ _xtime(a0 ^ a1)
        out[4 * c + 1] = a1 ^ t ^ _xtime(a1 ^ a2)
        out[4 * c + 2] = a2 ^ t ^ _xtime(a2 ^ a3)
        out[4 * c + 3] = a3 ^ t ^ _xtime(a3 ^ a0)
    return bytes(out)


def _add_round_key(s, k):
    return bytes(a ^ b for a, b in zip(s, k))


def encrypt_block(key: bytes, pt: bytes) -> Tuple[bytes, List[RoundState]]:
    """Encrypt one block and return ``(ciphertext, rounds)``.

    ``rounds`` holds the 40 intermediate states in execution order: the
    initial AddRoundKey, then SubBytes/ShiftRows/MixColumns/AddRoundKey for
    rounds 1-9 and SubBytes/ShiftRows/AddRoundKey for round 10.
    """
    pt = _check16("plaintext", pt)
    rk = expand_key(key)
    s = _add_round_key(pt, rk[0])
    rounds = [RoundState("AddRoundKey", 0, s)]
    for r in range(1, 11):
        s = _sub_bytes(s)
        rounds.append(RoundState("SubBytes", r, s))
        s = _shift_rows(s)
        rounds.append(RoundState("ShiftRows", r, s))
        if r < 10:
            s = _mix_columns(s)
            rounds.append(RoundState("MixColumns", r, s))
        s = _add_round_key(s, rk[r])
        rounds.append(RoundState("AddRoundKey", r, s))
    return s, rounds


def encrypt(key: bytes, pt: bytes) -> bytes:
    return encrypt_block(key, pt)[0]
