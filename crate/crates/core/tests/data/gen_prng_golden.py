"""Independent reference for the seed-0 PRNG stream.

ChaCha8 keyed by the PCG32 expansion of a u64 seed (64-bit block counter,
64-bit stream id, both zero), read as little-endian u64 words.

    python3 gen_prng_golden.py > prng_seed0.txt
"""

M32 = 0xFFFFFFFF
M64 = 0xFFFFFFFFFFFFFFFF


def expand_seed(state):
    mul, inc = 6364136223846793005, 11634580027462260723
    words = []
    for _ in range(8):
        state = (state * mul + inc) & M64
        xorshifted = (((state >> 18) ^ state) >> 27) & M32
        rot = state >> 59
        words.append(((xorshifted >> rot) | (xorshifted << ((32 - rot) % 32))) & M32)
    return words


def rotl(x, n):
    return ((x << n) | (x >> (32 - n))) & M32


def quarter(s, a, b, c, d):
    s[a] = (s[a] + s[b]) & M32; s[d] = rotl(s[d] ^ s[a], 16)
    s[c] = (s[c] + s[d]) & M32; s[b] = rotl(s[b] ^ s[c], 12)
    s[a] = (s[a] + s[b]) & M32; s[d] = rotl(s[d] ^ s[a], 8)
    s[c] = (s[c] + s[d]) & M32; s[b] = rotl(s[b] ^ s[c], 7)


def block(key, counter, stream, rounds=8):
    init = [0x61707865, 0x3320646E, 0x79622D32, 0x6B206574] + key + [
        counter & M32, counter >> 32, stream & M32, stream >> 32]
    s = list(init)
    for _ in range(rounds // 2):
        quarter(s, 0, 4, 8, 12); quarter(s, 1, 5, 9, 13)
        quarter(s, 2, 6, 10, 14); quarter(s, 3, 7, 11, 15)
        quarter(s, 0, 5, 10, 15); quarter(s, 1, 6, 11, 12)
        quarter(s, 2, 7, 8, 13); quarter(s, 3, 4, 9, 14)
    return [(x + y) & M32 for x, y in zip(s, init)]


def stream_u64(seed, count, stream=0):
    key = expand_seed(seed)
    words = []
    counter = 0
    while len(words) < 2 * count:
        words += block(key, counter, stream)
        counter += 1
    return [words[2 * i] | (words[2 * i + 1] << 32) for i in range(count)]


if __name__ == "__main__":
    vals = stream_u64(0, 16)
    print("[")
    for v in vals:
        print(f"    0x{v:016x},")
    print("]")
