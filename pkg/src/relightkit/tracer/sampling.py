"""Counter-based sample generation.

Every random number is a pure function of ``(seed, stream, dimension,
sample index)``, where ``stream`` is the pixel index.  No generator state is
carried between pixels, so results do not depend on how pixels are split
across workers.

2D sample sets are correlated multi-jittered patterns (Kensler 2013): the
``n`` points of one pixel are jointly stratified, which matters a great deal
for the smooth integrands of diffuse shading.
"""
import math

import numba

MASK32 = 0xFFFFFFFF

# dimension tags keep the AO and shading patterns of one pixel independent
DIM_AO = 1
DIM_SHADING = 2


@numba.njit(cache=True, nogil=True)
def mix32(x):
    x &= MASK32
    x ^= x >> 16
    x = (x * 0x7FEB352D) & MASK32
    x ^= x >> 15
    x = (x * 0x846CA68B) & MASK32
    x ^= x >> 16
    return x


@numba.njit(cache=True, nogil=True)
def stream_key(seed_lo, seed_hi, stream, dim):
    h = mix32(seed_lo ^ 0x9E3779B9)
    h = mix32(h ^ seed_hi)
    h = mix32(h ^ (stream & MASK32))
    h = mix32(h ^ ((stream >> 32) & MASK32) ^ (dim * 0x632BE5AB & MASK32))
    return h


@numba.njit(cache=True, nogil=True)
def permute(i, l, p):
    """Bijective hash of ``i`` within ``[0, l)`` keyed by ``p``."""
    w = l - 1
    w |= w >> 1
    w |= w >> 2
    w |= w >> 4
    w |= w >> 8
    w |= w >> 16
    while True:
        i ^= p
        i = (i * 0xE170893D) & MASK32
        i ^= p >> 16
        i ^= (i & w) >> 4
        i ^= p >> 8
        i = (i * 0x0929EB3F) & MASK32
        i ^= p >> 23
        i ^= (i & w) >> 1
        i = (i * (1 | p >> 27)) & MASK32
        i = (i * 0x6935FA69) & MASK32
        i ^= (i & w) >> 11
        i = (i * 0x74DCB303) & MASK32
        i ^= (i & w) >> 2
        i = (i * 0x9E501CC3) & MASK32
        i ^= (i & w) >> 2
        i = (i * 0xC860A3DF) & MASK32
        i &= w
        i ^= i >> 5
        if i < l:
            break
    return (i + p) % l


@numba.njit(cache=True, nogil=True)
def randfloat(i, p):
    i ^= p
    i ^= i >> 17
    i ^= i >> 10
    i = (i * 0xB36534E5) & MASK32
    i ^= i >> 12
    i ^= i >> 21
    i = (i * 0x93FC4795) & MASK32
    i ^= 0xDF6E307F
    i ^= i >> 17
    i = (i * (1 | p >> 18)) & MASK32
    return i * (1.0 / 4294967808.0)


@numba.njit(cache=True, nogil=True)
def cmj2d(s, n, p):
    """Sample ``s`` of an ``n``-point correlated multi-jittered pattern ``p``.

    Both coordinates lie in [0, 1).
    """
    m = int(math.sqrt(n))
    if m < 1:
        m = 1
    nn = (n + m - 1) // m
    s = permute(s, n, (p * 0x51633E2D) & MASK32)
    sx = permute(s % m, m, (p * 0x68BC21EB) & MASK32)
    sy = permute(s // m, nn, (p * 0x02E5BE93) & MASK32)
    jx = randfloat(s, (p * 0x967A889B) & MASK32)
    jy = randfloat(s, (p * 0x368CC8B7) & MASK32)
    x = (sx + (sy + jx) / nn) / m
    y = (s + jy) / n
    return min(x, 0.99999999999), min(y, 0.99999999999)


@numba.njit(cache=True, nogil=True)
def concentric_disk(u1, u2):
    a = 2.0 * u1 - 1.0
    b = 2.0 * u2 - 1.0
    if a == 0.0 and b == 0.0:
        return 0.0, 0.0
    if abs(a) > abs(b):
        r = a
        phi = (math.pi / 4.0) * (b / a)
    else:
        r = b
        phi = math.pi / 2.0 - (math.pi / 4.0) * (a / b)
    return r * math.cos(phi), r * math.sin(phi)


@numba.njit(cache=True, nogil=True)
def cosine_hemisphere(nx, ny, nz, u1, u2):
    """Cosine-weighted direction about the unit normal ``n``."""
    dx, dy = concentric_disk(u1, u2)
    dz = math.sqrt(max(0.0, 1.0 - dx * dx - dy * dy))
    # branchless orthonormal basis (Duff et al. 2017)
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    tx, ty, tz = 1.0 + sign * nx * nx * a, sign * b, -sign * nx
    bx, by, bz = b, sign + ny * ny * a, -ny
    return (dx * tx + dy * bx + dz * nx,
            dx * ty + dy * by + dz * ny,
            dx * tz + dy * bz + dz * nz)


def split_seed(seed):
    """64-bit seed -> (low, high) 32-bit halves."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & MASK32, seed >> 32
