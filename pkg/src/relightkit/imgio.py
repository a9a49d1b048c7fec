"""Image file formats: PFM, Radiance HDR (RGBE) and PNG.

All readers return float64 arrays shaped ``(H, W)`` or ``(H, W, 3)`` with
row 0 at the top of the image.  PNG color images are gamma-2.2 encoded on
write and decoded on read; masks and normal maps are stored linearly.
"""
import re
from pathlib import Path

import cv2
import numpy as np

from .errors import ShapeError

GAMMA = 2.2


# ---------------------------------------------------------------------------
# PFM


def write_pfm(path, image):
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise ShapeError(f"PFM stores (H, W) or (H, W, 3) images, got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(tag + b"\n%d %d\n-1.0\n" % (w, h))
        fh.write(np.ascontiguousarray(img[::-1]).astype("<f4").tobytes())


def _read_token_line(fh):
    line = fh.readline()
    if not line:
        raise ValueError("unexpected end of PFM header")
    return line.decode("ascii").strip()


def read_pfm(path):
    with open(path, "rb") as fh:
        tag = _read_token_line(fh)
        if tag not in ("PF", "Pf"):
            raise ValueError(f"{path}: not a PFM file (magic {tag!r})")
        dims = _read_token_line(fh).split()
        while len(dims) < 2:
            dims += _read_token_line(fh).split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(_read_token_line(fh))
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if tag == "PF" else 1
        data = np.frombuffer(fh.read(w * h * channels * 4), dtype=dtype)
    if data.size != w * h * channels:
        raise ValueError(f"{path}: truncated PFM payload")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float64)


# ---------------------------------------------------------------------------
# Radiance RGBE


def float_to_rgbe(rgb):
    """Shared-exponent encoding with round-to-nearest mantissas."""
    rgb = np.asarray(rgb, dtype=np.float64)
    v = rgb.max(axis=-1)
    mant, expo = np.frexp(v)
    # a mantissa that would round up to 256 moves to the next exponent
    carry = mant * 256.0 >= 255.5
    expo = np.where(carry, expo + 1, expo)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    ok = v > 1e-32
    scale = np.where(ok, np.ldexp(1.0, 8 - expo), 0.0)
    out[..., :3] = np.where(ok[..., None], np.clip(np.round(rgb * scale[..., None]), 0, 255), 0)
    out[..., 3] = np.where(ok, expo + 128, 0)
    return out


def rgbe_to_float(rgbe):
    """Decode as ``m * 2^(e - 136)``, the convention of common HDR readers."""
    rgbe = np.asarray(rgbe)
    e = rgbe[..., 3].astype(np.int64)
    f = np.ldexp(1.0, e - (128 + 8))
    rgb = rgbe[..., :3].astype(np.float64) * f[..., None]
    return np.where((e == 0)[..., None], 0.0, rgb)


def _rle_encode_channel(data):
    out = bytearray()
    n = len(data)
    i = 0
    while i < n:
        # find the next run of at least 4 equal bytes
        j = i
        run_start, run_len = n, 0
        while j < n:
            k = j + 1
            while k < n and data[k] == data[j] and k - j < 127:
                k += 1
            if k - j >= 4:
                run_start, run_len = j, k - j
                break
            j = k
        while i < run_start:
            chunk = min(128, run_start - i)
            out.append(chunk)
            out += bytes(data[i:i + chunk])
            i += chunk
        if run_len:
            out.append(128 + run_len)
            out.append(int(data[run_start]))
            i = run_start + run_len
    return out


def write_hdr(path, image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"HDR stores (H, W, 3) images, got {img.shape}")
    h, w = img.shape[:2]
    rgbe = float_to_rgbe(np.maximum(img, 0.0))
    with open(path, "wb") as fh:
        fh.write(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
        fh.write(b"-Y %d +X %d\n" % (h, w))
        use_rle = 8 <= w < 0x8000
        for y in range(h):
            line = rgbe[y]
            if not use_rle:
                fh.write(line.tobytes())
                continue
            fh.write(bytes([2, 2, w >> 8, w & 0xFF]))
            for c in range(4):
                fh.write(_rle_encode_channel(line[:, c]))


def _read_scanline(buf, pos, w):
    """Decode one scanline starting at ``buf[pos]``; return (rgbe, new_pos)."""
    head = buf[pos:pos + 4]
    if not (8 <= w < 0x8000 and len(head) == 4 and head[0] == 2 and head[1] == 2 and not head[2] & 0x80):
        flat = np.frombuffer(buf, dtype=np.uint8, count=4 * w, offset=pos).reshape(w, 4)
        return flat, pos + 4 * w
    if (head[2] << 8 | head[3]) != w:
        raise ValueError("RLE scanline width mismatch")
    pos += 4
    line = np.empty((w, 4), dtype=np.uint8)
    for c in range(4):
        i = 0
        while i < w:
            count = buf[pos]
            pos += 1
            if count > 128:
                count -= 128
                if i + count > w:
                    raise ValueError("RLE run overflows scanline")
                line[i:i + count, c] = buf[pos]
                pos += 1
            else:
                if count == 0 or i + count > w:
                    raise ValueError("bad RLE literal count")
                line[i:i + count, c] = np.frombuffer(buf, dtype=np.uint8, count=count, offset=pos)
                pos += count
            i += count
    return line, pos


def read_hdr(path):
    buf = Path(path).read_bytes()
    pos = 0
    first = True
    fmt_ok = True
    while True:
        end = buf.index(b"\n", pos)
        line = buf[pos:end].decode("ascii", errors="replace").strip()
        pos = end + 1
        if first:
            if not line.startswith("#?"):
                raise ValueError(f"{path}: not a Radiance HDR file")
            first = False
            continue
        if line == "":
            break
        if line.startswith("FORMAT="):
            fmt_ok = line == "FORMAT=32-bit_rle_rgbe"
    if not fmt_ok:
        raise ValueError(f"{path}: only 32-bit_rle_rgbe is supported")
    end = buf.index(b"\n", pos)
    res = buf[pos:end].decode("ascii").strip()
    pos = end + 1
    m = re.fullmatch(r"-Y\s+(\d+)\s+\+X\s+(\d+)", res)
    if not m:
        raise ValueError(f"{path}: unsupported resolution line {res!r}")
    h, w = int(m.group(1)), int(m.group(2))
    rgbe = np.empty((h, w, 4), dtype=np.uint8)
    for y in range(h):
        rgbe[y], pos = _read_scanline(buf, pos, w)
    return rgbe_to_float(rgbe)


# ---------------------------------------------------------------------------
# PNG


def _cv_order(img):
    return img[..., ::-1] if img.ndim == 3 else img


def encode_gamma(linear, bits=8):
    top = (1 << bits) - 1
    v = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0) ** (1.0 / GAMMA)
    return np.round(v * top).astype(np.uint16 if bits == 16 else np.uint8)


def write_png(path, linear_rgb, bits=8):
    """Gamma-encode a linear image in [0, 1] and write it as PNG."""
    if not cv2.imwrite(str(path), np.ascontiguousarray(_cv_order(encode_gamma(linear_rgb, bits)))):
        raise OSError(f"failed to write {path}")


def write_mask_png(path, mask):
    m = np.round(np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)
    if not cv2.imwrite(str(path), m):
        raise OSError(f"failed to write {path}")


def write_normal_png(path, normals):
    """16-bit PNG storing ``(n + 1) / 2`` per component."""
    n = np.asarray(normals, dtype=np.float64)
    enc = np.round(np.clip((n + 1.0) * 0.5, 0.0, 1.0) * 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), np.ascontiguousarray(_cv_order(enc))):
        raise OSError(f"failed to write {path}")


def read_png(path, linear=True):
    """Read a PNG as floats in [0, 1]; ``linear=True`` undoes the gamma encoding."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"cannot read {path}")
    if raw.ndim == 3 and raw.shape[2] == 4:
        raw = raw[..., :3]
    top = 65535.0 if raw.dtype == np.uint16 else 255.0
    img = _cv_order(raw).astype(np.float64) / top
    return img ** GAMMA if linear else img


def read_normal_png(path):
    return read_png(path, linear=False) * 2.0 - 1.0


def read_mask(path):
    """Read a mask from PNG (any bit depth) or PFM, as floats in [0, 1]."""
    if Path(path).suffix.lower() == ".pfm":
        m = read_pfm(path)
    else:
        m = read_png(path, linear=False)
    if m.ndim == 3:
        m = m[..., 0]
    return m


def read_image(path):
    """Read a linear image from ``.pfm``, ``.hdr`` or (gamma-decoded) ``.png``."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix in (".hdr", ".rgbe", ".pic"):
        return read_hdr(path)
    if suffix == ".png":
        return read_png(path)
    raise ValueError(f"unsupported image format {suffix!r}")


def write_image(path, image):
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(path, image)
    elif suffix in (".hdr", ".rgbe", ".pic"):
        write_hdr(path, image)
    elif suffix == ".png":
        write_png(path, image)
    else:
        raise ValueError(f"unsupported image format {suffix!r}")


def load_environment(path):
    from .envlight import EnvironmentMap

    return EnvironmentMap(read_image(path))


def save_environment(path, env):
    write_image(path, env.radiance)

