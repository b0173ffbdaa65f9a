import numpy as np

from priormask import nsm
from priormask.matching import patch_corr
from priormask.tensor import BinaryMask, FeatureMap, l2_normalize_channels


def random_map(rng, h, w, d, normalize=True):
    fm = FeatureMap(rng.standard_normal((h, w, d)).astype(np.float32))
    return l2_normalize_channels(fm) if normalize else fm


def random_mask(rng, h, w, p=0.5):
    mask = (rng.random((h, w)) < p).astype(np.float32)
    if not mask.any():
        mask[rng.integers(h), rng.integers(w)] = 1.0
    return BinaryMask(mask)


def corrupt_headers(rng, n):
    """Yield ``(kind, blob)`` pairs of tensor/weight files with damaged headers."""
    import struct

    from priormask import io

    tensor = io.encode_tensor(rng.standard_normal((3, 4, 2)).astype(np.float32))
    weights = io.encode_weights({"a": np.ones(3, np.float32), "bb": np.zeros((2, 2), np.float32)})
    def pick(options):
        return options[int(rng.integers(len(options)))]

    kinds = ["magic", "version", "ndim", "dims", "truncate", "garbage", "wcount", "wname", "wtrail"]
    for i in range(n):
        kind = kinds[i % len(kinds)]
        blob = bytearray(tensor)
        if kind == "magic":
            blob[rng.integers(4)] ^= int(rng.integers(1, 256))
        elif kind == "version":
            v = int(rng.integers(2, 2**32)) if rng.random() < 0.5 else 0
            blob[4:8] = struct.pack("<I", v)
        elif kind == "ndim":
            nd = pick([0, 1, 2, 4, 5, 17, 2**31, 2**32 - 1])
            blob[8:12] = struct.pack("<I", nd)
        elif kind == "dims":
            k = int(rng.integers(3))
            old = struct.unpack_from("<Q", blob, 12 + 8 * k)[0]
            new = old
            while new == old:
                new = pick([0, int(rng.integers(1, 1000)), 2**40, 2**63, 2**64 - 1])
            struct.pack_into("<Q", blob, 12 + 8 * k, new)
        elif kind == "truncate":
            blob = blob[: int(rng.integers(0, len(blob)))]
        elif kind == "garbage":
            blob[: int(rng.integers(1, 37))] = rng.integers(0, 256, int(rng.integers(1, 37)), dtype=np.uint8).tobytes()
            if bytes(blob) == tensor:
                blob = blob[:-1]
        elif kind == "wcount":
            blob = bytearray(weights)
            blob[8:12] = struct.pack("<I", pick([0, 1, 3, 1000, 2**32 - 1]))
        elif kind == "wname":
            blob = bytearray(weights)
            blob[12:14] = struct.pack("<H", pick([0, 2, 500, 65535]))
        elif kind == "wtrail":
            blob = bytearray(weights) + bytes(int(rng.integers(1, 9)))
        yield kind, bytes(blob)


def small_instance(seed=0, hidden=4):
    """q=16 query positions, s=9 support positions, realizable target."""
    rng = np.random.default_rng(seed)
    corr = patch_corr(random_map(rng, 4, 4, 8), random_map(rng, 3, 3, 8), 3).slice(0)
    teacher = nsm.init_weights(9, hidden, 1000 + seed)
    target = nsm._forward64(corr.astype(np.float64), teacher.as_float64())[-1]
    return np.ascontiguousarray(corr), target
