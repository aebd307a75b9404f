"""NumPy implementation of support enumeration, used when the extension is absent.

Supports are evaluated in batches: the ``s x s`` Gram blocks of a chunk of
supports are gathered into one ``(k, s, s)`` array and handed to
``numpy.linalg.eigvalsh``.
"""

import itertools

import numpy as np

CHUNK = 8192


def support_extremes(gram, supports):
    """Clipped (lowest, highest) eigenvalues of the Gram blocks on ``supports``."""
    supports = np.asarray(supports, dtype=np.intp)
    if supports.shape[1] == 1:
        diag = np.real(np.diagonal(gram))[supports[:, 0]]
        lo = hi = diag
    else:
        blocks = gram[supports[:, :, None], supports[:, None, :]]
        ev = np.linalg.eigvalsh(blocks)
        lo, hi = ev[:, 0], ev[:, -1]
    return np.maximum(lo, 0.0), np.maximum(hi, 0.0)


def scan(gram, support_chunks):
    """Max-reduce over an iterable of ``(k, s)`` support arrays in order."""
    best = -1.0
    worst = None
    gmin, gmax = np.inf, -np.inf
    count = 0
    for chunk in support_chunks:
        lo, hi = support_extremes(gram, chunk)
        d = np.maximum(hi - 1.0, 1.0 - lo)
        k = int(np.argmax(d))
        if d[k] > best:
            best = float(d[k])
            worst = np.array(chunk[k], dtype=np.int64)
        gmin = min(gmin, float(lo.min()))
        gmax = max(gmax, float(hi.max()))
        count += len(chunk)
    return best, worst, gmin, gmax, count


def _lexicographic_chunks(n, s):
    combos = itertools.combinations(range(n), s)
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, CHUNK)), dtype=np.intp)
        if flat.size == 0:
            return
        yield flat.reshape(-1, s)


def enumerate_supports(gram, s):
    n = gram.shape[0]
    if s < 1 or s > n:
        raise ValueError("need 1 <= s <= n")
    return scan(gram, _lexicographic_chunks(n, s))
