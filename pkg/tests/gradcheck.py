"""Central finite-difference gradient checking."""

import numpy as np

STEP = 1e-5


def numeric_grad(f, arrays, index, step=STEP):
    """d f(*arrays) / d arrays[index] by central differences; f returns a scalar."""
    a = arrays[index]
    g = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = a[i]
        a[i] = old + step
        fp = f(*arrays)
        a[i] = old - step
        fm = f(*arrays)
        a[i] = old
        g[i] = (fp - fm) / (2 * step)
    return g


def rel_error(analytic, numeric):
    num = np.linalg.norm(analytic - numeric)
    den = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return 0.0 if den == 0 else num / den
