"""Central finite differences, the reference for every analytic gradient."""
import numpy as np

REL_FLOOR = 1e-6


def finite_diff_grad(loss_fn, params, h=1e-5, coords=None):
    """Estimate ``d loss / d params`` by central differences.

    Parameters
    ----------
    loss_fn : callable
        Deterministic scalar function.  It is called with ``params`` after
        an in-place perturbation, so it must read the arrays it is given.
    params : ndarray or dict of ndarray
        Perturbed in place and restored exactly.
    h : float
        Step size.
    coords : dict of name -> flat indices, optional
        Restrict the estimate to these entries (others are NaN).  For an
        array ``params`` use the key ``None``.

    Returns
    -------
    Same structure as ``params``.
    """
    single = isinstance(params, np.ndarray)
    tree = {None: params} if single else params
    out = {}
    for name, p in tree.items():
        g = np.full(p.shape, np.nan) if coords is not None else np.empty(p.shape)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        idx = range(flat.size) if coords is None else coords.get(name, ())
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            lp = loss_fn(params)
            flat[k] = orig - h
            lm = loss_fn(params)
            flat[k] = orig
            gflat[k] = (lp - lm) / (2.0 * h)
        out[name] = g
    return out[None] if single else out


def max_rel_error(analytic, numeric, floor=REL_FLOOR):
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over entries where ``numeric`` is finite."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    ok = np.isfinite(n)
    if not ok.any():
        return 0.0
    a, n = a[ok], n[ok]
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))
