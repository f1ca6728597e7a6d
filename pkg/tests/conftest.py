import numpy as np


def numeric_grad(fn, x, h=1e-6):
    """Central-difference gradient of scalar fn() w.r.t. array x (in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        f_plus = fn()
        x[i] = orig - h
        f_minus = fn()
        x[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_rel_err(analytic, numeric):
    """Elementwise |a - n| / max(1, |a|, |n|), reduced to the max."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_grad(fn, x, analytic, tol=1e-5, h=1e-6):
    err = max_rel_err(analytic, numeric_grad(fn, x, h))
    assert err <= tol, f"gradient mismatch: max rel err {err:.3e} > {tol:.0e}"
