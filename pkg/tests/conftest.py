import numpy as np

from qsumm.tensor import Tape, Tensor


def numeric_grad(f, params, eps=1e-5):
    """Central-difference gradients of a scalar closure f() per parameter.

    params is a dict name -> Tensor; f reads the tensors' current data.
    Returns a dict name -> ndarray of the same shape.
    """
    out = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f())
            flat[i] = orig - eps
            lo = float(f())
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * eps)
        out[name] = g.reshape(p.data.shape)
    return out


def tape_grad(f, params):
    """Autodiff gradients of a scalar closure f() per parameter."""
    with Tape(watch=params.values()) as tape:
        loss = f()
    tape.backward(loss)
    return {name: p.grad.copy() for name, p in params.items()}


def max_rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_grads(f, params, eps=1e-5, tol=1e-6):
    """Assert autodiff and finite differences agree for every parameter."""
    auto = tape_grad(f, params)
    num = numeric_grad(f, params, eps=eps)
    for name in params:
        err = max_rel_err(auto[name], num[name])
        assert err < tol, f"{name}: max relative error {err:.3g} >= {tol}"
