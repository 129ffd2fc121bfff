import numpy as np
from hypothesis import HealthCheck, settings

from slidegt.tensor import backward

settings.register_profile(
    "fast",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("fast")


def fd_wrt(scalar_fn, param, h=1e-5):
    """Central finite difference of scalar_fn() w.r.t. every element of param."""
    flat = param.data.reshape(-1)
    out = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = scalar_fn()
        flat[i] = orig - h
        down = scalar_fn()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return out.reshape(param.data.shape)


def assert_grads_match_fd(build_loss, params, tol=1e-4, h=1e-5):
    """Backward gradients of build_loss() must match finite differences."""
    for p in params:
        p.grad[...] = 0.0
    backward(build_loss())
    for p in params:
        fd = fd_wrt(lambda: build_loss().item(), p, h)
        denom = np.maximum(np.maximum(np.abs(p.grad), np.abs(fd)), 1e-6)
        rel = np.abs(p.grad - fd) / denom
        assert rel.max() < tol, f"gradient mismatch: max rel err {rel.max():.2e}"
