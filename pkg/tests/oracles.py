"""Independent numerical oracles shared by the test suite.

Two layers of independence from the library under test:

* float64 reference forwards (plain numpy, no tape, no shared code) define
  what each primitive is supposed to compute;
* central finite differences over those references define the gradients
  the autodiff engine must reproduce.

Differencing the float64 references rather than the float32 ops keeps the
oracle's own noise (~1e-9) far below the 1e-3 tolerance being enforced;
differencing the float32 ops directly would drown the comparison in
single-precision rounding noise at the mandated 1e-3 step.
"""

import numpy as np


# ---------------------------------------------------------------------------
# float64 reference forwards

def ref_matmul(a, b):
    return a.astype(np.float64) @ b.astype(np.float64)


def ref_linear(x, w, b=None):
    out = x.astype(np.float64) @ w.astype(np.float64)
    return out if b is None else out + b.astype(np.float64)[None, :]


def ref_conv2d(x, w, b=None, stride=1, padding=0):
    x = x.astype(np.float64)
    w = w.astype(np.float64)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, :, ky : ky + oh * stride : stride, kx : kx + ow * stride : stride]
            out += np.einsum("nchw,oc->nohw", patch, w[:, :, ky, kx])
    if b is not None:
        out += b.astype(np.float64)[None, :, None, None]
    return out


def ref_groupnorm(x, gain, bias, groups, eps=1e-5):
    x = x.astype(np.float64)
    n, c, h, w = x.shape
    xg = x.reshape(n, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    xhat = ((xg - mu) / np.sqrt(var + eps)).reshape(n, c, h, w)
    return xhat * gain.astype(np.float64)[None, :, None, None] + bias.astype(np.float64)[None, :, None, None]


def _ref_softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def ref_attention(q, k, v):
    q, k, v = (a.astype(np.float64) for a in (q, k, v))
    p = _ref_softmax(np.einsum("bnd,bmd->bnm", q, k) / np.sqrt(q.shape[-1]))
    return np.einsum("bnm,bmc->bnc", p, v)


def ref_softmax_attention(q, k, v, mask=None):
    q, k, v = (a.astype(np.float64) for a in (q, k, v))
    logits = q @ k.T / np.sqrt(q.shape[-1])
    if mask is not None:
        logits = np.where(np.asarray(mask, bool)[None, :], -np.inf, logits)
    return _ref_softmax(logits) @ v


def ref_silu(x):
    x = x.astype(np.float64)
    return x / (1.0 + np.exp(-x))


def fd_gradient(f, arrays, idx, step=1e-3, dtype=np.float64):
    """Central-difference gradient of scalar f(*arrays) w.r.t. arrays[idx]."""
    base = [np.array(a, dtype=dtype, copy=True) for a in arrays]
    target = base[idx]
    grad = np.zeros_like(target, dtype=np.float64)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(*base))
        flat[i] = orig - step
        fm = float(f(*base))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def grad_close(analytic, numeric, rtol=1e-3, atol=1e-5):
    """Per-element |a-n| <= atol + rtol*max(|a|,|n|); returns bool array."""
    a = np.asarray(analytic, np.float64)
    n = np.asarray(numeric, np.float64)
    return np.abs(a - n) <= atol + rtol * np.maximum(np.abs(a), np.abs(n))


def assert_grads_match(analytic, numeric, rtol=1e-3, atol=1e-5, what=""):
    ok = grad_close(analytic, numeric, rtol, atol)
    if not ok.all():
        bad = np.argwhere(~ok)[:5]
        a = np.asarray(analytic, np.float64)
        n = np.asarray(numeric, np.float64)
        msg = ", ".join(
            f"{tuple(i)}: analytic={a[tuple(i)]:.6g} fd={n[tuple(i)]:.6g}" for i in bad
        )
        raise AssertionError(f"gradient mismatch {what}: {msg} ({(~ok).sum()}/{ok.size} bad)")
