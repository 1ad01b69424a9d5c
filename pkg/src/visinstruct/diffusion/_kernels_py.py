"""Pure-numpy kernels. Always available; the compiled module mirrors this API."""
import numpy as np

NAME = "python"


def axpby(a, x, b, y):
    """Return ``a * x + b * y`` elementwise as a fresh float64 array."""
    return a * np.asarray(x, dtype=np.float64) + b * np.asarray(y, dtype=np.float64)


def attention(p, kv, wq, wk, wv):
    """Single-head scaled dot-product attention.

    Queries come from ``p`` (N x C); keys and values from ``kv`` (K x C), which
    callers build as ``p`` optionally stacked with memory tokens. Returns the
    N x C output and the N x K row-stochastic weight matrix.
    """
    q = p @ wq
    k = kv @ wk
    v = kv @ wv
    logits = (q @ k.T) / np.sqrt(p.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return w @ v, w


def branch_eps(x, in_bias, out_bias, w_in, wq, wk, wv, w_out, memory, sqrt_alpha, coef):
    """One guidance branch of the toy noise predictor.

    ``h = x @ w_in + in_bias`` are the attention-input tokens; memory rows (if
    any) extend the keys/values. The predicted clean mean is
    ``mu = tanh(attn @ w_out + out_bias)`` and the noise is
    ``coef * (x - sqrt_alpha * mu)``. Returns ``(eps, h)``.
    """
    h = x @ w_in + in_bias
    kv = h if memory is None or len(memory) == 0 else np.vstack([h, memory])
    a, _ = attention(h, kv, wq, wk, wv)
    mu = np.tanh(a @ w_out + out_bias)
    return coef * (x - sqrt_alpha * mu), h
