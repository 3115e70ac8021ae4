"""Reference kernels in numpy / plain Python.

Same signatures and results as the compiled versions in ``_ckernels.pyx``.
Column matrices use the layout (C*k*k, B*H*W): row ``(c*k + di)*k + dj``,
column ``(b*H + i)*W + j``.
"""
import numpy as np


def im2col(x, k):
    """Unfold ``x`` of shape (B, C, H, W) into (C*k*k, B*H*W) columns.

    Zero padding of (k - 1) // 2 keeps the spatial size.
    """
    b, c, h, w = x.shape
    p = (k - 1) // 2
    xp = np.zeros((c, b, h + 2 * p, w + 2 * p))
    xp[:, :, p:p + h, p:p + w] = x.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, b, h, w))
    for di in range(k):
        for dj in range(k):
            cols[:, di, dj] = xp[:, :, di:di + h, dj:dj + w]
    return cols.reshape(c * k * k, b * h * w)


def col2im(cols, b, c, h, w, k):
    """Adjoint of :func:`im2col`: scatter-add columns back to (B, C, H, W)."""
    p = (k - 1) // 2
    cols = cols.reshape(c, k, k, b, h, w)
    xp = np.zeros((c, b, h + 2 * p, w + 2 * p))
    for di in range(k):
        for dj in range(k):
            xp[:, :, di:di + h, dj:dj + w] += cols[:, di, dj]
    return np.ascontiguousarray(xp[:, :, p:p + h, p:p + w].transpose(1, 0, 2, 3))


def gilbert_chain(u, p_enter, p_exit, start_lost):
    """Run the two-state loss chain over uniforms ``u``.

    Returns a uint8 array, 1 = kept, 0 = lost. Step ``i`` is emitted in the
    current state, then the state transitions using ``u[i]``.
    """
    n = len(u)
    out = bytearray(n)
    lost = bool(start_lost)
    for i, ui in enumerate(u.tolist()):
        out[i] = 0 if lost else 1
        if lost:
            if ui < p_exit:
                lost = False
        elif ui < p_enter:
            lost = True
    return np.frombuffer(bytes(out), dtype=np.uint8).copy()
