"""Pure-numpy fallback for the evaluation kernels.

Same contracts as the compiled module `isocycle._kernels`; see
`isocycle.kernels` for the dispatch. Both operate on half-spectra
c_k = rfft(values)/n, k = 0..n/2, of real 1-periodic grid functions, with
the Nyquist coefficient interpreted as a pure cosine (see isocycle.fourier).
"""

import numpy as np


def trig_eval(half, pts):
    """Evaluate F trigonometric interpolants at M common points.

    Parameters
    ----------
    half : complex (F, K+1) array
        Half-spectra of F functions sharing one grid size n = 2K.
    pts : float (M,) array
        Evaluation points (any reals; the interpolants are 1-periodic).

    Returns
    -------
    float (F, M) array
    """
    half = np.ascontiguousarray(half, dtype=np.complex128)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    K = half.shape[1] - 1
    z = np.exp(2j * np.pi * pts)
    acc = np.zeros((half.shape[0], pts.size), dtype=np.complex128)
    acc += 0.5 * half[:, K].real[:, None]
    for k in range(K - 1, 0, -1):
        acc *= z
        acc += half[:, k][:, None]
    return half[:, 0].real[:, None] + 2.0 * (acc * z).real


def mixed_eval(vhat, s_nodes, bary_w, theta_pts, s_pts):
    """Evaluate C Fourier-x-Chebyshev interpolants at M scattered points.

    Parameters
    ----------
    vhat : complex (C, K+1, L) array
        Per Chebyshev column l, the half-spectrum of theta -> V_c(theta, s_l).
    s_nodes : float (L,) array
        Chebyshev-Lobatto abscissae (strictly monotone).
    bary_w : float (L,) array
        Barycentric weights for `s_nodes`.
    theta_pts, s_pts : float (M,) arrays
        Scattered evaluation points; s_pts must lie within the node span.

    Returns
    -------
    float (C, M) array
    """
    vhat = np.ascontiguousarray(vhat, dtype=np.complex128)
    s_nodes = np.asarray(s_nodes, dtype=np.float64)
    bary_w = np.asarray(bary_w, dtype=np.float64)
    theta_pts = np.ascontiguousarray(theta_pts, dtype=np.float64)
    s_pts = np.ascontiguousarray(s_pts, dtype=np.float64)

    span = np.max(np.abs(s_nodes))
    d = s_pts[None, :] - s_nodes[:, None]
    exact = np.abs(d) < 1e-14 * max(span, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        bw = bary_w[:, None] / d
    hit_cols = np.where(exact.any(axis=0))[0]
    for m in hit_cols:
        bw[:, m] = 0.0
        bw[np.argmax(exact[:, m]), m] = 1.0

    den = bw.sum(axis=0)
    coef = np.tensordot(vhat, bw, axes=([2], [0]))  # (C, K+1, M)
    K = coef.shape[1] - 1
    z = np.exp(2j * np.pi * theta_pts)
    acc = np.zeros((coef.shape[0], coef.shape[2]), dtype=np.complex128)
    acc += 0.5 * coef[:, K, :].real
    for k in range(K - 1, 0, -1):
        acc *= z
        acc += coef[:, k, :]
    vals = coef[:, 0, :].real + 2.0 * (acc * z).real
    return vals / den[None, :]
