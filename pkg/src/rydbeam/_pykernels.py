"""Pure NumPy implementation of the Doppler-averaged coherence kernel.

This is the fallback used when the compiled ``_ckernels`` extension is not
available. Both implementations share the same signature and status codes
(see :mod:`rydbeam.kernels`).
"""
import numpy as np
from scipy.special import wofz

_IDX21 = 4  # row-major vec index of rho[1, 0]
_TRACE = (0, 5, 10, 15)
_SQRT_PI = np.sqrt(np.pi)

STATUS_OK = 0
STATUS_SINGULAR = 1
STATUS_EIG = 2
STATUS_REAL_POLE = 3
STATUS_NODE = 10  # + node index


def rate_scale(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l, gamma2):
    return (gamma2 + np.abs(omega_p) + np.abs(omega_c) + np.abs(omega_rf)
            + np.abs(delta_p) + np.abs(delta_c) + np.abs(delta_l))


def liouvillian_batch(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l, gammas):
    """Stack of 16x16 Liouvillians acting on row-major vec(rho)."""
    n = omega_p.shape[0]
    g2, g3, g4 = gammas
    H = np.zeros((n, 4, 4), dtype=complex)
    H[:, 0, 1] = H[:, 1, 0] = 0.5 * omega_p
    H[:, 1, 2] = H[:, 2, 1] = 0.5 * omega_c
    H[:, 2, 3] = 0.5 * omega_rf
    H[:, 3, 2] = 0.5 * np.conj(omega_rf)
    H[:, 1, 1] = -delta_p
    H[:, 2, 2] = -delta_p - delta_c
    H[:, 3, 3] = -delta_p - delta_c - delta_l
    eye = np.eye(4)
    L = -1j * (np.einsum("nik,jl->nijkl", H, eye)
               - np.einsum("ik,nlj->nijkl", eye, H)).reshape(n, 16, 16)
    gam = np.array([0.0, g2, g3, g4])
    L[:, np.arange(16), np.arange(16)] -= 0.5 * (gam[:, None] + gam[None, :]).ravel()
    L[:, 0, 5] += g2
    L[:, 0, 15] += g4
    L[:, 5, 10] += g3
    return L


def doppler_diagonal(kp, kc):
    """d(Liouvillian)/dv; diagonal in the vec basis."""
    shift = np.array([0.0, kp, kp - kc, kp - kc])
    return (-1j * (shift[:, None] - shift[None, :])).ravel()


def _gauss_mean_inverse(p, u):
    """E[1/(v - p)] for v ~ exp(-v^2/u^2)/(sqrt(pi) u)."""
    z = p / u
    upper = z.imag > 0
    zz = np.where(upper, z, np.conj(z))
    g = 1j * _SQRT_PI * wofz(zz)
    g = np.where(upper, g, np.conj(g))
    return g / u


def rho21_doppler(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l,
                  gammas, kp, kc, u, nodes, weights, pole_cut, chunk=64):
    """Doppler-averaged steady-state rho21 for a batch of drive settings.

    Sharp velocity poles (|Im p| < pole_cut) are integrated analytically
    against the Maxwell-Boltzmann weight; the smooth remainder is summed
    with the supplied quadrature (nodes, weights). ``pole_cut <= 0`` gives
    the plain quadrature sum.

    Returns
    -------
    rho21 : complex ndarray
    status : int ndarray
    """
    args = [np.asarray(a) for a in (omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l)]
    n = args[0].shape[0]
    out = np.zeros(n, dtype=complex)
    status = np.zeros(n, dtype=np.int64)
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        part = [a[sl] for a in args]
        try:
            out[sl], status[sl] = _batch(*part, gammas, kp, kc, u, nodes, weights, pole_cut)
        except np.linalg.LinAlgError:
            for i in range(start, min(start + chunk, n)):
                one = [a[i:i + 1] for a in args]
                try:
                    out[i], status[i] = (v[0] for v in _batch(*one, gammas, kp, kc, u,
                                                               nodes, weights, pole_cut))
                except np.linalg.LinAlgError:
                    out[i], status[i] = np.nan, _locate_singular_node(
                        *one, gammas, kp, kc, nodes)
    return out, status


def _locate_singular_node(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l,
                          gammas, kp, kc, nodes):
    s = rate_scale(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l, gammas[0])
    A0 = liouvillian_batch(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l,
                           gammas)[0] / s[0]
    A0[0, :] = 0.0
    A0[0, _TRACE] = 1.0
    D = doppler_diagonal(kp, kc) / s[0]
    D[0] = 0.0
    for j, v in enumerate(nodes):
        if np.linalg.cond(A0 + np.diag(v * D)) > 1e13:
            return STATUS_NODE + j
    return STATUS_EIG


def _batch(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l,
           gammas, kp, kc, u, nodes, weights, pole_cut):
    omega_p = np.asarray(omega_p, dtype=float)
    n = omega_p.shape[0]
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    out = np.zeros(n, dtype=complex)
    status = np.zeros(n, dtype=np.int64)
    if n == 0:
        return out, status

    s = rate_scale(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l, gammas[0])
    A0 = liouvillian_batch(omega_p, np.asarray(omega_c, float), np.asarray(omega_rf, complex),
                           np.asarray(delta_p, float), np.asarray(delta_c, float),
                           np.asarray(delta_l, float), gammas) / s[:, None, None]
    A0[:, 0, :] = 0.0
    A0[:, 0, _TRACE] = 1.0
    D = doppler_diagonal(kp, kc)[None, :] / s[:, None]
    D[:, 0] = 0.0

    bad = np.linalg.cond(A0) > 1e13
    status[bad] = STATUS_SINGULAR
    good = ~bad
    if not np.any(good):
        return out, status
    A0g, Dg = A0[good], D[good]
    m = A0g.shape[0]
    b = np.zeros((m, 16, 1), dtype=complex)
    b[:, 0, 0] = 1.0

    # plain quadrature values at the velocity nodes
    A = A0g[:, None, :, :] + (nodes[None, :, None] * Dg[:, None, :])[..., None] * np.eye(16)
    x = np.linalg.solve(A, np.broadcast_to(b[:, None], (m, nodes.size, 16, 1)))[..., _IDX21, 0]
    total = x @ weights
    node_status = np.zeros(m, dtype=np.int64)
    finite = np.all(np.isfinite(x), axis=1)
    node_status[~finite] = STATUS_NODE

    if pole_cut > 0:
        y0 = np.linalg.solve(A0g, b)[..., 0]
        M = np.linalg.solve(A0g, Dg[:, None, :] * np.eye(16))
        try:
            mu, V = np.linalg.eig(M)
            c = np.linalg.solve(V, y0[..., None])[..., 0] * V[:, _IDX21, :]
        except np.linalg.LinAlgError:
            mu = np.zeros((m, 16), dtype=complex)
            c = mu
            node_status[:] = STATUS_EIG
        with np.errstate(divide="ignore", invalid="ignore"):
            p = -1.0 / mu
            r = c / mu
        vmax = np.max(np.abs(nodes))
        sharp = ((mu != 0) & np.isfinite(p) & (np.abs(p.imag) < pole_cut)
                 & (np.abs(p.real) < 1.5 * vmax + pole_cut))
        real_pole = sharp & (np.abs(p.imag) == 0)
        node_status[np.any(real_pole, axis=1)] = STATUS_REAL_POLE
        sharp &= ~real_pole
        p_s = np.where(sharp, p, 1j * u)
        r_s = np.where(sharp, r, 0.0)
        analytic = np.sum(r_s * _gauss_mean_inverse(p_s, u), axis=1)
        poles_at_nodes = np.sum(r_s[:, None, :] / (nodes[None, :, None] - p_s[:, None, :]), axis=2)
        total = total - poles_at_nodes @ weights + analytic

    out[good] = total
    status[good] = node_status
    return out, status


def chebval_panels(x, idx, coef):
    """Piecewise Chebyshev series by vectorized Clenshaw recurrence."""
    x = np.asarray(x, float)
    t2 = 2.0 * x
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for k in range(coef.shape[1] - 1, 0, -1):
        b1, b2 = coef[idx, k] + t2 * b1 - b2, b1
    return coef[idx, 0] + 0.5 * t2 * b1 - b2
