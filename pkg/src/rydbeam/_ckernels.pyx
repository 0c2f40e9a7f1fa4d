# cython: language_level=3
"""Compiled Doppler-averaged coherence kernel.

Mirrors :func:`rydbeam._pykernels.rho21_doppler` item by item; the loop
over drive settings runs without the GIL so callers may split a batch
across threads.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, M_PI, NAN
from libc.string cimport memcpy, memset
from scipy.linalg.cython_lapack cimport zgetrf, zgetrs, zgeev, zgesv
from scipy.special.cython_special cimport wofz

cnp.import_array()

cdef enum:
    N = 16
    NN = 256
    IDX21 = 4

cdef inline double cabs_(double complex z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef inline double complex conj_(double complex z) noexcept nogil:
    return z.real - 1j * z.imag


cdef void build_liouvillian(double complex *A, double wp, double wc, double complex wrf,
                            double dp, double dc, double dl, double g2, double g3,
                            double g4, double s) noexcept nogil:
    """Column-major, rate-scaled Liouvillian with the trace row in place."""
    cdef double complex H[16]
    cdef double gam[4]
    cdef int i, j, k, l, row, col
    memset(H, 0, 16 * sizeof(double complex))
    memset(A, 0, NN * sizeof(double complex))
    # H[i][k] stored at H[4*i + k]
    H[1] = 0.5 * wp
    H[4] = 0.5 * wp
    H[6] = 0.5 * wc
    H[9] = 0.5 * wc
    H[11] = 0.5 * wrf
    H[14] = 0.5 * conj_(wrf)
    H[5] = -dp
    H[10] = -dp - dc
    H[15] = -dp - dc - dl
    gam[0] = 0.0
    gam[1] = g2
    gam[2] = g3
    gam[3] = g4
    for i in range(4):
        for j in range(4):
            row = 4 * i + j
            for k in range(4):
                # -i * H[i,k] delta_{jl}
                col = 4 * k + j
                A[row + N * col] = A[row + N * col] - 1j * H[4 * i + k]
                # +i * delta_{ik} H[l,j]
                col = 4 * i + k
                A[row + N * col] = A[row + N * col] + 1j * H[4 * k + j]
            A[row + N * row] = A[row + N * row] - 0.5 * (gam[i] + gam[j])
    A[0 + N * 5] = A[0 + N * 5] + g2
    A[0 + N * 15] = A[0 + N * 15] + g4
    A[5 + N * 10] = A[5 + N * 10] + g3
    for col in range(NN):
        A[col] = A[col] / s
    for col in range(N):
        A[0 + N * col] = 0.0
    A[0 + N * 0] = 1.0
    A[0 + N * 5] = 1.0
    A[0 + N * 10] = 1.0
    A[0 + N * 15] = 1.0


cdef double complex gauss_mean_inverse(double complex p, double u) noexcept nogil:
    cdef double complex z = p / u
    cdef double complex g
    if z.imag > 0:
        g = 1j * sqrt(M_PI) * wofz(z)
    else:
        g = conj_(1j * sqrt(M_PI) * wofz(conj_(z)))
    return g / u


cdef int solve_one(double wp, double wc, double complex wrf, double dp, double dc,
                   double dl, double g2, double g3, double g4, double kp, double kc,
                   double u, const double *nodes, const double *weights, int nq,
                   double pole_cut, double complex *result) noexcept nogil:
    cdef double complex A0[NN]
    cdef double complex LU[NN]
    cdef double complex A[NN]
    cdef double complex M[NN]
    cdef double complex V[NN]
    cdef double complex Vl[1]
    cdef double complex mu[N]
    cdef double complex x[N]
    cdef double complex y0[N]
    cdef double complex work[4 * N]
    cdef double rwork[2 * N]
    cdef double complex D[N]
    cdef double complex total, analytic, p, r, corr
    cdef double shift[4]
    cdef double s, umax, umin, a, vmax
    cdef int ipiv[N]
    cdef int ipiv2[N]
    cdef int n = N, one = 1, info = 0, lwork = 4 * N, ldvl = 1
    cdef int i, j, k
    cdef char trans = b'N'
    cdef char jobvl = b'N'
    cdef char jobvr = b'V'
    cdef bint sharp[N]
    cdef double complex poles[N]
    cdef double complex resid[N]

    s = g2 + fabs(wp) + fabs(wc) + cabs_(wrf) + fabs(dp) + fabs(dc) + fabs(dl)
    build_liouvillian(A0, wp, wc, wrf, dp, dc, dl, g2, g3, g4, s)
    shift[0] = 0.0
    shift[1] = kp
    shift[2] = kp - kc
    shift[3] = kp - kc
    for i in range(4):
        for j in range(4):
            D[4 * i + j] = -1j * (shift[i] - shift[j]) / s
    D[0] = 0.0

    memcpy(LU, A0, NN * sizeof(double complex))
    zgetrf(&n, &n, LU, &n, ipiv, &info)
    if info != 0:
        return 1
    umax = 0.0
    umin = 1e300
    for i in range(N):
        a = cabs_(LU[i + N * i])
        if a > umax:
            umax = a
        if a < umin:
            umin = a
    if umin < 1e-13 * umax:
        return 1

    total = 0.0
    for k in range(nq):
        memcpy(A, A0, NN * sizeof(double complex))
        for i in range(N):
            A[i + N * i] = A[i + N * i] + nodes[k] * D[i]
        memset(x, 0, N * sizeof(double complex))
        x[0] = 1.0
        zgesv(&n, &one, A, &n, ipiv2, x, &n, &info)
        if info != 0:
            return 10 + k
        total = total + weights[k] * x[IDX21]

    if pole_cut > 0:
        memset(y0, 0, N * sizeof(double complex))
        y0[0] = 1.0
        zgetrs(&trans, &n, &one, LU, &n, ipiv, y0, &n, &info)
        memset(M, 0, NN * sizeof(double complex))
        for i in range(N):
            M[i + N * i] = D[i]
        zgetrs(&trans, &n, &n, LU, &n, ipiv, M, &n, &info)
        zgeev(&jobvl, &jobvr, &n, M, &n, mu, Vl, &ldvl, V, &n, work, &lwork, rwork, &info)
        if info != 0:
            return 2
        # residue weights c_k = V[IDX21, k] * (V^-1 y0)_k
        memcpy(A, V, NN * sizeof(double complex))
        zgesv(&n, &one, A, &n, ipiv2, y0, &n, &info)
        if info != 0:
            return 2
        vmax = 0.0
        for k in range(nq):
            if fabs(nodes[k]) > vmax:
                vmax = fabs(nodes[k])
        analytic = 0.0
        for k in range(N):
            sharp[k] = False
            if mu[k] == 0:
                continue
            p = -1.0 / mu[k]
            if fabs(p.imag) < pole_cut and fabs(p.real) < 1.5 * vmax + pole_cut:
                if p.imag == 0:
                    return 3
                r = V[IDX21 + N * k] * y0[k] / mu[k]
                sharp[k] = True
                poles[k] = p
                resid[k] = r
                analytic = analytic + r * gauss_mean_inverse(p, u)
        for j in range(nq):
            corr = 0.0
            for k in range(N):
                if sharp[k]:
                    corr = corr + resid[k] / (nodes[j] - poles[k])
            total = total - weights[j] * corr
        total = total + analytic

    result[0] = total
    return 0


def rho21_doppler(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l,
                  gammas, double kp, double kc, double u, nodes, weights,
                  double pole_cut, chunk=None):
    """Compiled counterpart of :func:`rydbeam._pykernels.rho21_doppler`."""
    cdef double[::1] wp = np.ascontiguousarray(omega_p, dtype=np.float64)
    cdef double[::1] wc = np.ascontiguousarray(omega_c, dtype=np.float64)
    cdef double complex[::1] wrf = np.ascontiguousarray(omega_rf, dtype=np.complex128)
    cdef double[::1] dp = np.ascontiguousarray(delta_p, dtype=np.float64)
    cdef double[::1] dc = np.ascontiguousarray(delta_c, dtype=np.float64)
    cdef double[::1] dl = np.ascontiguousarray(delta_l, dtype=np.float64)
    cdef double[::1] vn = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef double[::1] wn = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = wp.shape[0]
    cdef int nq = vn.shape[0]
    out_arr = np.zeros(n, dtype=np.complex128)
    status_arr = np.zeros(n, dtype=np.int64)
    cdef double complex[::1] out = out_arr
    cdef long long[::1] status = status_arr
    cdef double g2 = gammas[0], g3 = gammas[1], g4 = gammas[2]
    cdef Py_ssize_t i
    cdef double complex res
    cdef int code
    with nogil:
        for i in range(n):
            res = 0.0
            code = solve_one(wp[i], wc[i], wrf[i], dp[i], dc[i], dl[i], g2, g3, g4,
                             kp, kc, u, &vn[0], &wn[0], nq, pole_cut, &res)
            status[i] = code
            if code == 0:
                out[i] = res
            else:
                out[i] = NAN
    return out_arr, status_arr


def chebval_panels(x, idx, coef):
    """Clenshaw evaluation of piecewise Chebyshev series.

    Point ``x[i]`` (already mapped to [-1, 1] on its panel) uses the row
    ``coef[idx[i]]``.
    """
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef long long[::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = c.shape[1], i, k, row
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double b0, b1, b2, t2
    with nogil:
        for i in range(n):
            row = iv[i]
            t2 = 2.0 * xv[i]
            b1 = 0.0
            b2 = 0.0
            for k in range(m - 1, 0, -1):
                b0 = c[row, k] + t2 * b1 - b2
                b2 = b1
                b1 = b0
            out[i] = c[row, 0] + 0.5 * t2 * b1 - b2
    return out_arr
