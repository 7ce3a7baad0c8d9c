# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused simulate-and-backprop training epoch.

One call runs the full forward simulation (M lanes, T periods) storing the
per-period activations, then walks the recurrence backwards accumulating
parameter gradients. Semantics mirror the numpy tape: identical subgradient
conventions (strict positivity masks for [x]+ and the integer decoupling,
CELU derivative reconstructed from the stored activation), identical loss
weighting; only BLAS summation order differs.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport expm1, floor, pow
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _mm_nt(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                 double beta) noexcept nogil:
    """C (m,n) = A (m,k) @ B.T + beta*C with B stored (n,k); row-major."""
    cdef int m = A.shape[0], k = A.shape[1], n = B.shape[0]
    cdef double alpha = 1.0
    dgemm(b"T", b"N", &n, &m, &k, &alpha, &B[0, 0], &k, &A[0, 0], &k, &beta, &C[0, 0], &n)


cdef void _mm_nn(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                 double beta) noexcept nogil:
    """C (m,n) = A (m,k) @ B + beta*C with B stored (k,n); row-major."""
    cdef int m = A.shape[0], k = A.shape[1], n = B.shape[1]
    cdef double alpha = 1.0
    dgemm(b"N", b"N", &n, &m, &k, &alpha, &B[0, 0], &n, &A[0, 0], &k, &beta, &C[0, 0], &n)


cdef void _mm_tn(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                 double beta) noexcept nogil:
    """C (m,n) = A.T @ B + beta*C with A stored (k,m), B stored (k,n); row-major."""
    cdef int m = A.shape[1], k = A.shape[0], n = B.shape[1]
    cdef double alpha = 1.0
    dgemm(b"N", b"T", &n, &m, &k, &alpha, &B[0, 0], &n, &A[0, 0], &m, &beta, &C[0, 0], &n)


def epoch(list Ws, list es, int[::1] acts, double init_inventory, double alpha,
          double input_scale, double out_scale, double[:, ::1] demands,
          double[::1] mu, double[::1] sigma, int reduced, int single,
          double h, double b, double c_r, double c_e, double f_r, double f_e,
          int l_r, int l_e, double gamma):
    cdef int M = demands.shape[0]
    cdef int T = demands.shape[1]
    cdef int K = len(Ws)
    cdef int n_in = (<object> Ws[0]).shape[1]
    cdef int n_out = (<object> Ws[K - 1]).shape[0]
    cdef int t, k, m, j, width, prev_width
    cdef double w_t, acc, v, q, y0, y1, qr, qe, arrive, cost

    # pipelines; single mode reuses the regular pipeline buffers with l_e = 0
    cdef int lr = l_r, le = (0 if single else l_e)
    cdef double[::1] I = np.full(
        M, floor(init_inventory if init_inventory > 0.0 else 0.0)
    )
    cdef double[:, ::1] Qr = np.zeros((M, lr))
    cdef double[:, ::1] Qe = np.zeros((M, le))

    X = np.empty((T, M, n_in))
    cdef double[:, :, ::1] Xv = X
    H = [np.empty((T, M, (<object> Ws[k]).shape[0])) for k in range(K)]
    cdef double[:, ::1] Iprime = np.empty((T, M))
    cdef double[:, ::1] Wk
    cdef double[::1] ek
    cdef double[:, ::1] hprev, hcur
    cdef double[:, :, ::1] Hk

    cdef double loss = 0.0

    # ---------------- forward ----------------
    for t in range(T):
        # assemble the input row block for this period
        if single:
            for m in range(M):
                Xv[t, m, 0] = I[m]
                for j in range(lr):
                    Xv[t, m, 1 + j] = Qr[m, j]
        elif reduced:
            for m in range(M):
                Xv[t, m, 0] = I[m] + Qr[m, 0]
                for j in range(1, lr):
                    Xv[t, m, j] = Qr[m, j]
                Xv[t, m, lr] = mu[t]
                Xv[t, m, lr + 1] = sigma[t]
        else:
            for m in range(M):
                Xv[t, m, 0] = I[m]
                for j in range(lr):
                    Xv[t, m, 1 + j] = Qr[m, j]
                for j in range(le):
                    Xv[t, m, 1 + lr + j] = Qe[m, j]
        if input_scale != 1.0:
            for m in range(M):
                for j in range(n_in):
                    Xv[t, m, j] = Xv[t, m, j] / input_scale

        hprev = Xv[t]
        for k in range(K):
            Wk = Ws[k]
            ek = es[k]
            Hk = H[k]
            hcur = Hk[t]
            width = Wk.shape[0]
            _mm_nt(hprev, Wk, hcur, 0.0)
            if acts[k]:
                for m in range(M):
                    for j in range(width):
                        v = hcur[m, j] + ek[j]
                        hcur[m, j] = v if v > 0.0 else alpha * expm1(v / alpha)
            else:
                for m in range(M):
                    for j in range(width):
                        hcur[m, j] = hcur[m, j] + ek[j]
            hprev = hcur

        # orders, dynamics, cost
        w_t = pow(gamma, t) / T
        acc = 0.0
        Hk = H[K - 1]
        if single:
            for m in range(M):
                y0 = Hk[t, m, 0] * out_scale
                q = floor(y0) if y0 > 0.0 else 0.0
                arrive = Qr[m, 0] if lr >= 1 else q
                v = I[m] + arrive - demands[m, t]
                Iprime[t, m] = v
                I[m] = v
                cost = h * (v if v > 0.0 else 0.0) + b * (-v if v < 0.0 else 0.0)
                if c_r != 0.0:
                    cost = cost + c_r * q
                acc = acc + cost
                for j in range(lr - 1):
                    Qr[m, j] = Qr[m, j + 1]
                if lr >= 1:
                    Qr[m, lr - 1] = q
        else:
            for m in range(M):
                y0 = Hk[t, m, 0] * out_scale
                y1 = Hk[t, m, 1] * out_scale
                qr = floor(y0) if y0 > 0.0 else 0.0
                qe = floor(y1) if y1 > 0.0 else 0.0
                arrive = Qr[m, 0] + (Qe[m, 0] if le >= 1 else qe)
                v = I[m] + arrive - demands[m, t]
                Iprime[t, m] = v
                I[m] = v
                cost = h * (v if v > 0.0 else 0.0) + b * (-v if v < 0.0 else 0.0)
                if c_r != 0.0:
                    cost = cost + c_r * qr
                if c_e != 0.0:
                    cost = cost + c_e * qe
                if f_r != 0.0 or f_e != 0.0:
                    cost = cost + (f_r if qr > 0.0 else 0.0) + (f_e if qe > 0.0 else 0.0)
                acc = acc + cost
                for j in range(lr - 1):
                    Qr[m, j] = Qr[m, j + 1]
                Qr[m, lr - 1] = qr
                if le >= 1:
                    for j in range(le - 1):
                        Qe[m, j] = Qe[m, j + 1]
                    Qe[m, le - 1] = qe
        loss = loss + w_t * (acc / M)

    # ---------------- backward ----------------
    gWs = [np.zeros_like(Ws[k]) for k in range(K)]
    ges = [np.zeros_like(es[k]) for k in range(K)]
    cdef double[:, ::1] gWk
    cdef double[::1] gek

    cdef double[::1] gI = np.zeros(M)
    cdef double[:, ::1] gQr = np.zeros((M, lr))
    cdef double[:, ::1] gQe = np.zeros((M, le))
    cdef double[::1] gIp = np.empty(M)
    cdef double[::1] gqr = np.empty(M)
    cdef double[::1] gqe = np.empty(M)
    # scratch adjoint blocks, one per layer plus the input
    GH = [np.empty((M, (<object> Ws[k]).shape[0])) for k in range(K)]
    cdef double[:, ::1] gx = np.empty((M, n_in))
    cdef double[:, ::1] gcur, gprev
    cdef double carry, g_init = 0.0

    for t in range(T - 1, -1, -1):
        w_t = pow(gamma, t) / (T * M)
        # adjoint of the post-demand inventory: carried gI plus the cost kink
        for m in range(M):
            v = Iprime[t, m]
            gIp[m] = gI[m] + w_t * ((h if v > 0.0 else 0.0) - (b if v < 0.0 else 0.0))

        # undo the pipeline shift: the youngest slot was this period's order
        for m in range(M):
            gqr[m] = gQr[m, lr - 1] if lr >= 1 else 0.0
        for j in range(lr - 1, 0, -1):
            for m in range(M):
                gQr[m, j] = gQr[m, j - 1]
        if lr >= 1:
            for m in range(M):
                gQr[m, 0] = gIp[m]  # arrival Qr[0] feeds I'
        if single:
            if lr == 0:
                for m in range(M):
                    gqr[m] = gqr[m] + gIp[m]  # immediate delivery
            if c_r != 0.0:
                for m in range(M):
                    gqr[m] = gqr[m] + w_t * c_r
        else:
            for m in range(M):
                gqe[m] = gQe[m, le - 1] if le >= 1 else 0.0
            for j in range(le - 1, 0, -1):
                for m in range(M):
                    gQe[m, j] = gQe[m, j - 1]
            if le >= 1:
                for m in range(M):
                    gQe[m, 0] = gIp[m]
            else:
                for m in range(M):
                    gqe[m] = gqe[m] + gIp[m]
            if c_r != 0.0:
                for m in range(M):
                    gqr[m] = gqr[m] + w_t * c_r
            if c_e != 0.0:
                for m in range(M):
                    gqe[m] = gqe[m] + w_t * c_e

        # integer decoupling: gradient of [y]+ only (strict positivity mask)
        Hk = H[K - 1]
        gcur = GH[K - 1]
        for m in range(M):
            y0 = Hk[t, m, 0] * out_scale
            gcur[m, 0] = (gqr[m] if y0 > 0.0 else 0.0) * out_scale
            if not single:
                y1 = Hk[t, m, 1] * out_scale
                gcur[m, 1] = (gqe[m] if y1 > 0.0 else 0.0) * out_scale

        for k in range(K - 1, -1, -1):
            Wk = Ws[k]
            gWk = gWs[k]
            gek = ges[k]
            Hk = H[k]
            gcur = GH[k]
            width = Wk.shape[0]
            if acts[k]:
                # CELU derivative from the stored activation: 1 above zero,
                # value/alpha + 1 on the negative branch
                for m in range(M):
                    for j in range(width):
                        v = Hk[t, m, j]
                        gcur[m, j] = gcur[m, j] * (1.0 if v > 0.0 else v / alpha + 1.0)
            for j in range(width):
                carry = 0.0
                for m in range(M):
                    carry = carry + gcur[m, j]
                gek[j] = gek[j] + carry
            hprev = H[k - 1][t] if k > 0 else Xv[t]
            _mm_tn(gcur, hprev, gWk, 1.0)
            gprev = GH[k - 1] if k > 0 else gx
            _mm_nn(gcur, Wk, gprev, 0.0)

        if input_scale != 1.0:
            for m in range(M):
                for j in range(n_in):
                    gx[m, j] = gx[m, j] / input_scale

        # unpack the input adjoint into the carried state adjoints
        if single:
            for m in range(M):
                gI[m] = gIp[m] + gx[m, 0]
                for j in range(lr):
                    gQr[m, j] = gQr[m, j] + gx[m, 1 + j]
        elif reduced:
            for m in range(M):
                gI[m] = gIp[m] + gx[m, 0]
                gQr[m, 0] = gQr[m, 0] + gx[m, 0]
                for j in range(1, lr):
                    gQr[m, j] = gQr[m, j] + gx[m, j]
        else:
            for m in range(M):
                gI[m] = gIp[m] + gx[m, 0]
                for j in range(lr):
                    gQr[m, j] = gQr[m, j] + gx[m, 1 + j]
                for j in range(le):
                    gQe[m, j] = gQe[m, j] + gx[m, 1 + lr + j]

    if init_inventory > 0.0:
        for m in range(M):
            g_init = g_init + gI[m]
    return loss, gWs, ges, g_init
