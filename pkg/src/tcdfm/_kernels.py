"""
Compiled inner loops for the Kalman filter, the backward sampler and the
scalar SV smoother.

Kernels never raise: they return an integer status (``-1`` when fine,
otherwise the offending time index) and the Python wrappers turn that into
an exception. All random numbers are generated by the caller so results are
identical with and without compilation.
"""
from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _cholesky(A, jitter, L):
    # lower Cholesky factor of A + jitter I into L; False if not PD
    n = A.shape[0]
    for j in range(n):
        s = A[j, j] + jitter
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0) or not math.isfinite(s):
            return False
        d = math.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / d
        for i in range(j):
            L[i, j] = 0.0
    return True


@njit(cache=True)
def _lower_solve(L, B):
    # solve L X = B in place of a copy; B is (n, k)
    n, k = B.shape
    X = B.copy()
    for c in range(k):
        for i in range(n):
            s = X[i, c]
            for j in range(i):
                s -= L[i, j] * X[j, c]
            X[i, c] = s / L[i, i]
    return X


@njit(cache=True)
def _upper_solve_t(L, B):
    # solve L' X = B
    n, k = B.shape
    X = B.copy()
    for c in range(k):
        for i in range(n - 1, -1, -1):
            s = X[i, c]
            for j in range(i + 1, n):
                s -= L[j, i] * X[j, c]
            X[i, c] = s / L[i, i]
    return X


@njit(cache=True)
def forward_kernel(Y, use, Z, H, Phi1, Phi2, Sigma, m0, P0, jitter):
    T, p = Y.shape
    m = Phi1.shape[0]
    n = 2 * m
    F = np.zeros((n, n))
    F[:m, :m] = Phi1
    F[:m, m:] = Phi2
    for i in range(m):
        F[m + i, i] = 1.0
    means = np.empty((T + 1, n))
    covs = np.empty((T + 1, n, n))
    pmeans = np.empty((T, n))
    pcovs = np.empty((T, n, n))
    a = m0.copy()
    P = P0.copy()
    means[0] = a
    covs[0] = P
    L = np.zeros((p, p))
    ZT = np.ascontiguousarray(Z.T)
    FT = np.ascontiguousarray(F.T)
    loglik = 0.0
    log2pi = math.log(2.0 * math.pi)
    for t in range(T):
        a = F @ a
        P = F @ P @ FT
        P[:m, :m] += Sigma[t]
        pmeans[t] = a
        pcovs[t] = P
        if use[t]:
            PZ = np.ascontiguousarray(P[:, :m]) @ ZT
            S = Z @ PZ[:m]
            for i in range(p):
                S[i, i] += H[t, i]
            for i in range(p):
                for j in range(p):
                    if not math.isfinite(S[i, j]):
                        return means, covs, pmeans, pcovs, loglik, t, 1
            if not _cholesky(S, jitter, L):
                return means, covs, pmeans, pcovs, loglik, t, 2
            v = np.empty((p, 1))
            for i in range(p):
                s = Y[t, i]
                for j in range(m):
                    s -= Z[i, j] * a[j]
                v[i, 0] = s
            A = _lower_solve(L, np.ascontiguousarray(PZ.T))
            b = _lower_solve(L, v)
            a = a + (A.T @ b)[:, 0]
            P = P - A.T @ A
            P = 0.5 * (P + P.T)
            ld = 0.0
            bb = 0.0
            for i in range(p):
                ld += math.log(L[i, i])
                bb += b[i, 0] * b[i, 0]
            loglik -= 0.5 * (p * log2pi + 2.0 * ld + bb)
        means[t + 1] = a
        covs[t + 1] = P
    return means, covs, pmeans, pcovs, loglik, -1, 0


@njit(cache=True)
def backward_kernel(means, covs, Phi1, Phi2, Sigma, E, jitter):
    # E: (T + 2, k, m) standard normals; returns f with shape (k, T + 2, m)
    T = Sigma.shape[0]
    m = Phi1.shape[0]
    k = E.shape[1]
    f = np.empty((k, T + 2, m))
    L = np.zeros((m, m))
    Ls = np.zeros((m, m))
    P11 = np.ascontiguousarray(covs[T][:m, :m])
    if not _cholesky(P11, jitter, L):
        return f, T, 3
    for d in range(k):
        f[d, T + 1] = means[T][:m] + L @ E[T + 1, d]
    for t in range(T, -1, -1):
        mt = means[t]
        P = covs[t]
        P11 = np.ascontiguousarray(P[:m, :m])
        P12 = np.ascontiguousarray(P[:m, m:])
        if not _cholesky(P11, jitter, L):
            return f, t, 4
        # G' = P11^-1 P12
        Gt = _upper_solve_t(L, _lower_solve(L, P12))
        G = np.ascontiguousarray(Gt.T)
        C = np.ascontiguousarray(P[m:, m:]) - G @ P12
        K = np.zeros((m, m))
        if t < T:
            Phi2T = np.ascontiguousarray(Phi2.T)
            S = Phi2 @ C @ Phi2T + Sigma[t]
            if not _cholesky(S, jitter, Ls):
                return f, t, 5
            CP = C @ Phi2T
            Kt = _upper_solve_t(Ls, _lower_solve(Ls, np.ascontiguousarray(CP.T)))
            K = np.ascontiguousarray(Kt.T)
            C = C - K @ Phi2 @ C
        C = 0.5 * (C + C.T)
        if not _cholesky(C, jitter, L):
            return f, t, 6
        for d in range(k):
            ft = f[d, t + 1]
            mu = mt[m:] + G @ (ft - mt[:m])
            if t < T:
                r = f[d, t + 2] - Phi1 @ ft
                mu = mu + K @ (r - Phi2 @ mu)
            f[d, t] = mu + L @ E[t, d]
    return f, -1, 0


@njit(cache=True)
def sv_smoother_kernel(y, v, s, rho, z):
    # scalar FFBS for w_t = rho w_{t-1} + u_t, y_t = s w_t + e_t (var v_t), R columns
    T, R = y.shape
    w = np.empty((T, R))
    a_f = np.empty(T)
    p_f = np.empty(T)
    for r in range(R):
        a = 0.0
        P = 1.0 / (1.0 - rho[r] * rho[r])
        sr = s[r]
        for t in range(T):
            F = sr * sr * P + v[t, r]
            K = P * sr / F if math.isfinite(F) else 0.0
            a = a + K * (y[t, r] - sr * a)
            P = P * (1.0 - K * sr)
            a_f[t] = a
            p_f[t] = P
            a = rho[r] * a
            P = rho[r] * rho[r] * P + 1.0
        w[T - 1, r] = a_f[T - 1] + math.sqrt(max(p_f[T - 1], 0.0)) * z[T - 1, r]
        for t in range(T - 2, -1, -1):
            denom = rho[r] * rho[r] * p_f[t] + 1.0
            gain = p_f[t] * rho[r] / denom
            mean = a_f[t] + gain * (w[t + 1, r] - rho[r] * a_f[t])
            var = p_f[t] - gain * rho[r] * p_f[t]
            w[t, r] = mean + math.sqrt(max(var, 0.0)) * z[t, r]
    return w
