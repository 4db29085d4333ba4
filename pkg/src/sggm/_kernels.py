"""Hot numerical kernels.

Every kernel here has a numba-compiled implementation (the default) and a
pure-numpy/python fallback; :mod:`sggm._backend` decides which one is bound
to the public names at import time. Both paths evaluate the same estimators,
so results agree to floating-point noise across backends.

Kernels:

* ``phi`` / ``ndtri`` - scalar standard-normal CDF and inverse CDF (AS241).
* ``bvn_rect`` - exact rectangle probability of a standard bivariate normal
  (Gauss-Legendre scheme of Drezner & Wesolowsky as refined by Genz).
* ``qmc_mvn_batches`` - randomized-lattice estimates of a multivariate normal
  box probability using the separation-of-variables transform.
* ``ipf_sweeps`` - clique-marginal iterative proportional fitting sweeps.
* ``gibbs_truncated`` - coordinate-wise Gibbs sampling of a box-truncated
  multivariate normal.
"""

import math

import numpy as np
from scipy.special import ndtr as _ndtr_vec
from scipy.special import ndtri as _ndtri_vec

from ._backend import USE_NUMBA, njit

_SQRT2 = math.sqrt(2.0)
_TWOPI = 2.0 * math.pi

# Richtmyer lattice generators: fractional parts of sqrt(prime).
_PRIMES = np.array(
    [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
     71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113],
    dtype=np.float64,
)


def lattice_generator(ndim):
    """Kronecker lattice generator vector for an ``ndim``-dimensional rule."""
    if ndim > _PRIMES.shape[0]:
        raise ValueError(f"lattice generator limited to {_PRIMES.shape[0]} dims")
    return np.sqrt(_PRIMES[:ndim]) % 1.0


@njit
def phi(x):
    """Standard normal CDF, accurate in both tails."""
    return 0.5 * math.erfc(-x / _SQRT2)


@njit
def ndtri(p):
    """Inverse standard normal CDF (Wichura's AS241, double precision)."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    if q < 0.0:
        return -val
    return val


# Gauss-Legendre abscissae/weights on [-1, 1].
_GL6_X = np.array([0.9324695142031521, 0.6612093864662645, 0.2386191860831969])
_GL6_W = np.array([0.1713244923791704, 0.3607615730481386, 0.4679139345726910])
_GL12_X = np.array([0.9815606342467192, 0.9041172563704749, 0.7699026741943047,
                    0.5873179542866175, 0.3678314989981802, 0.1252334085114689])
_GL12_W = np.array([0.04717533638651183, 0.1069393259953184, 0.1600783285433462,
                    0.2031674267230659, 0.2334925365383548, 0.2491470458134028])
_GL20_X = np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                    0.5108670019508271, 0.3737060887154195, 0.2277858511416451,
                    0.07652652113349732])
_GL20_W = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410907,
                    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                    0.1316886384491766, 0.1420961093183820, 0.1491729864726037,
                    0.1527533871307258])


@njit
def bvnu(dh, dk, r):
    """P(X > dh, Y > dk) for a standard bivariate normal with correlation r."""
    if dh == math.inf or dk == math.inf:
        return 0.0
    if dh == -math.inf:
        if dk == -math.inf:
            return 1.0
        return phi(-dk)
    if dk == -math.inf:
        return phi(-dh)
    if r == 0.0:
        return phi(-dh) * phi(-dk)
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.925:
        if abs(r) < 0.3:
            gx = _GL6_X
            gw = _GL6_W
        elif abs(r) < 0.75:
            gx = _GL12_X
            gw = _GL12_W
        else:
            gx = _GL20_X
            gw = _GL20_W
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(gx.shape[0]):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (sgn * gx[i] + 1.0) / 2.0)
                bvn += gw[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (2.0 * _TWOPI) + phi(-h) * phi(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if abs(r) < 1.0:
            ass = (1.0 - r) * (1.0 + r)
            a = math.sqrt(ass)
            bs = (h - k) * (h - k)
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / ass + hk) / 2.0
            if asr > -100.0:
                bvn = (a * math.exp(asr)
                       * (1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                          + c * d * ass * ass / 5.0))
            if -hk < 100.0:
                b = math.sqrt(bs)
                bvn -= (math.exp(-hk / 2.0) * math.sqrt(_TWOPI) * phi(-b / a) * b
                        * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
            a = a / 2.0
            for i in range(_GL20_X.shape[0]):
                for sgn in (-1.0, 1.0):
                    xs = (a * (sgn * _GL20_X[i] + 1.0)) ** 2
                    rs = math.sqrt(1.0 - xs)
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        bvn += (a * _GL20_W[i] * math.exp(asr)
                                * (math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                                   - (1.0 + c * xs * (1.0 + d * xs))))
            bvn = -bvn / _TWOPI
        if r > 0.0:
            bvn += phi(-max(h, k))
        else:
            bvn = -bvn
            if k > h:
                bvn += phi(k) - phi(h)
    if bvn < 0.0:
        bvn = 0.0
    elif bvn > 1.0:
        bvn = 1.0
    return bvn


@njit
def bvn_rect(a0, b0, a1, b1, s0, s1, r):
    """P(a0 < X < b0, a1 < Y < b1) for a centered bivariate normal.

    ``s0``, ``s1`` are the standard deviations and ``r`` the correlation.
    """
    la0 = a0 / s0
    lb0 = b0 / s0
    la1 = a1 / s1
    lb1 = b1 / s1
    p = (bvnu(la0, la1, r) - bvnu(lb0, la1, r)
         - bvnu(la0, lb1, r) + bvnu(lb0, lb1, r))
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    return p


def _qmc_mvn_loop(chol, lo, hi, q, shifts, npts):
    """Per-shift lattice estimates of the box probability (scalar loop form)."""
    m = lo.shape[0]
    ns = shifts.shape[0]
    out = np.zeros(ns)
    c0 = chol[0, 0]
    d0 = phi(lo[0] / c0)
    e0 = phi(hi[0] / c0)
    y = np.zeros(m - 1)
    for s in range(ns):
        total = 0.0
        for kpt in range(1, npts + 1):
            p = e0 - d0
            dd = d0
            ee = e0
            for i in range(1, m):
                z = kpt * q[i - 1] + shifts[s, i - 1]
                z = z - math.floor(z)
                w = abs(2.0 * z - 1.0)
                u = dd + w * (ee - dd)
                if u < 1e-16:
                    u = 1e-16
                elif u > 1.0 - 1e-16:
                    u = 1.0 - 1e-16
                y[i - 1] = ndtri(u)
                mu = 0.0
                for j in range(i):
                    mu += chol[i, j] * y[j]
                ci = chol[i, i]
                dd = phi((lo[i] - mu) / ci)
                ee = phi((hi[i] - mu) / ci)
                p *= ee - dd
                if p <= 0.0:
                    p = 0.0
                    break
            total += p
        out[s] = total / npts
    return out


def _qmc_mvn_numpy(chol, lo, hi, q, shifts, npts):
    """Vectorized fallback of :func:`_qmc_mvn_loop` (same estimator)."""
    m = lo.shape[0]
    ns = shifts.shape[0]
    kcol = np.arange(1, npts + 1, dtype=np.float64)[:, None]
    c0 = chol[0, 0]
    d0 = float(_ndtr_vec(lo[0] / c0))
    e0 = float(_ndtr_vec(hi[0] / c0))
    out = np.empty(ns)
    for s in range(ns):
        z = kcol * q[None, :] + shifts[s][None, :]
        w = np.abs(2.0 * (z - np.floor(z)) - 1.0)
        p = np.full(npts, e0 - d0)
        dd = np.full(npts, d0)
        ee = np.full(npts, e0)
        y = np.empty((npts, m - 1))
        for i in range(1, m):
            u = dd + w[:, i - 1] * (ee - dd)
            np.clip(u, 1e-16, 1.0 - 1e-16, out=u)
            y[:, i - 1] = _ndtri_vec(u)
            mu = y[:, :i] @ chol[i, :i]
            ci = chol[i, i]
            dd = _ndtr_vec((lo[i] - mu) / ci)
            ee = _ndtr_vec((hi[i] - mu) / ci)
            p = p * (ee - dd)
        out[s] = p.mean()
    return out


def _ipf_loop(target, prec0, nodes, offsets, tol, max_sweeps):
    """IPF sweeps over clique marginals (scalar loop form).

    Returns the fitted covariance and the sweep count (-1 when the cap was
    reached before the max-element change dropped below ``tol``).
    """
    d = target.shape[0]
    prec = prec0.copy()
    sigma = np.linalg.inv(prec)
    ncl = offsets.shape[0] - 1
    for sweep in range(max_sweeps):
        prev = sigma.copy()
        for c in range(ncl):
            idx = nodes[offsets[c]:offsets[c + 1]]
            kc = idx.shape[0]
            tcc = np.empty((kc, kc))
            scc = np.empty((kc, kc))
            for a in range(kc):
                for b in range(kc):
                    tcc[a, b] = target[idx[a], idx[b]]
                    scc[a, b] = sigma[idx[a], idx[b]]
            delta = np.linalg.inv(tcc) - np.linalg.inv(scc)
            for a in range(kc):
                for b in range(kc):
                    prec[idx[a], idx[b]] += delta[a, b]
            sigma = np.linalg.inv(prec)
        diff = 0.0
        for a in range(d):
            for b in range(d):
                dv = abs(sigma[a, b] - prev[a, b])
                if dv > diff:
                    diff = dv
        if diff < tol:
            return sigma, sweep + 1
    return sigma, -1


def _ipf_numpy(target, prec0, nodes, offsets, tol, max_sweeps):
    """Vectorized fallback of :func:`_ipf_loop`."""
    prec = prec0.copy()
    sigma = np.linalg.inv(prec)
    cliques = [nodes[offsets[c]:offsets[c + 1]]
               for c in range(offsets.shape[0] - 1)]
    for sweep in range(max_sweeps):
        prev = sigma
        for idx in cliques:
            ix = np.ix_(idx, idx)
            prec[ix] += np.linalg.inv(target[ix]) - np.linalg.inv(sigma[ix])
            sigma = np.linalg.inv(prec)
        if np.max(np.abs(sigma - prev)) < tol:
            return sigma, sweep + 1
    return sigma, -1


def _gibbs_loop(prec, lo, hi, x0, burnin, nkeep, uniforms):
    """Gibbs sweeps for a box-truncated centered MVN with precision ``prec``.

    ``uniforms`` supplies (burnin + nkeep) * d pre-drawn U(0,1) variates.
    Returns (samples, status); status -1 flags a degenerate conditional.
    """
    d = prec.shape[0]
    x = x0.copy()
    out = np.empty((nkeep, d))
    t = 0
    for sweep in range(burnin + nkeep):
        for j in range(d):
            kjj = prec[j, j]
            s = 0.0
            for i in range(d):
                if i != j:
                    s += prec[j, i] * x[i]
            mu = -s / kjj
            sd = 1.0 / math.sqrt(kjj)
            plo = phi((lo[j] - mu) / sd)
            phi_hi = phi((hi[j] - mu) / sd)
            if phi_hi - plo <= 1e-300:
                return out, -1
            u = plo + uniforms[t] * (phi_hi - plo)
            t += 1
            if u < 1e-16:
                u = 1e-16
            elif u > 1.0 - 1e-16:
                u = 1.0 - 1e-16
            x[j] = mu + sd * ndtri(u)
        if sweep >= burnin:
            for i in range(d):
                out[sweep - burnin, i] = x[i]
    return out, 0


if USE_NUMBA:
    qmc_mvn_batches = njit(_qmc_mvn_loop)
    ipf_sweeps = njit(_ipf_loop)
    gibbs_truncated = njit(_gibbs_loop)
else:
    qmc_mvn_batches = _qmc_mvn_numpy
    ipf_sweeps = _ipf_numpy
    gibbs_truncated = _gibbs_loop
