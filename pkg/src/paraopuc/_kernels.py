"""Compiled inner loops.  Everything here works on plain arrays and floats."""

import math

import numba as nb
import numpy as np

TWO_PI = 2.0 * math.pi
LOW, HIGH = 1e-2, 1e2


@nb.njit(cache=True)
def szego_evolve(alpha, zs, upto, sign, deriv):
    """Scaled (Phi, Phi*, dPhi, dPhi*) after ``upto`` steps at every z.

    ``sign=-1`` flips the coefficients (second kind).  The four channels share
    one scale per point; true values are ``exp(log_scale) * channel``.  The
    vector is divided by max(|Phi|, |Phi*|) whenever that leaves [1e-2, 1e2].
    """
    m = zs.shape[0]
    phi = np.ones(m, dtype=np.complex128)
    phis = np.ones(m, dtype=np.complex128)
    dphi = np.zeros(m, dtype=np.complex128)
    dphis = np.zeros(m, dtype=np.complex128)
    logs = np.zeros(m)
    for i in range(m):
        z = zs[i]
        p = 1.0 + 0.0j
        ps = 1.0 + 0.0j
        dp = 0.0j
        dps = 0.0j
        ls = 0.0
        for k in range(upto):
            a = sign * alpha[k]
            ac = a.conjugate()
            np_ = z * p - ac * ps
            nps = ps - a * z * p
            if deriv:
                t = p + z * dp
                dp = t - ac * dps
                dps = dps - a * t
            p = np_
            ps = nps
            s = max(abs(p), abs(ps))
            if (s > HIGH or s < LOW) and s > 0.0:
                inv = 1.0 / s
                p *= inv
                ps *= inv
                dp *= inv
                dps *= inv
                ls += math.log(s)
        phi[i] = p
        phis[i] = ps
        dphi[i] = dp
        dphis[i] = dps
        logs[i] = ls
    return phi, phis, dphi, dphis, logs


@nb.njit(cache=True)
def lifted_phase(ar, ai, gamma, theta):
    """Continuous phase eta(theta) of beta z Phi_{N-1}/Phi*_{N-1} and companions.

    Returns (eta, eta', log|Phi*_{N-1}|, d/dtheta log|Phi*_{N-1}|).  The ratio
    b_k = Phi_k/Phi*_k obeys b_{k+1} = (w - conj(a))/(1 - a w) with w = z b_k,
    whose phase lift is t -> t - 2 arg(1 - a e^{it}); arg stays in (-pi/2, pi/2)
    because |a| < 1, so the sum needs no unwrapping.
    """
    c = math.cos(theta)
    s = math.sin(theta)
    br = 1.0
    bi = 0.0
    om = 0.0
    dom = 0.0
    dl = 0.0
    lg = 0.0
    prod = 1.0
    n = ar.shape[0]
    for k in range(n):
        a_r = ar[k]
        a_i = ai[k]
        wr = c * br - s * bi
        wi = c * bi + s * br
        awr = a_r * wr - a_i * wi
        awi = a_r * wi + a_i * wr
        qr = 1.0 - awr
        qi = -awi
        aq = qr * qr + qi * qi
        g = 1.0 + dom
        # d/dtheta log|q| = Re(-i a w (1 + omega') / q)
        dl += g * (awi * qr - awr * qi) / aq
        om += theta - 2.0 * math.atan(qi / qr)
        dom = g * (1.0 - (a_r * a_r + a_i * a_i)) / aq
        cr = qr * qr - qi * qi
        ci = -2.0 * qr * qi
        br = (wr * cr - wi * ci) / aq
        bi = (wr * ci + wi * cr) / aq
        nrm = math.sqrt(br * br + bi * bi)
        br /= nrm
        bi /= nrm
        prod *= aq
        if (k & 7) == 7:
            lg += 0.5 * math.log(prod)
            prod = 1.0
    lg += 0.5 * math.log(prod)
    return gamma + theta + om, 1.0 + dom, lg, dl


@nb.njit(cache=True)
def lifted_phase_grid(ar, ai, gamma, thetas):
    m = thetas.shape[0]
    eta = np.empty(m)
    lg = np.empty(m)
    for i in range(m):
        e, _, l, _ = lifted_phase(ar, ai, gamma, thetas[i])
        eta[i] = e
        lg[i] = l
    return eta, lg


@nb.njit(cache=True)
def _log_abs_phi_n(eta, lg, level):
    # |Phi_N| = 2 |Phi*_{N-1}| |sin((eta - level)/2)|
    sv = abs(math.sin(0.5 * (eta - level)))
    if sv == 0.0:
        return -np.inf
    return math.log(2.0) + lg + math.log(sv)


@nb.njit(cache=True)
def solve_levels(ar, ai, gamma, grid_points, tol, maxit):
    """All N = len(ar) + 1 solutions of eta(theta) = 2 pi m in [0, 2 pi).

    Returns (angles, log |Phi_N(angle)|, log max-grid |Phi_N|, winding, status)
    where winding = (eta(2 pi) - eta(0)) / 2 pi and status counts roots whose
    iteration budget ran out.
    """
    n_roots = ar.shape[0] + 1
    thetas = np.empty(grid_points + 1)
    for i in range(grid_points + 1):
        thetas[i] = TWO_PI * i / grid_points
    eg, lgg = lifted_phase_grid(ar, ai, gamma, thetas)
    winding = (eg[grid_points] - eg[0]) / TWO_PI
    log_max = -np.inf
    for i in range(grid_points):
        v = _log_abs_phi_n(eg[i], lgg[i], 0.0)
        if v > log_max:
            log_max = v
    for i in range(1, grid_points + 1):
        if eg[i] < eg[i - 1]:
            eg[i] = eg[i - 1]
    m0 = math.ceil(eg[0] / TWO_PI)
    angles = np.empty(n_roots)
    res = np.empty(n_roots)
    failures = 0
    for j in range(n_roots):
        lev = TWO_PI * (m0 + j)
        idx = np.searchsorted(eg, lev)
        if idx == 0:
            angles[j] = 0.0
            res[j] = _log_abs_phi_n(eg[0], lgg[0], lev)
            continue
        if idx > grid_points:
            idx = grid_points
        lo = thetas[idx - 1]
        hi = thetas[idx]
        elo = eg[idx - 1]
        ehi = eg[idx]
        x = lo + (lev - elo) / (ehi - elo) * (hi - lo) if ehi > elo else 0.5 * (lo + hi)
        it = 0
        while True:
            it += 1
            e, de, lgx, dl = lifted_phase(ar, ai, gamma, x)
            xe = x
            if e >= lev:
                hi = x
            else:
                lo = x
            d = e - lev
            xn = math.nan
            # Newton on |Phi*| sin((eta - lev)/2): smooth through narrow phase jumps
            if abs(d) < TWO_PI:
                u = 0.5 * d
                sn = math.sin(u)
                den = dl * sn + 0.5 * math.cos(u) * de
                if den != 0.0:
                    xn = x - sn / den
            if math.isfinite(xn) and abs(xn - x) < tol:
                x = min(max(xn, lo), hi)
                break
            if math.isfinite(xn) and lo < xn < hi:
                x = xn
            else:
                x = 0.5 * (lo + hi)
            if hi - lo < tol:
                break
            if it >= maxit:
                failures += 1
                break
        if x != xe:
            e, de, lgx, dl = lifted_phase(ar, ai, gamma, x)
        angles[j] = x
        res[j] = _log_abs_phi_n(e, lgx, lev)
    return angles, res, log_max, winding, failures


@nb.njit(cache=True)
def count_levels(ar, ai, gamma, lo, hi):
    """Number of zeros in the open arc (lo, hi), hi - lo < 2 pi."""
    e_lo = lifted_phase(ar, ai, gamma, lo)[0]
    e_hi = lifted_phase(ar, ai, gamma, hi)[0]
    return math.ceil(e_hi / TWO_PI) - math.floor(e_lo / TWO_PI) - 1


@nb.njit(cache=True)
def transfer_log_growth(alpha, z, checkpoints):
    """log ||A(alpha_{k-1},z)...A(alpha_0,z)|| at each checkpoint k.

    The running product is divided by its largest entry after every step and
    the logarithm of that factor is accumulated.
    """
    m00 = 1.0 + 0.0j
    m01 = 0.0j
    m10 = 0.0j
    m11 = 1.0 + 0.0j
    acc = 0.0
    out = np.empty(checkpoints.shape[0])
    c = 0
    for k in range(alpha.shape[0]):
        a = alpha[k]
        ac = a.conjugate()
        r = 1.0 / math.sqrt(1.0 - (a.real * a.real + a.imag * a.imag))
        n00 = r * (z * m00 - ac * m10)
        n01 = r * (z * m01 - ac * m11)
        n10 = r * (-a * z * m00 + m10)
        n11 = r * (-a * z * m01 + m11)
        s = max(max(abs(n00), abs(n01)), max(abs(n10), abs(n11)))
        m00 = n00 / s
        m01 = n01 / s
        m10 = n10 / s
        m11 = n11 / s
        acc += math.log(s)
        while c < checkpoints.shape[0] and checkpoints[c] == k + 1:
            out[c] = acc + math.log(_spectral_norm(m00, m01, m10, m11))
            c += 1
    return out


@nb.njit(cache=True)
def _spectral_norm(a, b, c, d):
    # largest singular value of [[a, b], [c, d]]
    fro = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det = abs(a * d - b * c)
    disc = max(fro * fro - 4.0 * det * det, 0.0)
    return math.sqrt(0.5 * (fro + math.sqrt(disc)))
