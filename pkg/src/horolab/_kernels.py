"""Compiled geodesic, Riccati and Jacobi integrators in Fermi coordinates.

A point is (rho, tau): signed distance to the axis and position along it.
The metric is exp(2 psi(rho)) (drho^2 + cosh(rho)^2 dtau^2) and a unit
vector is encoded by its angle phi against the tau direction.  The state
vector is (rho, tau, phi, u, I); the last two slots carry either a Riccati
solution and its running integral (MODE_RICCATI) or a Jacobi field and its
derivative (MODE_JACOBI).

Parameters travel as a flat float array, see ``P_*`` indices.
"""

import numpy as np
from numba import njit, prange

MODE_RICCATI = 0
MODE_JACOBI = 1
MODE_GEODESIC = 2

ST_TIME = 0
ST_EXIT = 1
ST_AXIS = 2
ST_FAIL = 3

P_AMP = 0
P_R0 = 1
P_K = 2
P_EPSI0 = 3
P_RTOL = 4
P_ATOL = 5
P_CAP = 6
N_PARAMS = 7

NODE_CAP = 40000
RHO_AXIS = 1e-4
ASYM_REL = 1e-13
BACK_HORIZON = 40.0


@njit(cache=True)
def psi3(rho, amp, r0):
    if amp == 0.0 or r0 <= 0.0:
        return 0.0, 0.0, 0.0
    x = rho / r0
    if abs(x) >= 1.0:
        return 0.0, 0.0, 0.0
    q = 1.0 - x * x
    p = amp * q * q * q
    dp = -6.0 * amp * x * q * q / r0
    d2p = -6.0 * amp * q * (q - 4.0 * x * x) / (r0 * r0)
    return p, dp, d2p


@njit(cache=True)
def curvature(rho, amp, r0):
    p, dp, d2p = psi3(rho, amp, r0)
    return np.exp(-2.0 * p) * (-1.0 - d2p - np.tanh(rho) * dp)


@njit(cache=True)
def clairaut_h(rho, amp, r0):
    p, _, _ = psi3(rho, amp, r0)
    return np.exp(p) * np.cosh(rho)


@njit(cache=True)
def _rhs(y, mode, amp, r0, out):
    rho = y[0]
    phi = y[2]
    p, dp, d2p = psi3(rho, amp, r0)
    e = np.exp(-p)
    s = np.sin(phi)
    c = np.cos(phi)
    th = np.tanh(rho)
    out[0] = e * s
    out[1] = e * c / np.cosh(rho)
    out[2] = e * (dp + th) * c
    if mode == MODE_RICCATI:
        k = np.exp(-2.0 * p) * (-1.0 - d2p - th * dp)
        out[3] = -y[3] * y[3] - k
        out[4] = y[3]
    elif mode == MODE_JACOBI:
        k = np.exp(-2.0 * p) * (-1.0 - d2p - th * dp)
        out[3] = y[4]
        out[4] = -k * y[3]
    else:
        out[3] = 0.0
        out[4] = 0.0


@njit(cache=True)
def _dp5(y, h, mode, amp, r0, rtol, atol, ynew, ks, tmp):
    """One Dormand-Prince 5(4) step; returns the scaled error norm."""
    n = 5
    _rhs(y, mode, amp, r0, ks[0])
    for i in range(n):
        tmp[i] = y[i] + h * (0.2 * ks[0, i])
    _rhs(tmp, mode, amp, r0, ks[1])
    for i in range(n):
        tmp[i] = y[i] + h * (3.0 / 40.0 * ks[0, i] + 9.0 / 40.0 * ks[1, i])
    _rhs(tmp, mode, amp, r0, ks[2])
    for i in range(n):
        tmp[i] = y[i] + h * (44.0 / 45.0 * ks[0, i] - 56.0 / 15.0 * ks[1, i]
                             + 32.0 / 9.0 * ks[2, i])
    _rhs(tmp, mode, amp, r0, ks[3])
    for i in range(n):
        tmp[i] = y[i] + h * (19372.0 / 6561.0 * ks[0, i] - 25360.0 / 2187.0 * ks[1, i]
                             + 64448.0 / 6561.0 * ks[2, i] - 212.0 / 729.0 * ks[3, i])
    _rhs(tmp, mode, amp, r0, ks[4])
    for i in range(n):
        tmp[i] = y[i] + h * (9017.0 / 3168.0 * ks[0, i] - 355.0 / 33.0 * ks[1, i]
                             + 46732.0 / 5247.0 * ks[2, i] + 49.0 / 176.0 * ks[3, i]
                             - 5103.0 / 18656.0 * ks[4, i])
    _rhs(tmp, mode, amp, r0, ks[5])
    for i in range(n):
        ynew[i] = y[i] + h * (35.0 / 384.0 * ks[0, i] + 500.0 / 1113.0 * ks[2, i]
                              + 125.0 / 192.0 * ks[3, i] - 2187.0 / 6784.0 * ks[4, i]
                              + 11.0 / 84.0 * ks[5, i])
    _rhs(ynew, mode, amp, r0, ks[6])
    err = 0.0
    for i in range(n):
        e = h * (71.0 / 57600.0 * ks[0, i] - 71.0 / 16695.0 * ks[2, i]
                 + 71.0 / 1920.0 * ks[3, i] - 17253.0 / 339200.0 * ks[4, i]
                 + 22.0 / 525.0 * ks[5, i] - 1.0 / 40.0 * ks[6, i])
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        r = abs(e) / sc
        if r > err:
            err = r
    return err


@njit(cache=True)
def _exited(y, amp, r0):
    if amp == 0.0:
        return True
    rho = y[0]
    return abs(rho) >= r0 and rho * np.sin(y[2]) >= 0.0


@njit(cache=True)
def _is_asymptotic(y, amp, r0):
    if amp == 0.0:
        return False
    c = clairaut_h(y[0], amp, r0) * np.cos(y[2])
    h0 = clairaut_h(0.0, amp, r0)
    return abs(abs(c) - h0) <= ASYM_REL * h0


@njit(cache=True)
def _on_axis_tail(y):
    return abs(y[0]) < RHO_AXIS and y[0] * np.sin(y[2]) <= 0.0


@njit(cache=True)
def integrate(y, t_end, mode, stop, prm, nodes, rec):
    """Advance ``y`` in place for up to ``t_end``.

    With ``stop`` the run ends at the first accepted state past the bump
    strip and moving outward (ST_EXIT) or, for rays asymptotic to the axis,
    once they hug it (ST_AXIS).  When ``rec`` is set, accepted states are
    written to ``nodes`` as rows (t, y0..y4).  Returns (t, status, count).
    """
    amp = prm[P_AMP]
    r0 = prm[P_R0]
    rtol = prm[P_RTOL]
    atol = prm[P_ATOL]
    ks = np.empty((7, 5))
    tmp = np.empty(5)
    ynew = np.empty(5)
    t = 0.0
    cnt = 0
    if rec:
        nodes[0, 0] = 0.0
        for i in range(5):
            nodes[0, i + 1] = y[i]
        cnt = 1
    asym = False
    if stop:
        if _exited(y, amp, r0):
            return t, ST_EXIT, cnt
        asym = _is_asymptotic(y, amp, r0)
        if asym and _on_axis_tail(y):
            return t, ST_AXIS, cnt
    if t_end <= 0.0:
        return t, ST_TIME, cnt
    h = min(0.05, t_end)
    nfail = 0
    while t < t_end:
        if t + h > t_end:
            h = t_end - t
        err = _dp5(y, h, mode, amp, r0, rtol, atol, ynew, ks, tmp)
        if err <= 1.0 or h < 1e-13:
            t += h
            for i in range(5):
                y[i] = ynew[i]
            if rec:
                if cnt >= nodes.shape[0]:
                    return t, ST_FAIL, cnt
                nodes[cnt, 0] = t
                for i in range(5):
                    nodes[cnt, i + 1] = y[i]
                cnt += 1
            if stop:
                if _exited(y, amp, r0):
                    return t, ST_EXIT, cnt
                if asym and _on_axis_tail(y):
                    return t, ST_AXIS, cnt
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h * fac, 1.0)
            nfail = 0
        else:
            h *= max(0.1, 0.9 * err ** -0.2)
            nfail += 1
            if nfail > 60:
                return t, ST_FAIL, cnt
    return t, ST_TIME, cnt


@njit(cache=True)
def replay(nodes, cnt, reverse, u0, prm, uout):
    """Integrate the Riccati equation along a recorded path.

    Each segment restarts the geodesic from its stored node, so the replay
    follows the recorded curve without drift.  ``reverse`` walks the path
    backwards with flipped velocity.  ``uout[j]`` receives (u, I) at node j
    in walking order when ``uout`` has room.  Returns (u, I).
    """
    y = np.empty(5)
    u = u0
    acc = 0.0
    store = uout.shape[0] >= cnt
    if store and cnt > 0:
        uout[0, 0] = u
        uout[0, 1] = 0.0
    for j in range(cnt - 1):
        if reverse:
            a = cnt - 1 - j
            b = a - 1
        else:
            a = j
            b = j + 1
        dt = abs(nodes[b, 0] - nodes[a, 0])
        y[0] = nodes[a, 1]
        y[1] = nodes[a, 2]
        y[2] = nodes[a, 3] + (np.pi if reverse else 0.0)
        y[3] = u
        y[4] = 0.0
        integrate(y, dt, MODE_RICCATI, False, prm, nodes, False)
        u = y[3]
        acc += y[4]
        if store:
            uout[j + 1, 0] = u
            uout[j + 1, 1] = acc
    return u, acc


@njit(cache=True)
def endpoint(rho, tau, phi):
    """Boundary endpoint of the hyperbolic ray from (rho, tau, phi).

    Returns (side, T): side +1 for rho -> +inf, -1 for rho -> -inf, with the
    endpoint at x = -side * exp(T) on the real line of the upper half plane
    z = i exp(tau + i sigma).  side +-2 flags the axis ends, T = 0.
    """
    sig = np.arctan(np.sinh(rho))
    num = np.cos(0.5 * (phi - sig))
    den = np.sin(0.5 * (phi + sig))
    if den == 0.0:
        return (2.0 if np.cos(phi) > 0 else -2.0), 0.0
    x_neg = (num / den) > 0.0
    side = 1.0 if x_neg else -1.0
    return side, tau + np.log(abs(num)) - np.log(abs(den))


@njit(cache=True)
def hyp_busemann(rho, tau, phi):
    """Upper-half-plane Busemann value log(|z - x|^2 / Im z) at the endpoint
    of the hyperbolic ray through (rho, tau, phi)."""
    sig = np.arctan(np.sinh(rho))
    return tau - np.log(np.cosh(rho)) - 2.0 * np.log(abs(np.sin(0.5 * (phi + sig))))


@njit(cache=True)
def ray_value(rho, tau, phi, prm, out):
    """Weighted and plain Busemann data of the ray from (rho, tau, phi).

    out = (V, B, side, T, m(v), m(-v), length to tail, status)
    V uses f = (m(v) + m(-v)) / 2 as weight, B uses weight 1; both share
    the normalisation of ``hyp_busemann`` so differences are exact limits.
    """
    kk = prm[P_K]
    epsi0 = prm[P_EPSI0]
    nodes = np.empty((NODE_CAP, 6))
    dummy = np.empty((0, 2))
    y = np.empty(5)
    # past of the ray: seed the Riccati solution where the past is hyperbolic
    y[0] = rho
    y[1] = tau
    y[2] = phi + np.pi
    y[3] = 0.0
    y[4] = 0.0
    _, st1, n1 = integrate(y, BACK_HORIZON, MODE_GEODESIC, True, prm, nodes, True)
    if st1 == ST_FAIL:
        out[7] = ST_FAIL
        return
    useed = 1.0 if st1 == ST_EXIT else kk
    uz, _ = replay(nodes, n1, True, useed, prm, dummy)
    # future of the ray
    y[0] = rho
    y[1] = tau
    y[2] = phi
    y[3] = uz
    y[4] = 0.0
    tl, st3, n3 = integrate(y, prm[P_CAP], MODE_RICCATI, True, prm, nodes, True)
    if st3 == ST_FAIL or st3 == ST_TIME:
        out[7] = ST_FAIL
        return
    iu = y[4]
    up = y[3]
    wseed = 1.0 if st3 == ST_EXIT else kk
    wz, iw = replay(nodes, n3, True, wseed, prm, dummy)
    fint = 0.5 * (iu + iw)
    if st3 == ST_EXIT:
        side, tt = endpoint(y[0], y[1], y[2])
        bh = hyp_busemann(y[0], y[1], y[2])
        out[0] = fint + 0.5 * np.log(0.5 * (1.0 + up)) + bh
        out[1] = tl + bh
        out[2] = side
        out[3] = tt
    else:
        sgn = 1.0 if np.cos(y[2]) > 0 else -1.0
        out[0] = fint + np.log(0.5 * (kk + up) / kk) / (2.0 * kk) - sgn * kk * epsi0 * y[1]
        out[1] = tl - sgn * epsi0 * y[1]
        out[2] = 2.0 * sgn
        out[3] = 0.0
    out[4] = uz
    out[5] = wz
    out[6] = tl
    out[7] = st3


@njit(cache=True, parallel=True)
def ray_values(states, prm):
    n = states.shape[0]
    res = np.empty((n, 8))
    for i in prange(n):
        ray_value(states[i, 0], states[i, 1], states[i, 2], prm, res[i])
    return res


@njit(cache=True)
def trace_endpoint(rho, tau, phi, prm):
    """Endpoint (side, T) and exit state of a ray, without Riccati work."""
    nodes = np.empty((1, 6))
    y = np.empty(5)
    y[0] = rho
    y[1] = tau
    y[2] = phi
    y[3] = 0.0
    y[4] = 0.0
    _, st, _ = integrate(y, prm[P_CAP], MODE_GEODESIC, True, prm, nodes, False)
    if st == ST_EXIT:
        side, tt = endpoint(y[0], y[1], y[2])
        return side, tt, st
    if st == ST_AXIS:
        return (2.0 if np.cos(y[2]) > 0 else -2.0), 0.0, st
    return 0.0, 0.0, ST_FAIL


@njit(cache=True, parallel=True)
def trace_endpoints(states, prm):
    n = states.shape[0]
    res = np.empty((n, 3))
    for i in prange(n):
        a, b, c = trace_endpoint(states[i, 0], states[i, 1], states[i, 2], prm)
        res[i, 0] = a
        res[i, 1] = b
        res[i, 2] = c
    return res


@njit(cache=True)
def evolve(rho, tau, phi, t, prm, out):
    """Geodesic flow for signed time t; out = (rho, tau, phi, status, t)."""
    nodes = np.empty((1, 6))
    y = np.empty(5)
    y[0] = rho
    y[1] = tau
    y[2] = phi if t >= 0 else phi + np.pi
    y[3] = 0.0
    y[4] = 0.0
    ta, st, _ = integrate(y, abs(t), MODE_GEODESIC, False, prm, nodes, False)
    out[0] = y[0]
    out[1] = y[1]
    out[2] = y[2] if t >= 0 else y[2] - np.pi
    out[3] = st
    out[4] = ta if t >= 0 else -ta


@njit(cache=True, parallel=True)
def evolve_many(states, times, prm):
    n = states.shape[0]
    res = np.empty((n, 5))
    for i in prange(n):
        evolve(states[i, 0], states[i, 1], states[i, 2], times[i], prm, res[i])
    return res


@njit(cache=True)
def riccati_horizon(rho, tau, phi, horizon, prm):
    """u(R) for u' = -u^2 - K(gamma(t - R)), u(0) = 0."""
    nodes = np.empty((NODE_CAP, 6))
    dummy = np.empty((0, 2))
    y = np.empty(5)
    y[0] = rho
    y[1] = tau
    y[2] = phi + np.pi
    y[3] = 0.0
    y[4] = 0.0
    _, st, n = integrate(y, horizon, MODE_GEODESIC, False, prm, nodes, True)
    if st == ST_FAIL:
        return np.nan
    u, _ = replay(nodes, n, True, 0.0, prm, dummy)
    return u


@njit(cache=True, parallel=True)
def riccati_horizon_many(states, horizon, prm):
    n = states.shape[0]
    res = np.empty(n)
    for i in prange(n):
        res[i] = riccati_horizon(states[i, 0], states[i, 1], states[i, 2], horizon, prm)
    return res


@njit(cache=True)
def weight_integrals(rho, tau, phi, t, horizon, prm, out):
    """Integrals of m(gamma') and m(-gamma') over [0, t] with horizon-R
    Riccati truncation in both directions.

    out = (int m(gamma'), int m(-gamma'), rho_t, tau_t, phi_t, status)
    """
    nodes = np.empty((NODE_CAP, 6))
    ahead = np.empty((NODE_CAP, 6))
    dummy = np.empty((0, 2))
    y = np.empty(5)
    y[0] = rho
    y[1] = tau
    y[2] = phi + np.pi
    y[3] = 0.0
    y[4] = 0.0
    _, st, n = integrate(y, horizon, MODE_GEODESIC, False, prm, nodes, True)
    if st == ST_FAIL:
        out[5] = ST_FAIL
        return
    u0, _ = replay(nodes, n, True, 0.0, prm, dummy)
    y[0] = rho
    y[1] = tau
    y[2] = phi
    y[3] = u0
    y[4] = 0.0
    _, st, n = integrate(y, t, MODE_RICCATI, False, prm, nodes, True)
    if st == ST_FAIL:
        out[5] = ST_FAIL
        return
    out[0] = y[4]
    out[2] = y[0]
    out[3] = y[1]
    out[4] = y[2]
    y[3] = 0.0
    y[4] = 0.0
    _, st, m = integrate(y, horizon, MODE_GEODESIC, False, prm, ahead, True)
    if st == ST_FAIL:
        out[5] = ST_FAIL
        return
    w, _ = replay(ahead, m, True, 0.0, prm, dummy)
    _, iw = replay(nodes, n, True, w, prm, dummy)
    out[1] = iw
    out[5] = ST_TIME


@njit(cache=True, parallel=True)
def weight_integrals_many(states, t, horizon, prm):
    n = states.shape[0]
    res = np.empty((n, 6))
    for i in prange(n):
        weight_integrals(states[i, 0], states[i, 1], states[i, 2], t, horizon, prm, res[i])
    return res


@njit(cache=True)
def jacobi_samples(rho, tau, phi, j0, dj0, times, prm, out):
    """Scalar Jacobi field along the geodesic, sampled at increasing times."""
    nodes = np.empty((1, 6))
    y = np.empty(5)
    y[0] = rho
    y[1] = tau
    y[2] = phi
    y[3] = j0
    y[4] = dj0
    t = 0.0
    for i in range(times.shape[0]):
        _, st, _ = integrate(y, times[i] - t, MODE_JACOBI, False, prm, nodes, False)
        t = times[i]
        out[i, 0] = y[3]
        out[i, 1] = y[4]
        if st == ST_FAIL:
            out[i, 0] = np.nan


@njit(cache=True)
def riccati_path(rho, tau, phi, horizon, times, prm, out):
    """Riccati solution started at gamma(-R) with u = 0, sampled at times >= 0
    together with the Jacobi quotient J'/J for J(-R) = 1, J'(-R) = 0."""
    nodes = np.empty((NODE_CAP, 6))
    y = np.empty(5)
    y[0] = rho
    y[1] = tau
    y[2] = phi + np.pi
    y[3] = 0.0
    y[4] = 0.0
    integrate(y, horizon, MODE_GEODESIC, False, prm, nodes, False)
    start = y.copy()
    start[2] = y[2] + np.pi
    t = -horizon
    ric = start.copy()
    jac = start.copy()
    ric[3] = 0.0
    ric[4] = 0.0
    jac[3] = 1.0
    jac[4] = 0.0
    for i in range(times.shape[0]):
        dt = times[i] - t
        integrate(ric, dt, MODE_RICCATI, False, prm, nodes, False)
        integrate(jac, dt, MODE_JACOBI, False, prm, nodes, False)
        t = times[i]
        out[i, 0] = ric[3]
        out[i, 1] = jac[4] / jac[3]
