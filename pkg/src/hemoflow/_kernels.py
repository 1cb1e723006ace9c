"""Numba kernels for the D3Q19 BGK update loop.

All kernels are single-threaded, nogil and cache-compiled: per-site
arithmetic is independent of any partitioning, so results are
bit-identical regardless of how many solver instances run concurrently.
"""

import numpy as np
from numba import njit

from .lattice import C, OPPOSITE, W

CV = np.ascontiguousarray(C.astype(np.int64))
WQ = np.ascontiguousarray(W)
OPP = np.ascontiguousarray(OPPOSITE.astype(np.int64))

_JIT = dict(cache=True, nogil=True, fastmath=False)


@njit(**_JIT)
def collide(f, f_post, tau, rho_out, u_out):
    """BGK relaxation toward local equilibrium.

    Fills the macroscopic caches from the pre-collision populations and
    returns (max |u|^2, first bad site or -1).  A site is bad when its
    density is non-positive or not finite.
    """
    n = f.shape[0]
    omega = 1.0 / tau
    max_usq = 0.0
    bad = -1
    for i in range(n):
        rho = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for q in range(19):
            fq = f[i, q]
            rho += fq
            mx += fq * CV[q, 0]
            my += fq * CV[q, 1]
            mz += fq * CV[q, 2]
        if not (rho > 0.0) or not (rho < 1e30):
            if bad < 0:
                bad = i
            rho_out[i] = rho
            continue
        inv = 1.0 / rho
        ux = mx * inv
        uy = my * inv
        uz = mz * inv
        usq = ux * ux + uy * uy + uz * uz
        rho_out[i] = rho
        u_out[i, 0] = ux
        u_out[i, 1] = uy
        u_out[i, 2] = uz
        if usq > max_usq:
            max_usq = usq
        for q in range(19):
            cu = CV[q, 0] * ux + CV[q, 1] * uy + CV[q, 2] * uz
            feq = WQ[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
            f_post[i, q] = f[i, q] + omega * (feq - f[i, q])
    return max_usq, bad


@njit(**_JIT)
def stream(f_new, f_post, nbr, qwall, bouzidi):
    """Pull streaming with wall closure.

    ``nbr[i, q]`` is the site index reached along +c_q from site i, or
    -1 (solid: wall link) / -2 (void beyond an open boundary, later
    overwritten by the port condition).  With ``bouzidi`` the wall link
    uses the two-branch linear interpolation in the crossing fraction q;
    otherwise plain half-way bounce-back.
    """
    n = f_new.shape[0]
    for i in range(n):
        f_new[i, 0] = f_post[i, 0]
        for q in range(1, 19):
            j = nbr[i, OPP[q]]  # upstream site along -c_q
            if j >= 0:
                f_new[i, q] = f_post[j, q]
            elif j == -1:
                d = OPP[q]  # direction from i toward the wall
                if bouzidi:
                    qf = qwall[i, d]
                    if qf < 0.5:
                        k = nbr[i, q]  # fluid neighbour away from the wall
                        if k >= 0:
                            f_new[i, q] = (
                                2.0 * qf * f_post[i, d]
                                + (1.0 - 2.0 * qf) * f_post[k, d]
                            )
                        else:
                            f_new[i, q] = f_post[i, d]
                    else:
                        inv2q = 1.0 / (2.0 * qf)
                        f_new[i, q] = inv2q * f_post[i, d] + (
                            (2.0 * qf - 1.0) * inv2q
                        ) * f_post[i, q]
                else:
                    f_new[i, q] = f_post[i, d]
            else:
                f_new[i, q] = f_post[i, q]
    return


@njit(**_JIT)
def _regularize(f, i, rho, ux, uy, uz):
    """Rebuild site i as equilibrium(rho, u) plus the second-moment
    projection of its current non-equilibrium part.

    Keeps the density and momentum moments exact while filtering the
    non-hydrodynamic content that destabilises wet-node boundaries at
    low relaxation times.
    """
    usq = ux * ux + uy * uy + uz * uz
    pxx = 0.0
    pyy = 0.0
    pzz = 0.0
    pxy = 0.0
    pxz = 0.0
    pyz = 0.0
    for q in range(19):
        cu = CV[q, 0] * ux + CV[q, 1] * uy + CV[q, 2] * uz
        feq = WQ[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
        fneq = f[i, q] - feq
        cx = CV[q, 0]
        cy = CV[q, 1]
        cz = CV[q, 2]
        pxx += fneq * cx * cx
        pyy += fneq * cy * cy
        pzz += fneq * cz * cz
        pxy += fneq * cx * cy
        pxz += fneq * cx * cz
        pyz += fneq * cy * cz
    third = 1.0 / 3.0
    for q in range(19):
        cx = CV[q, 0]
        cy = CV[q, 1]
        cz = CV[q, 2]
        cu = cx * ux + cy * uy + cz * uz
        feq = WQ[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
        qp = (
            (cx * cx - third) * pxx
            + (cy * cy - third) * pyy
            + (cz * cz - third) * pzz
            + 2.0 * (cx * cy * pxy + cx * cz * pxz + cy * cz * pyz)
        )
        f[i, q] = feq + 4.5 * WQ[q] * qp
    return


@njit(**_JIT)
def velocity_inlet(f, sites, axis, sgn, t1, t2, ub):
    """Imposed-velocity inlet: non-equilibrium bounce-back reconstruction
    of the populations entering from outside the plane, followed by a
    regularizing second-moment projection.

    ``ub[s]`` is the speed along the inward plane normal (lattice
    units) of inlet site ``sites[s]``; the imposed velocity is purely
    normal.  The site's density and momentum moments match the imposed
    state exactly.
    """
    for s in range(sites.size):
        i = sites[s]
        un = ub[s]
        s0 = 0.0
        sneg = 0.0
        for q in range(19):
            cn = CV[q, axis] * sgn
            if cn == 0:
                s0 += f[i, q]
            elif cn < 0:
                sneg += f[i, q]
        rho = (s0 + 2.0 * sneg) / (1.0 - un)
        ux = sgn * un if axis == 0 else 0.0
        uy = sgn * un if axis == 1 else 0.0
        uz = sgn * un if axis == 2 else 0.0
        usq = un * un
        # complete the unknowns by bouncing back the non-equilibrium part
        for q in range(19):
            cn = CV[q, axis] * sgn
            if cn > 0:
                cu = cn * un
                feq = WQ[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
                qo = OPP[q]
                feqo = WQ[qo] * rho * (1.0 - 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
                f[i, q] = feq + (f[i, qo] - feqo)
        _regularize(f, i, rho, ux, uy, uz)
    return


@njit(**_JIT)
def pressure_outlet(f, sites, interior):
    """Zero-gauge-pressure outlet: unit density, zero-gradient velocity.

    Each outlet site takes its interior neighbour's velocity and
    non-equilibrium second moment, re-based on the reference density 1.
    """
    for s in range(sites.size):
        i = sites[s]
        j = interior[s]
        rho = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for q in range(19):
            fq = f[j, q]
            rho += fq
            mx += fq * CV[q, 0]
            my += fq * CV[q, 1]
            mz += fq * CV[q, 2]
        inv = 1.0 / rho
        ux = mx * inv
        uy = my * inv
        uz = mz * inv
        usq = ux * ux + uy * uy + uz * uz
        for q in range(19):
            cu = CV[q, 0] * ux + CV[q, 1] * uy + CV[q, 2] * uz
            base = WQ[q] * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
            f[i, q] = f[j, q] + base * (1.0 - rho)
        _regularize(f, i, 1.0, ux, uy, uz)
    return


@njit(**_JIT)
def moments(f, rho_out, u_out):
    n = f.shape[0]
    for i in range(n):
        rho = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for q in range(19):
            fq = f[i, q]
            rho += fq
            mx += fq * CV[q, 0]
            my += fq * CV[q, 1]
            mz += fq * CV[q, 2]
        rho_out[i] = rho
        inv = 1.0 / rho
        u_out[i, 0] = mx * inv
        u_out[i, 1] = my * inv
        u_out[i, 2] = mz * inv
    return


@njit(**_JIT)
def deviatoric_stress(f, sites, tau, out):
    """sigma = -(1 - 1/(2 tau)) * sum_q f_q^neq c_q c_q at selected sites.

    ``out[s]`` receives the six components (xx, yy, zz, xy, xz, yz) in
    lattice units.
    """
    factor = -(1.0 - 1.0 / (2.0 * tau))
    for s in range(sites.size):
        i = sites[s]
        rho = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for q in range(19):
            fq = f[i, q]
            rho += fq
            mx += fq * CV[q, 0]
            my += fq * CV[q, 1]
            mz += fq * CV[q, 2]
        inv = 1.0 / rho
        ux = mx * inv
        uy = my * inv
        uz = mz * inv
        usq = ux * ux + uy * uy + uz * uz
        sxx = 0.0
        syy = 0.0
        szz = 0.0
        sxy = 0.0
        sxz = 0.0
        syz = 0.0
        for q in range(19):
            cu = CV[q, 0] * ux + CV[q, 1] * uy + CV[q, 2] * uz
            feq = WQ[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
            fneq = f[i, q] - feq
            cx = CV[q, 0]
            cy = CV[q, 1]
            cz = CV[q, 2]
            sxx += fneq * cx * cx
            syy += fneq * cy * cy
            szz += fneq * cz * cz
            sxy += fneq * cx * cy
            sxz += fneq * cx * cz
            syz += fneq * cy * cz
        out[s, 0] = factor * sxx
        out[s, 1] = factor * syy
        out[s, 2] = factor * szz
        out[s, 3] = factor * sxy
        out[s, 4] = factor * sxz
        out[s, 5] = factor * syz
    return
