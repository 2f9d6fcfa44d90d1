"""Compiled local interaction kernels for Galerkin boundary operators.

For every pair of triangles (test ``t``, trial ``s``) the kernel computes the
3x3 matrices of the two boundary operators between the local shape functions
``psi_a(x) = (x - p_a) / (2 A_t)`` and ``psi_b(y) = (y - q_b) / (2 A_s)``::

    S[a, b] = -ik  II G psi_a(x).psi_b(y)  -  1/(ik) II G / (A_t A_s)
    C[a, b] = -II K(r) (x - y).(psi_b(y) x psi_a(x))

with ``G = exp(ikr) / (4 pi r)`` and ``K = exp(ikr)(ikr - 1) / (4 pi r^3)``, so
that ``grad_x G = K (x - y)``.  Both integrands are reduced to a few kernel
moments per pair (coordinates taken relative to the test centroid)::

    S: sum w G,  sum w G x,  sum w G y,  sum w G x.y
    C: sum w K (x - y),  sum w K (x cross y)

C vanishes identically on coplanar pairs, which are skipped.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

FOUR_PI = 4.0 * np.pi

# pair classes, mirrored from quadrature.PairClass
IDENTICAL, SHARED_EDGE, SHARED_VERTEX, NEAR, MEDIUM, FAR = 0, 1, 2, 3, 4, 5

# layout of the moment buffer
_I0, _IX, _IY, _IXY, _J0, _J1, _NMOM = 0, 1, 4, 7, 8, 11, 14


@njit(cache=True)
def _classify(tt, ss, pt, ps, same_mesh, perm_t, perm_s):
    """Pair class; fills permutations that put shared vertices first."""
    for a in range(3):
        perm_t[a] = a
        perm_s[a] = a
    if same_mesh:
        nshared = 0
        st0 = st1 = ss0 = ss1 = 0
        for a in range(3):
            for b in range(3):
                if tt[a] == ss[b]:
                    if nshared == 0:
                        st0, ss0 = a, b
                    elif nshared == 1:
                        st1, ss1 = a, b
                    nshared += 1
        if nshared == 3:
            return IDENTICAL
        if nshared == 2:
            perm_t[0], perm_t[1], perm_t[2] = st0, st1, 3 - st0 - st1
            perm_s[0], perm_s[1], perm_s[2] = ss0, ss1, 3 - ss0 - ss1
            return SHARED_EDGE
        if nshared == 1:
            for a in range(3):
                perm_t[a] = (st0 + a) % 3
                perm_s[a] = (ss0 + a) % 3
            return SHARED_VERTEX
    diam = 0.0
    delta = np.inf
    for a in range(3):
        for b in range(3):
            dt = 0.0
            ds = 0.0
            dd = 0.0
            for d in range(3):
                dt += (pt[a, d] - pt[b, d]) ** 2
                ds += (ps[a, d] - ps[b, d]) ** 2
                dd += (pt[a, d] - ps[b, d]) ** 2
            diam = max(diam, dt, ds)
            delta = min(delta, dd)
    if delta == 0.0 and not same_mesh:
        return -1
    if delta < diam:
        return NEAR
    if delta < 9.0 * diam:
        return MEDIUM
    return FAR


@njit(cache=True, inline="always")
def _accumulate(mom, x0, x1, x2, y0, y1, y2, w, k, want_s, want_c):
    dx = x0 - y0
    dy = x1 - y1
    dz = x2 - y2
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    e = np.exp(1j * k * r)
    if want_s:
        g = w * e / (FOUR_PI * r)
        mom[_I0] += g
        mom[_IX] += g * x0
        mom[_IX + 1] += g * x1
        mom[_IX + 2] += g * x2
        mom[_IY] += g * y0
        mom[_IY + 1] += g * y1
        mom[_IY + 2] += g * y2
        mom[_IXY] += g * (x0 * y0 + x1 * y1 + x2 * y2)
    if want_c:
        kk = w * e * (1j * k * r - 1.0) / (FOUR_PI * r * r * r)
        mom[_J0] += kk * dx
        mom[_J0 + 1] += kk * dy
        mom[_J0 + 2] += kk * dz
        mom[_J1] += kk * (x1 * y2 - x2 * y1)
        mom[_J1 + 1] += kk * (x2 * y0 - x0 * y2)
        mom[_J1 + 2] += kk * (x0 * y1 - x1 * y0)


@njit(cache=True)
def _coplanar(pt, ps, nt, ns):
    cx = nt[1] * ns[2] - nt[2] * ns[1]
    cy = nt[2] * ns[0] - nt[0] * ns[2]
    cz = nt[0] * ns[1] - nt[1] * ns[0]
    if cx * cx + cy * cy + cz * cz > 1e-24:
        return False
    scale = 0.0
    for a in range(3):
        for d in range(3):
            scale = max(scale, abs(pt[a, d] - pt[0, d]), abs(ps[a, d] - pt[0, d]))
    for b in range(3):
        h = 0.0
        for d in range(3):
            h += nt[d] * (ps[b, d] - pt[0, d])
        if abs(h) > 1e-12 * scale:
            return False
    return True


@njit(cache=True)
def _fill_pair(out_s, out_c, row, col, pt, ps, at, as_, mom, k, want_s, want_c, c_zero):
    scale = 1.0 / (4.0 * at * as_)
    i0 = mom[_I0]
    for a in range(3):
        for b in range(3):
            if want_s:
                dot = mom[_IXY]
                for d in range(3):
                    dot += -pt[a, d] * mom[_IY + d] - ps[b, d] * mom[_IX + d] + pt[a, d] * ps[b, d] * i0
                out_s[row + a, col + b] = -1j * k * scale * dot - i0 / (1j * k * at * as_)
            if want_c and not c_zero:
                qxp0 = ps[b, 1] * pt[a, 2] - ps[b, 2] * pt[a, 1]
                qxp1 = ps[b, 2] * pt[a, 0] - ps[b, 0] * pt[a, 2]
                qxp2 = ps[b, 0] * pt[a, 1] - ps[b, 1] * pt[a, 0]
                acc = qxp0 * mom[_J0] + qxp1 * mom[_J0 + 1] + qxp2 * mom[_J0 + 2]
                for d in range(3):
                    acc += (ps[b, d] - pt[a, d]) * mom[_J1 + d]
                out_c[row + a, col + b] = -scale * acc


@njit(cache=True)
def _points(vertices, triangles, ids, bary):
    n = ids.shape[0]
    nq = bary.shape[0]
    out = np.empty((n, nq, 3))
    for i in range(n):
        tri = triangles[ids[i]]
        for q in range(nq):
            for d in range(3):
                out[i, q, d] = (
                    bary[q, 0] * vertices[tri[0], d]
                    + bary[q, 1] * vertices[tri[1], d]
                    + bary[q, 2] * vertices[tri[2], d]
                )
    return out


@njit(parallel=True, cache=True)
def local_matrices(
    test_vertices,
    test_triangles,
    test_normals,
    test_areas,
    test_ids,
    trial_vertices,
    trial_triangles,
    trial_normals,
    trial_areas,
    trial_ids,
    same_mesh,
    k,
    want_s,
    want_c,
    reg_bary_near,
    reg_w_near,
    reg_bary_medium,
    reg_w_medium,
    reg_bary_far,
    reg_w_far,
    sing_tb,
    sing_sb,
    sing_w,
    sing_offsets,
):
    """Local matrices for all pairs ``test_ids x trial_ids``.

    Returns the S and C arrays of shape ``(3 * len(test_ids), 3 * len(trial_ids))``
    (an unrequested one has zero size) and a flag that is set when triangles
    of distinct meshes touch.
    """
    nt = test_ids.shape[0]
    ns = trial_ids.shape[0]
    out_s = np.zeros((3 * nt if want_s else 0, 3 * ns if want_s else 0), np.complex128)
    out_c = np.zeros((3 * nt if want_c else 0, 3 * ns if want_c else 0), np.complex128)
    touching_error = np.zeros(nt, np.int64)
    tx_near = _points(test_vertices, test_triangles, test_ids, reg_bary_near)
    tx_medium = _points(test_vertices, test_triangles, test_ids, reg_bary_medium)
    tx_far = _points(test_vertices, test_triangles, test_ids, reg_bary_far)
    sy_near = _points(trial_vertices, trial_triangles, trial_ids, reg_bary_near)
    sy_medium = _points(trial_vertices, trial_triangles, trial_ids, reg_bary_medium)
    sy_far = _points(trial_vertices, trial_triangles, trial_ids, reg_bary_far)
    for i in prange(nt):
        t = test_ids[i]
        tt = test_triangles[t]
        pt_abs = np.empty((3, 3))
        for a in range(3):
            pt_abs[a] = test_vertices[tt[a]]
        origin = np.empty(3)
        for d in range(3):
            origin[d] = (pt_abs[0, d] + pt_abs[1, d] + pt_abs[2, d]) / 3.0
        pt = pt_abs - origin
        ps_abs = np.empty((3, 3))
        ps = np.empty((3, 3))
        perm_t = np.empty(3, np.int64)
        perm_s = np.empty(3, np.int64)
        mom = np.zeros(_NMOM, np.complex128)
        at = test_areas[t]
        for j in range(ns):
            s = trial_ids[j]
            ss = trial_triangles[s]
            for b in range(3):
                for d in range(3):
                    ps_abs[b, d] = trial_vertices[ss[b], d]
                    ps[b, d] = ps_abs[b, d] - origin[d]
            cls = _classify(tt, ss, pt_abs, ps_abs, same_mesh, perm_t, perm_s)
            if cls < 0:
                touching_error[i] = 1
                cls = NEAR
            as_ = trial_areas[s]
            c_zero = False
            if want_c:
                c_zero = cls == IDENTICAL or _coplanar(pt_abs, ps_abs, test_normals[t], trial_normals[s])
            do_c = want_c and not c_zero
            mom[:] = 0.0
            jac = 4.0 * at * as_
            if cls <= SHARED_VERTEX:
                lo = sing_offsets[cls]
                hi = sing_offsets[cls + 1]
                for p in range(lo, hi):
                    x0 = x1 = x2 = 0.0
                    y0 = y1 = y2 = 0.0
                    for c in range(3):
                        lt = sing_tb[p, c]
                        ls = sing_sb[p, c]
                        x0 += lt * pt[perm_t[c], 0]
                        x1 += lt * pt[perm_t[c], 1]
                        x2 += lt * pt[perm_t[c], 2]
                        y0 += ls * ps[perm_s[c], 0]
                        y1 += ls * ps[perm_s[c], 1]
                        y2 += ls * ps[perm_s[c], 2]
                    _accumulate(mom, x0, x1, x2, y0, y1, y2, sing_w[p] * jac, k, want_s, do_c)
            else:
                if cls == NEAR:
                    xq = tx_near[i]
                    yq = sy_near[j]
                    wq = reg_w_near
                elif cls == MEDIUM:
                    xq = tx_medium[i]
                    yq = sy_medium[j]
                    wq = reg_w_medium
                else:
                    xq = tx_far[i]
                    yq = sy_far[j]
                    wq = reg_w_far
                nq = wq.shape[0]
                for p in range(nq):
                    x0 = xq[p, 0] - origin[0]
                    x1 = xq[p, 1] - origin[1]
                    x2 = xq[p, 2] - origin[2]
                    wp = wq[p] * jac
                    for q in range(nq):
                        _accumulate(
                            mom,
                            x0,
                            x1,
                            x2,
                            yq[q, 0] - origin[0],
                            yq[q, 1] - origin[1],
                            yq[q, 2] - origin[2],
                            wp * wq[q],
                            k,
                            want_s,
                            do_c,
                        )
            _fill_pair(out_s, out_c, 3 * i, 3 * j, pt, ps, at, as_, mom, k, want_s, want_c, c_zero)
    return out_s, out_c, touching_error.max()
