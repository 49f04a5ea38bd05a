"""Compiled inner loops for flattening, scoring and local search.

Every conformation the engine scores or reports goes through
:func:`materialize`, so a pose can always be rebuilt bit-for-bit from its
torsion angles and rigid transform.  Right-hand fragments of the torsions
are passed in CSR form (``ridx[rptr[j]:rptr[j + 1]]``).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OUTSIDE_PENALTY = -10.0
FLATTEN_STEPS = 36
FLATTEN_STEP = 2.0 * math.pi / FLATTEN_STEPS
# A neighbour must beat the current score by more than this to be taken;
# it absorbs rounding in the incremental torsion scores.
IMPROVE_TOL = 1e-9


@njit(cache=True, nogil=True)
def quat_matrix(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0, 0] = 1 - 2 * (y * y + z * z)
    out[0, 1] = 2 * (x * y - w * z)
    out[0, 2] = 2 * (x * z + w * y)
    out[1, 0] = 2 * (x * y + w * z)
    out[1, 1] = 1 - 2 * (x * x + z * z)
    out[1, 2] = 2 * (y * z - w * x)
    out[2, 0] = 2 * (x * z - w * y)
    out[2, 1] = 2 * (y * z + w * x)
    out[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True, nogil=True)
def quat_mul_normalized(r, q, out):
    w1, x1, y1, z1 = r[0], r[1], r[2], r[3]
    w2, x2, y2, z2 = q[0], q[1], q[2], q[3]
    w = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    x = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    y = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    z = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    out[0] = w / norm
    out[1] = x / norm
    out[2] = y / norm
    out[3] = z / norm


@njit(cache=True, nogil=True)
def apply_torsions_inplace(X, ridx, rptr, axes, angles):
    """Rotate each torsion's right fragment about its current bond axis, in order."""
    for j in range(angles.shape[0]):
        ang = angles[j]
        if ang == 0.0:
            continue
        a = axes[j, 0]
        b = axes[j, 1]
        ax = X[a, 0]
        ay = X[a, 1]
        az = X[a, 2]
        ux = X[b, 0] - ax
        uy = X[b, 1] - ay
        uz = X[b, 2] - az
        norm = math.sqrt(ux * ux + uy * uy + uz * uz)
        ux /= norm
        uy /= norm
        uz /= norm
        c = math.cos(ang)
        s = math.sin(ang)
        for p in range(rptr[j], rptr[j + 1]):
            i = ridx[p]
            vx = X[i, 0] - ax
            vy = X[i, 1] - ay
            vz = X[i, 2] - az
            dot = (ux * vx + uy * vy + uz * vz) * (1.0 - c)
            X[i, 0] = ax + vx * c + (uy * vz - uz * vy) * s + ux * dot
            X[i, 1] = ay + vy * c + (uz * vx - ux * vz) * s + uy * dot
            X[i, 2] = az + vz * c + (ux * vy - uy * vx) * s + uz * dot


@njit(cache=True, nogil=True)
def torsion_conformation(base, ridx, rptr, axes, angles, out):
    out[:, :] = base
    apply_torsions_inplace(out, ridx, rptr, axes, angles)


@njit(cache=True, nogil=True)
def rigid_inplace(local, R, t, out):
    for i in range(local.shape[0]):
        x = local[i, 0]
        y = local[i, 1]
        z = local[i, 2]
        out[i, 0] = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0]
        out[i, 1] = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1]
        out[i, 2] = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2]


@njit(cache=True, nogil=True)
def materialize(base, ridx, rptr, axes, angles, q, t):
    local = np.empty_like(base)
    torsion_conformation(base, ridx, rptr, axes, angles, local)
    R = np.empty((3, 3))
    quat_matrix(q, R)
    out = np.empty_like(base)
    rigid_inplace(local, R, t, out)
    return out


@njit(cache=True, nogil=True)
def distance_sum(X):
    total = 0.0
    n = X.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            dx = X[i, 0] - X[j, 0]
            dy = X[i, 1] - X[j, 1]
            dz = X[i, 2] - X[j, 2]
            total += math.sqrt(dx * dx + dy * dy + dz * dz)
    return total


@njit(cache=True, nogil=True, inline="always")
def _sample(flat, nx, ny, nz, origin, spacing, x, y, z):
    gx = (x - origin[0]) / spacing
    gy = (y - origin[1]) / spacing
    gz = (z - origin[2]) / spacing
    if not (0.0 <= gx <= nx - 1 and 0.0 <= gy <= ny - 1 and 0.0 <= gz <= nz - 1):
        return OUTSIDE_PENALTY
    i = min(int(gx), nx - 2)
    j = min(int(gy), ny - 2)
    k = min(int(gz), nz - 2)
    fx = gx - i
    fy = gy - j
    fz = gz - k
    sx = ny * nz
    b = i * sx + j * nz + k
    c00 = flat[b] * (1 - fx) + flat[b + sx] * fx
    c10 = flat[b + nz] * (1 - fx) + flat[b + sx + nz] * fx
    c01 = flat[b + 1] * (1 - fx) + flat[b + sx + 1] * fx
    c11 = flat[b + nz + 1] * (1 - fx) + flat[b + sx + nz + 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


@njit(cache=True, nogil=True)
def grid_value(values, origin, spacing, x, y, z):
    """Trilinear grid value at one point; ``OUTSIDE_PENALTY`` off the grid."""
    nx, ny, nz = values.shape
    return _sample(values.ravel(), nx, ny, nz, origin, spacing, x, y, z)


@njit(cache=True, nogil=True)
def grid_score(values, origin, spacing, X):
    nx, ny, nz = values.shape
    flat = values.ravel()
    total = 0.0
    for i in range(X.shape[0]):
        total += _sample(flat, nx, ny, nz, origin, spacing, X[i, 0], X[i, 1], X[i, 2])
    return total


@njit(cache=True, nogil=True)
def grid_values(values, origin, spacing, X, out):
    """Per-atom grid values into ``out``; returns their sum."""
    nx, ny, nz = values.shape
    flat = values.ravel()
    total = 0.0
    for i in range(X.shape[0]):
        out[i] = _sample(flat, nx, ny, nz, origin, spacing, X[i, 0], X[i, 1], X[i, 2])
        total += out[i]
    return total


@njit(cache=True, nogil=True)
def flatten_steps(base, ridx, rptr, axes, max_sweeps):
    """Coordinate ascent on the internal distance sum over 10-degree torsion steps.

    Returns the chosen step index (0..35) per torsion; ties keep the
    smallest rotation relative to the current angle.
    """
    m = axes.shape[0]
    steps = np.zeros(m, dtype=np.int64)
    angles = np.zeros(m)
    X = np.empty_like(base)
    torsion_conformation(base, ridx, rptr, axes, angles, X)
    best = distance_sum(X)
    for _ in range(max_sweeps):
        changed = False
        for j in range(m):
            start = steps[j]
            best_delta = 0
            for d in range(1, FLATTEN_STEPS):
                angles[j] = ((start + d) % FLATTEN_STEPS) * FLATTEN_STEP
                torsion_conformation(base, ridx, rptr, axes, angles, X)
                v = distance_sum(X)
                if v > best:
                    best = v
                    best_delta = d
            steps[j] = (start + best_delta) % FLATTEN_STEPS
            angles[j] = steps[j] * FLATTEN_STEP
            if best_delta != 0:
                changed = True
        if not changed:
            break
    return steps


@njit(cache=True, nogil=True)
def local_search(
    base, ridx, rptr, axes, angles0, q0, t0, values, origin, spacing,
    step_t, step_r, step_a, min_step_t, max_iter,
):
    """Steepest-ascent pose refinement with a halving step schedule.

    Neighbour order: translate +x -x +y -y +z -z, rotate about the
    centroid +x -x +y -y +z -z, then +/- each torsion.  The first best
    neighbour wins if it beats the current score by more than
    ``IMPROVE_TOL``.  Returns ``(q, t, angles, score, iterations,
    evaluations)`` where evaluations counts poses scored.
    """
    n = base.shape[0]
    m = axes.shape[0]
    q = q0.copy()
    t = t0.copy()
    angles = angles0.copy()
    R = np.empty((3, 3))
    quat_matrix(q, R)
    local = np.empty_like(base)
    torsion_conformation(base, ridx, rptr, axes, angles, local)
    X = np.empty_like(base)
    rigid_inplace(local, R, t, X)
    g = np.empty(n)
    nx, ny, nz = values.shape
    flat = values.ravel()
    current = grid_values(values, origin, spacing, X, g)
    evals = 1

    cand = np.empty_like(base)
    best_X = np.empty_like(base)
    cand_q = np.empty(4)
    cand_t = np.empty(3)
    cand_R = np.empty((3, 3))
    best_q = np.empty(4)
    best_t = np.empty(3)
    rq = np.empty(4)
    Rr = np.empty((3, 3))
    cen = np.empty(3)

    iterations = 0
    while iterations < max_iter:
        iterations += 1
        best = current + IMPROVE_TOL
        best_k = -1
        for d in range(3):
            cen[d] = 0.0
            for i in range(n):
                cen[d] += X[i, d]
            cen[d] /= n
        # rigid translations
        for k in range(6):
            axis = k // 2
            sign = 1.0 if k % 2 == 0 else -1.0
            cand_t[:] = t
            cand_t[axis] += sign * step_t
            rigid_inplace(local, R, cand_t, cand)
            v = 0.0
            for i in range(n):
                v += _sample(flat, nx, ny, nz, origin, spacing, cand[i, 0], cand[i, 1], cand[i, 2])
            evals += 1
            if v > best:
                best = v
                best_k = k
                best_q[:] = q
                best_t[:] = cand_t
                best_X[:, :] = cand
        # rigid rotations about the centroid
        half = 0.5 * step_r
        for k in range(6):
            axis = k // 2
            sign = 1.0 if k % 2 == 0 else -1.0
            rq[0] = math.cos(half)
            rq[1] = 0.0
            rq[2] = 0.0
            rq[3] = 0.0
            rq[1 + axis] = sign * math.sin(half)
            quat_mul_normalized(rq, q, cand_q)
            quat_matrix(rq, Rr)
            for d in range(3):
                cand_t[d] = (
                    Rr[d, 0] * (t[0] - cen[0]) + Rr[d, 1] * (t[1] - cen[1]) + Rr[d, 2] * (t[2] - cen[2]) + cen[d]
                )
            quat_matrix(cand_q, cand_R)
            rigid_inplace(local, cand_R, cand_t, cand)
            v = 0.0
            for i in range(n):
                v += _sample(flat, nx, ny, nz, origin, spacing, cand[i, 0], cand[i, 1], cand[i, 2])
            evals += 1
            if v > best:
                best = v
                best_k = 6 + k
                best_q[:] = cand_q
                best_t[:] = cand_t
                best_X[:, :] = cand
        # torsions: rotate the right fragment of the current conformation in
        # place of a full rebuild; accepted moves are rebuilt exactly below
        for j in range(m):
            a = axes[j, 0]
            b = axes[j, 1]
            right_sum = 0.0
            for p in range(rptr[j], rptr[j + 1]):
                right_sum += g[ridx[p]]
            ax = X[a, 0]
            ay = X[a, 1]
            az = X[a, 2]
            ux = X[b, 0] - ax
            uy = X[b, 1] - ay
            uz = X[b, 2] - az
            norm = math.sqrt(ux * ux + uy * uy + uz * uz)
            ux /= norm
            uy /= norm
            uz /= norm
            for s in range(2):
                ang = step_a if s == 0 else -step_a
                c = math.cos(ang)
                sn = math.sin(ang)
                moved = 0.0
                for p in range(rptr[j], rptr[j + 1]):
                    i = ridx[p]
                    vx = X[i, 0] - ax
                    vy = X[i, 1] - ay
                    vz = X[i, 2] - az
                    dot = (ux * vx + uy * vy + uz * vz) * (1.0 - c)
                    moved += _sample(
                        flat, nx, ny, nz, origin, spacing,
                        ax + vx * c + (uy * vz - uz * vy) * sn + ux * dot,
                        ay + vy * c + (uz * vx - ux * vz) * sn + uy * dot,
                        az + vz * c + (ux * vy - uy * vx) * sn + uz * dot,
                    )
                v = current - right_sum + moved
                evals += 1
                if v > best:
                    best = v
                    best_k = 12 + 2 * j + s
        if best_k < 0:
            step_t *= 0.5
            step_r *= 0.5
            step_a *= 0.5
            if step_t < min_step_t:
                break
            continue
        if best_k < 12:
            X[:, :] = best_X
            q[:] = best_q
            t[:] = best_t
            quat_matrix(q, R)
        else:
            j = (best_k - 12) // 2
            angles[j] += step_a if (best_k - 12) % 2 == 0 else -step_a
            torsion_conformation(base, ridx, rptr, axes, angles, local)
            rigid_inplace(local, R, t, X)
        current = grid_values(values, origin, spacing, X, g)
    return q, t, angles, current, iterations, evals


@njit(cache=True, nogil=True)
def start_translations(Q, cen, center):
    """``center - R(q) @ cen`` for every quaternion row of ``Q``."""
    k = Q.shape[0]
    T = np.empty((k, 3))
    R = np.empty((3, 3))
    for r in range(k):
        quat_matrix(Q[r], R)
        for d in range(3):
            T[r, d] = center[d] - (R[d, 0] * cen[0] + R[d, 1] * cen[1] + R[d, 2] * cen[2])
    return T


@njit(cache=True, nogil=True)
def materialize_batch(base, ridx, rptr, axes, A, Q, T):
    """:func:`materialize` for every row of ``A``, ``Q`` and ``T``."""
    out = np.empty((Q.shape[0], base.shape[0], 3))
    for r in range(Q.shape[0]):
        out[r] = materialize(base, ridx, rptr, axes, A[r], Q[r], T[r])
    return out


@njit(cache=True, nogil=True)
def search_batch(
    base, ridx, rptr, axes, angles0, Q0, T0, values, origin, spacing,
    step_t, step_r, step_a, min_step_t, max_iter,
):
    """:func:`local_search` from each starting pose ``(Q0[r], T0[r])`` sharing ``angles0``."""
    k = Q0.shape[0]
    Q = np.empty((k, 4))
    T = np.empty((k, 3))
    A = np.empty((k, angles0.shape[0]))
    scores = np.empty(k)
    iterations = np.empty(k, dtype=np.int64)
    evals = np.empty(k, dtype=np.int64)
    for r in range(k):
        q, t, a, score, it, ev = local_search(
            base, ridx, rptr, axes, angles0, Q0[r], T0[r], values, origin, spacing,
            step_t, step_r, step_a, min_step_t, max_iter,
        )
        Q[r] = q
        T[r] = t
        A[r] = a
        scores[r] = score
        iterations[r] = it
        evals[r] = ev
    return Q, T, A, scores, iterations, evals


@njit(cache=True, nogil=True)
def exhaustive_scan(offsets, values, origin, spacing, lattice_step, lo, counts):
    """Best total grid score over every lattice centroid and every offset set.

    ``offsets[r]`` holds the atom positions relative to the centroid for
    orientation ``r``.  Lattice points are visited x-fastest; ties keep the
    first point, then the first orientation.
    """
    n_rot = offsets.shape[0]
    n = offsets.shape[1]
    nx, ny, nz = values.shape
    flat = values.ravel()
    best = -np.inf
    best_r = -1
    best_c = np.zeros(3)
    for kz in range(counts[2]):
        cz = lo[2] + kz * lattice_step
        for ky in range(counts[1]):
            cy = lo[1] + ky * lattice_step
            for kx in range(counts[0]):
                cx = lo[0] + kx * lattice_step
                for r in range(n_rot):
                    total = 0.0
                    for i in range(n):
                        total += _sample(
                            flat, nx, ny, nz, origin, spacing,
                            cx + offsets[r, i, 0], cy + offsets[r, i, 1], cz + offsets[r, i, 2],
                        )
                    if total > best:
                        best = total
                        best_r = r
                        best_c[0] = cx
                        best_c[1] = cy
                        best_c[2] = cz
    return best, best_r, best_c
