"""Compiled inner loops for the engine.

These mirror the reference implementations in ``attachment`` and
``scenario.wall_count_matrix`` one to one; the test suite replays whole runs
through both paths and requires identical event logs. Event kinds are coded
as indices into ``attachment.EVENT_KINDS``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

K_M2M, K_P2P, K_M2P, K_DROP, K_B2M = 0, 1, 2, 3, 4
NONE = -1


@njit(cache=True)
def wall_counts(points, targets, walls):
    P, T, W = points.shape[0], targets.shape[0], walls.shape[0]
    q = np.zeros((P, T), dtype=np.int64)
    for w in range(W):
        x1, y1, x2, y2 = walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3]
        for p in range(P):
            ax, ay = points[p, 0], points[p, 1]
            d1 = (x2 - x1) * (ay - y1) - (y2 - y1) * (ax - x1)
            if d1 == 0.0:
                continue
            for t in range(T):
                bx, by = targets[t, 0], targets[t, 1]
                d2 = (x2 - x1) * (by - y1) - (y2 - y1) * (bx - x1)
                if d1 * d2 < 0:
                    d3 = (bx - ax) * (y1 - ay) - (by - ay) * (x1 - ax)
                    d4 = (bx - ax) * (y2 - ay) - (by - ay) * (x2 - ax)
                    if d3 * d4 < 0:
                        q[p, t] += 1
    return q


@njit(cache=True)
def target_sides(targets, walls):
    """Orientation of every target against every wall line, shape (W, T)."""
    W, T = walls.shape[0], targets.shape[0]
    out = np.empty((W, T))
    for w in range(W):
        x1, y1, x2, y2 = walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3]
        for t in range(T):
            out[w, t] = (x2 - x1) * (targets[t, 1] - y1) - (y2 - y1) * (targets[t, 0] - x1)
    return out


@njit(cache=True)
def wall_counts_sided(points, targets, walls, sides):
    """wall_counts with the target-side orientations precomputed."""
    P, T, W = points.shape[0], targets.shape[0], walls.shape[0]
    q = np.zeros((P, T), dtype=np.int64)
    for p in range(P):
        ax, ay = points[p, 0], points[p, 1]
        for w in range(W):
            x1, y1, x2, y2 = walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3]
            d1 = (x2 - x1) * (ay - y1) - (y2 - y1) * (ax - x1)
            if d1 == 0.0:
                continue
            for t in range(T):
                if d1 * sides[w, t] < 0:
                    bx, by = targets[t, 0], targets[t, 1]
                    d3 = (bx - ax) * (y1 - ay) - (by - ay) * (x1 - ax)
                    d4 = (bx - ax) * (y2 - ay) - (by - ay) * (x2 - ax)
                    if d3 * d4 < 0:
                        q[p, t] += 1
    return q


def side_partition(sides):
    """Per wall, target ids ordered negative side first, positive side last.

    Returns (order, neg_end, pos_start): targets order[w, :neg_end[w]] lie on
    the negative side of wall w, order[w, pos_start[w]:] on the positive side.
    """
    W, T = sides.shape
    order = np.empty((W, T), dtype=np.int64)
    neg_end = np.empty(W, dtype=np.int64)
    pos_start = np.empty(W, dtype=np.int64)
    for w in range(W):
        neg, zero, pos = (np.flatnonzero(sides[w] < 0), np.flatnonzero(sides[w] == 0),
                          np.flatnonzero(sides[w] > 0))
        order[w] = np.concatenate([neg, zero, pos])
        neg_end[w], pos_start[w] = len(neg), len(neg) + len(zero)
    return order, neg_end, pos_start


@njit(cache=True)
def wall_counts_split(points, targets, walls, order, neg_end, pos_start):
    """wall_counts visiting only targets on the far side of each wall."""
    P, T, W = points.shape[0], targets.shape[0], walls.shape[0]
    q = np.zeros((P, T), dtype=np.int64)
    for p in range(P):
        ax, ay = points[p, 0], points[p, 1]
        for w in range(W):
            x1, y1, x2, y2 = walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3]
            d1 = (x2 - x1) * (ay - y1) - (y2 - y1) * (ax - x1)
            if d1 > 0.0:
                lo, hi = 0, neg_end[w]
            elif d1 < 0.0:
                lo, hi = pos_start[w], T
            else:
                continue
            for k in range(lo, hi):
                t = order[w, k]
                bx, by = targets[t, 0], targets[t, 1]
                d3 = (bx - ax) * (y1 - ay) - (by - ay) * (x1 - ax)
                d4 = (bx - ax) * (y2 - ay) - (by - ay) * (x2 - ax)
                if d3 * d4 < 0:
                    q[p, t] += 1
    return q


@njit(cache=True)
def dwell_time(px, py, heading, speed, cx, cy, r):
    if speed == 0.0:
        return math.inf
    ux, uy = math.cos(heading), math.sin(heading)
    fx, fy = px - cx, py - cy
    b = fx * ux + fy * uy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    if disc < 0.0:
        return 0.0
    root = math.sqrt(disc)
    t_exit = -b + root
    if t_exit <= 0.0:
        return 0.0
    t_enter = max(-b - root, 0.0)
    return (t_exit - t_enter) / speed


@njit(cache=True)
def _order(row, lo, hi, threshold):
    """Cells in [lo, hi) with row > threshold, best first, ties to lowest id."""
    n = 0
    out = np.empty(hi - lo, dtype=np.int64)
    for j in range(lo, hi):
        if row[j] > threshold:
            # insertion keeps equal values in ascending id order
            k = n
            while k > 0 and row[out[k - 1]] < row[j]:
                out[k] = out[k - 1]
                k -= 1
            out[k] = j
            n += 1
    return out[:n]


@njit(cache=True)
def _dwell_ok(i, j, dwell_on, t_exp, pos, heading, speed, centers, radii):
    if not dwell_on:
        return True
    return dwell_time(pos[i, 0], pos[i, 1], heading[i], speed[i],
                      centers[j, 0], centers[j, 1], radii[j]) >= t_exp


@njit(cache=True)
def decide(eta, macro_link, phantom_link, K, capacity, access, num_macros,
           eta_m_th, eta_ph_th, H_m, H_ph, t_exp, dwell_on, baseline,
           pos, heading, speed, centers, radii):
    """One step of handover decisions for all users in id order.

    Mutates the link arrays and K in place and returns (user, kind, source,
    target) rows.
    """
    U = eta.shape[0]
    C = eta.shape[1]
    M = num_macros
    ev = np.empty((3 * U, 4), dtype=np.int64)
    n = 0
    for i in range(U):
        row = eta[i]
        # macro branch
        j = macro_link[i]
        if j != NONE and row[j] < eta_m_th:
            serving = row[j]
            for t in _order(row, 0, M, eta_m_th):
                if row[t] - serving > H_m and K[t] < capacity[t]:
                    K[j] -= 1
                    K[t] += 1
                    macro_link[i] = t
                    ev[n, 0], ev[n, 1], ev[n, 2], ev[n, 3] = i, K_M2M, j, t
                    n += 1
                    break
        # phantom branch
        j = phantom_link[i]
        if j != NONE and row[j] < eta_ph_th:
            serving = row[j]
            moved = False
            for t in _order(row, M, C, eta_ph_th):
                if (row[t] - serving > H_ph and access[i, t - M] and K[t] < capacity[t]
                        and _dwell_ok(i, t, dwell_on, t_exp, pos, heading, speed, centers, radii)):
                    K[j] -= 1
                    K[t] += 1
                    phantom_link[i] = t
                    ev[n, 0], ev[n, 1], ev[n, 2], ev[n, 3] = i, K_P2P, j, t
                    n += 1
                    moved = True
                    break
            if not moved:
                if baseline:
                    # umbrella macro of last resort, best first, no threshold
                    for t in _order(row, 0, M, -math.inf):
                        if K[t] < capacity[t]:
                            K[j] -= 1
                            K[t] += 1
                            phantom_link[i] = NONE
                            macro_link[i] = t
                            ev[n, 0], ev[n, 1], ev[n, 2], ev[n, 3] = i, K_B2M, j, t
                            n += 1
                            break
                else:
                    K[j] -= 1
                    phantom_link[i] = NONE
                    ev[n, 0], ev[n, 1], ev[n, 2], ev[n, 3] = i, K_DROP, j, NONE
                    n += 1
        # macro to phantom
        if phantom_link[i] == NONE and not (baseline and macro_link[i] == NONE):
            for t in _order(row, M, C, eta_ph_th):
                if (access[i, t - M] and K[t] < capacity[t]
                        and _dwell_ok(i, t, dwell_on, t_exp, pos, heading, speed, centers, radii)):
                    src = macro_link[i]
                    if baseline:
                        K[src] -= 1
                        macro_link[i] = NONE
                    K[t] += 1
                    phantom_link[i] = t
                    ev[n, 0], ev[n, 1], ev[n, 2], ev[n, 3] = i, K_M2P, src, t
                    n += 1
                    break
    return ev[:n]


@njit(cache=True)
def labels(pos, phantom_link, centers, radii, num_macros):
    U = pos.shape[0]
    C = centers.shape[0]
    out = np.zeros(U, dtype=np.int8)
    for i in range(U):
        if phantom_link[i] != NONE:
            out[i] = 2
            continue
        for j in range(num_macros, C):
            dx = pos[i, 0] - centers[j, 0]
            dy = pos[i, 1] - centers[j, 1]
            if dx * dx + dy * dy <= radii[j] * radii[j]:
                out[i] = 1
                break
    return out


@njit(cache=True)
def link_budget(pos, centers, tx_dbm, is_macro, walls, order, neg_end, pos_start, shadow, indoor, l_ow, w_db, noise_mw,
                members, offsets):
    """SINR for every (user, cell) from positions and a shadowing draw.

    ``members[offsets[c]:offsets[c + 1]]`` lists the cells of interference
    class c in ascending id order.
    """
    U, C = pos.shape[0], centers.shape[0]
    rx = np.empty((U, C))
    eta = np.empty((U, C))
    q = wall_counts_split(pos, centers, walls, order, neg_end, pos_start) if indoor else np.zeros((U, C), dtype=np.int64)
    # dB -> natural-log power units; 10*log10(d) = (10/ln10) * 0.5 * ln(d^2)
    k10 = math.log(10.0) / 10.0
    for i in range(U):
        ax, ay = pos[i, 0], pos[i, 1]
        for j in range(C):
            dx, dy = ax - centers[j, 0], ay - centers[j, 1]
            ln_d2 = math.log(max(dx * dx + dy * dy, 1.0))
            if indoor:
                if is_macro[j]:
                    loss = (15.3 + q[i, j] * w_db + l_ow) * k10 + 1.88 * ln_d2
                else:
                    loss = (37.0 + q[i, j] * w_db) * k10 + ln_d2
            elif is_macro[j]:
                loss = 15.3 * k10 + 1.88 * ln_d2
            else:
                loss = max(15.3 * k10 + 1.88 * ln_d2, 3.0 * k10 + ln_d2) + l_ow * k10
            rx[i, j] = math.exp((tx_dbm[j] - shadow[i, j]) * k10 - loss)
        for c in range(offsets.shape[0] - 1):
            lo, hi = offsets[c], offsets[c + 1]
            # prefix and suffix sums so nothing is subtracted
            acc = 0.0
            for k in range(lo, hi):
                j = members[k]
                eta[i, j] = acc
                acc += rx[i, j]
            acc = 0.0
            for k in range(hi - 1, lo - 1, -1):
                j = members[k]
                eta[i, j] += acc
                acc += rx[i, j]
        for j in range(C):
            eta[i, j] = rx[i, j] / (eta[i, j] + noise_mw)
    return eta


# ---------------------------------------------------------------------------
# mobility: mirrors scenario.Region.reflect step for step


@njit(cache=True)
def _contains(kinds, shapes, x, y):
    for s in range(kinds.shape[0]):
        a, b, c, d = shapes[s, 0], shapes[s, 1], shapes[s, 2], shapes[s, 3]
        if kinds[s] == 0:
            dx, dy = x - a, y - b
            if dx * dx + dy * dy <= c * c:
                return True
        elif a <= x and x <= c and b <= y and y <= d:
            return True
    return False


@njit(cache=True)
def _same_shape(kinds, shapes, ax, ay, bx, by):
    for s in range(kinds.shape[0]):
        a, b, c, d = shapes[s, 0], shapes[s, 1], shapes[s, 2], shapes[s, 3]
        if kinds[s] == 0:
            r2 = c * c
            dx, dy = ax - a, ay - b
            ex, ey = bx - a, by - b
            if dx * dx + dy * dy <= r2 and ex * ex + ey * ey <= r2:
                return True
        elif (a <= ax and ax <= c and b <= ay and ay <= d
              and a <= bx and bx <= c and b <= by and by <= d):
            return True
    return False


@njit(cache=True)
def _chord(kind, sp, px, py, dx, dy):
    if kind == 0:
        fx, fy = px - sp[0], py - sp[1]
        a = dx * dx + dy * dy
        b = 2.0 * (fx * dx + fy * dy)
        c = fx * fx + fy * fy - sp[2] * sp[2]
        disc = b * b - 4 * a * c
        if a == 0.0 or disc < 0.0:
            return False, 0.0, 0.0
        sq = math.sqrt(disc)
        return True, (-b - sq) / (2 * a), (-b + sq) / (2 * a)
    t0, t1 = -math.inf, math.inf
    for axis in range(2):
        p = px if axis == 0 else py
        d = dx if axis == 0 else dy
        lo, hi = sp[axis], sp[axis + 2]
        if d == 0.0:
            if p < lo or p > hi:
                return False, 0.0, 0.0
            continue
        a, b = (lo - p) / d, (hi - p) / d
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
    if t0 > t1:
        return False, 0.0, 0.0
    return True, t0, t1


@njit(cache=True)
def _normal(kind, sp, x, y):
    if kind == 0:
        nx, ny = x - sp[0], y - sp[1]
        n = math.sqrt(nx * nx + ny * ny)
        return nx / n, ny / n
    d0, d1, d2, d3 = abs(x - sp[0]), abs(x - sp[2]), abs(y - sp[1]), abs(y - sp[3])
    k, best = 0, d0
    if d1 < best:
        k, best = 1, d1
    if d2 < best:
        k, best = 2, d2
    if d3 < best:
        k = 3
    if k == 0:
        return -1.0, 0.0
    if k == 1:
        return 1.0, 0.0
    if k == 2:
        return 0.0, -1.0
    return 0.0, 1.0


@njit(cache=True)
def _pull_inside(kind, sp, x, y):
    if kind == 0:
        nx, ny = x - sp[0], y - sp[1]
        n = math.sqrt(nx * nx + ny * ny)
        if n <= sp[2]:
            return x, y
        k = sp[2] * (1.0 - 1e-12) / n
        return sp[0] + k * nx, sp[1] + k * ny
    return min(max(x, sp[0]), sp[2]), min(max(y, sp[1]), sp[3])


@njit(cache=True)
def _settle(kinds, shapes, x, y):
    if _contains(kinds, shapes, x, y):
        return x, y
    bx, by, best = x, y, math.inf
    for s in range(kinds.shape[0]):
        qx, qy = _pull_inside(kinds[s], shapes[s], x, y)
        d = (qx - x) * (qx - x) + (qy - y) * (qy - y)
        if d < best:
            bx, by, best = qx, qy, d
    return bx, by


@njit(cache=True)
def _exit(kinds, shapes, px, py, dx, dy):
    S = kinds.shape[0]
    lo = np.empty(S)
    hi = np.empty(S)
    idx = np.empty(S, dtype=np.int64)
    n = 0
    for s in range(S):
        ok, t0, t1 = _chord(kinds[s], shapes[s], px, py, dx, dy)
        if ok and t1 >= 0.0:
            lo[n], hi[n], idx[n] = t0, t1, s
            n += 1
    t_reach = 0.0
    shape = -1
    changed = True
    while changed:
        changed = False
        for k in range(n):
            if lo[k] <= t_reach + 1e-12 and hi[k] > t_reach:
                t_reach, shape = hi[k], idx[k]
                changed = True
    return t_reach, shape


@njit(cache=True)
def reflect(kinds, shapes, px, py, dx, dy):
    for _ in range(16):
        t, shape = _exit(kinds, shapes, px, py, dx, dy)
        if t >= 1.0:
            x, y = _settle(kinds, shapes, px + dx, py + dy)
            return x, y, dx, dy
        if shape < 0:
            x, y = _settle(kinds, shapes, px, py)
            return x, y, -dx, -dy
        hx, hy = px + t * dx, py + t * dy
        nx, ny = _normal(kinds[shape], shapes[shape], hx, hy)
        rdx, rdy = (1.0 - t) * dx, (1.0 - t) * dy
        dot = rdx * nx + rdy * ny
        rdx, rdy = rdx - 2 * dot * nx, rdy - 2 * dot * ny
        fdot = dx * nx + dy * ny
        dx_full, dy_full = dx - 2 * fdot * nx, dy - 2 * fdot * ny
        px, py, dx, dy = hx, hy, rdx, rdy
        if rdx == 0.0 and rdy == 0.0:
            x, y = _settle(kinds, shapes, px, py)
            return x, y, dx_full, dy_full
    x, y = _settle(kinds, shapes, px, py)
    return x, y, dx, dy


@njit(cache=True)
def advance(pos, step, heading, kinds, shapes):
    """Compiled scenario.advance_positions; ``step`` is the free displacement."""
    U = pos.shape[0]
    new = np.empty_like(pos)
    out_heading = heading.copy()
    two_pi = 2 * math.pi
    for i in range(U):
        sx, sy = step[i, 0], step[i, 1]
        x, y = pos[i, 0] + sx, pos[i, 1] + sy
        if _same_shape(kinds, shapes, pos[i, 0], pos[i, 1], x, y):
            new[i, 0], new[i, 1] = x, y
            continue
        x, y, ux, uy = reflect(kinds, shapes, pos[i, 0], pos[i, 1], sx, sy)
        new[i, 0], new[i, 1] = x, y
        if ux != sx or uy != sy:
            a = math.atan2(uy, ux) % two_pi
            out_heading[i] = 0.0 if a >= two_pi else a
    return new, out_heading
