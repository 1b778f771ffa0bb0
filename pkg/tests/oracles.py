"""Independent oracles the test suite checks the library against.

Everything here is deliberately slow and written by a different route than
the package code: geometry in exact rational arithmetic, matching by
definitional linear scans, the noise fixed point by nested bisection with
no special functions, and cell coverage by dense sampling. None of it
imports from fedtraj, so a shared bug would have to be written twice.
"""

from __future__ import annotations

import math
from fractions import Fraction

from scipy.integrate import quad

Frac = Fraction


def _f(x) -> Fraction:
    return Fraction(float(x))


# ---------------------------------------------------------------------------
# exact planar geometry


def frac_point_seg_d2(px, py, ax, ay, bx, by) -> Fraction:
    """Squared point-to-segment distance, exact."""
    px, py, ax, ay, bx, by = map(_f, (px, py, ax, ay, bx, by))
    ux, uy = bx - ax, by - ay
    den = ux * ux + uy * uy
    if den == 0:
        ex, ey = px - ax, py - ay
        return ex * ex + ey * ey
    t = ((px - ax) * ux + (py - ay) * uy) / den
    t = max(Fraction(0), min(Fraction(1), t))
    ex, ey = px - (ax + t * ux), py - (ay + t * uy)
    return ex * ex + ey * ey


def _orient(ax, ay, bx, by, cx, cy) -> Fraction:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, cx, cy) -> bool:
    """c collinear with a-b: does c lie between them?"""
    return min(ax, bx) <= cx <= max(ax, bx) and min(ay, by) <= cy <= max(ay, by)


def frac_segments_intersect(p1, p2, p3, p4) -> bool:
    """Closed-segment intersection test (touching counts), exact."""
    (ax, ay), (bx, by) = (map(_f, p1), map(_f, p2))
    (cx, cy), (dx, dy) = (map(_f, p3), map(_f, p4))
    d1 = _orient(cx, cy, dx, dy, ax, ay)
    d2 = _orient(cx, cy, dx, dy, bx, by)
    d3 = _orient(ax, ay, bx, by, cx, cy)
    d4 = _orient(ax, ay, bx, by, dx, dy)
    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0) and (
        (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0
    ):
        return True
    if d1 == 0 and _on_segment(cx, cy, dx, dy, ax, ay):
        return True
    if d2 == 0 and _on_segment(cx, cy, dx, dy, bx, by):
        return True
    if d3 == 0 and _on_segment(ax, ay, bx, by, cx, cy):
        return True
    if d4 == 0 and _on_segment(ax, ay, bx, by, dx, dy):
        return True
    return False


def frac_point_box_d2(px, py, x0, y0, x1, y1) -> Fraction:
    px, py, x0, y0, x1, y1 = map(_f, (px, py, x0, y0, x1, y1))
    cx = min(max(px, x0), x1)
    cy = min(max(py, y0), y1)
    return (px - cx) ** 2 + (py - cy) ** 2


def frac_seg_box_d2(ox, oy, dx, dy, x0, y0, x1, y1) -> Fraction:
    """Squared distance from a segment to a solid axis-aligned box, exact."""
    ox, oy, dx, dy, x0, y0, x1, y1 = map(_f, (ox, oy, dx, dy, x0, y0, x1, y1))
    if x0 <= ox <= x1 and y0 <= oy <= y1:
        return Fraction(0)
    if x0 <= dx <= x1 and y0 <= dy <= y1:
        return Fraction(0)
    corners = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
    for a, b in zip(corners, corners[1:] + corners[:1]):
        if frac_segments_intersect((ox, oy), (dx, dy), a, b):
            return Fraction(0)
    best = min(frac_point_seg_d2(cx, cy, ox, oy, dx, dy) for cx, cy in corners)
    best = min(best, frac_point_box_d2(ox, oy, x0, y0, x1, y1))
    best = min(best, frac_point_box_d2(dx, dy, x0, y0, x1, y1))
    return best


# ---------------------------------------------------------------------------
# matching, by the definition


def _segments_of(points) -> list[tuple]:
    pts = [tuple(map(float, p)) for p in points]
    if len(pts) == 1:
        return [(pts[0], pts[0])]
    return list(zip(pts, pts[1:]))


def plain_matches(db_points, q_points, tau) -> bool:
    """Every query point within tau of the interpolated location, exact."""
    pts = [tuple(map(float, p)) for p in db_points]
    ts = [_f(p[0]) for p in pts]
    tau2 = _f(tau) ** 2
    for q in q_points:
        qt, qx, qy = map(_f, q)
        if qt < ts[0] or qt > ts[-1]:
            return False
        loc = None
        for i in range(len(ts) - 1):
            if ts[i] <= qt <= ts[i + 1]:
                dt = ts[i + 1] - ts[i]
                if dt == 0:
                    loc = (_f(pts[i][1]), _f(pts[i][2]))
                else:
                    f = (qt - ts[i]) / dt
                    loc = (
                        _f(pts[i][1]) + f * (_f(pts[i + 1][1]) - _f(pts[i][1])),
                        _f(pts[i][2]) + f * (_f(pts[i + 1][2]) - _f(pts[i][2])),
                    )
                break
        if loc is None:  # single-sample trajectory, qt equals its one timestamp
            loc = (_f(pts[0][1]), _f(pts[0][2]))
        if (qx - loc[0]) ** 2 + (qy - loc[1]) ** 2 > tau2:
            return False
    return True


def _q1000(v) -> int:
    # float banker's rounding after the scale-up, like np.rint
    return round(float(v) * 1000.0)


def quantized_matches(db_points, q_points, tau) -> bool:
    """The integer predicate the secure sessions evaluate, in plain ints."""
    segs = _segments_of(db_points)
    s = [
        tuple(_q1000(v) for v in (o[0], o[1], o[2], d[0], d[1], d[2]))
        for o, d in segs
    ]
    tq = math.ceil(round(float(tau) * 1000.0, 6))
    for q in q_points:
        qt, qx, qy = (_q1000(v) for v in q)
        ok = False
        for ot, ox, oy, dt_, dx, dy in s:
            if not ot <= qt <= dt_:
                continue
            delta = dt_ - ot
            if delta == 0:
                hit = (qx - ox) ** 2 + (qy - oy) ** 2 <= tq * tq
            else:
                ex = (qx - ox) * delta - (qt - ot) * (dx - ox)
                ey = (qy - oy) * delta - (qt - ot) * (dy - oy)
                hit = ex * ex + ey * ey <= tq * tq * delta * delta
            if hit:
                ok = True
                break
        if not ok:
            return False
    return True


# ---------------------------------------------------------------------------
# cell coverage by dense sampling


def dense_traversal_cells(points, tau, origin_x, origin_y, cell_side, step):
    """Cells within tau of any sampled location along the path.

    Sampling at arc-length ``step`` can only miss cells whose clearance is
    within step/2 of tau (the distance along a segment is 1-Lipschitz in arc
    length), so the result is a near-complete subset of the true cover.
    """
    tau = float(tau)
    L = float(cell_side)
    found: set[tuple[int, int]] = set()
    for (ot, ox, oy), (dt_, dx, dy) in _segments_of(points):
        length = math.hypot(dx - ox, dy - oy)
        n = max(1, math.ceil(length / step))
        for k in range(n + 1):
            f = k / n
            px, py = ox + f * (dx - ox), oy + f * (dy - oy)
            ix0 = math.floor((px - tau - origin_x) / L)
            ix1 = math.floor((px + tau - origin_x) / L)
            iy0 = math.floor((py - tau - origin_y) / L)
            iy1 = math.floor((py + tau - origin_y) / L)
            for ix in range(ix0, ix1 + 1):
                for iy in range(iy0, iy1 + 1):
                    if (ix, iy) in found:
                        continue
                    x0 = origin_x + ix * L
                    y0 = origin_y + iy * L
                    cx = min(max(px, x0), x0 + L)
                    cy = min(max(py, y0), y0 + L)
                    if (px - cx) ** 2 + (py - cy) ** 2 <= tau * tau:
                        found.add((ix, iy))
    return found


# ---------------------------------------------------------------------------
# noise numerics without special functions


def cdf_closed(eps: float, r: float) -> float:
    return 1.0 - (1.0 + eps * r) * math.exp(-eps * r)


def cdf_by_quadrature(eps: float, r: float) -> float:
    """Radial CDF integrated numerically from the density."""
    val, _ = quad(lambda t: eps * eps * t * math.exp(-eps * t), 0.0, r)
    return val


def inverse_cdf_bisect(eps: float, p: float) -> float:
    """Invert the radial CDF by pure bisection."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p={p} outside [0, 1)")
    if p == 0.0:
        return 0.0
    hi = 1.0
    while cdf_closed(eps, hi) < p:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf_closed(eps, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def noise_bound_bisect(eps: float, density: float, p0: float):
    """Solve the tail-mass fixed point by bisection; returns (mass, radius, side).

    mass = density * pi * r(mass)^2 with r(m) the radius holding 1 - m of the
    planar Laplace; the left side grows from 0 while the right side shrinks
    to 0, so the difference crosses zero exactly once on (0, 1).
    """

    def gap(m: float) -> float:
        return density * math.pi * inverse_cdf_bisect(eps, 1.0 - m) ** 2 - m

    lo, hi = 1e-15, 1.0 - 1e-12
    if gap(lo) < 0 or gap(hi) > 0:
        raise ValueError(f"no crossing for eps={eps}, density={density}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    mass = 0.5 * (lo + hi)
    radius = inverse_cdf_bisect(eps, 1.0 - mass)
    side = radius / (2.0 * (1.0 - math.sqrt(p0)))
    return mass, radius, side


def match_margin(db_points, q_points, tau) -> float:
    """Smallest relative gap between any candidate distance and tau, exact.

    Near-zero margins mark knife-edge cases where a float pipeline may
    legitimately disagree with exact arithmetic.
    """
    pts = [tuple(map(float, p)) for p in db_points]
    ts = [_f(p[0]) for p in pts]
    tau2 = _f(tau) ** 2
    best = None
    for q in q_points:
        qt = _f(q[0])
        for i in range(max(1, len(pts) - 1)):
            j = min(i + 1, len(pts) - 1)
            if not ts[i] <= qt <= ts[j]:
                continue
            dt = ts[j] - ts[i]
            if dt == 0:
                lx, ly = _f(pts[i][1]), _f(pts[i][2])
            else:
                f = (qt - ts[i]) / dt
                lx = _f(pts[i][1]) + f * (_f(pts[j][1]) - _f(pts[i][1]))
                ly = _f(pts[i][2]) + f * (_f(pts[j][2]) - _f(pts[i][2]))
            d2 = (_f(q[1]) - lx) ** 2 + (_f(q[2]) - ly) ** 2
            gap = abs(d2 - tau2) / max(tau2, Fraction(1))
            best = gap if best is None else min(best, gap)
    return float(best) if best is not None else 1.0
