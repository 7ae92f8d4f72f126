"""Admissible-signal sets for reserve requests.

Two set families over the normalized request vector w in R^N:

- PC: the unit box, ``|w_k| <= 1`` for every step.
- PEC: the unit box intersected with bounds on non-overlapping window sums,
  ``lo <= sum_{k in window} w_k <= hi`` (fresh windows have ``hi = -lo =
  eps * T``).

Windows never overlap, so the PEC polytope is a Cartesian product of
per-window polytopes.  Worst-case linear queries therefore decompose into
small per-window problems solved by an exact greedy (with closed-form dual
multipliers), which is what the robust counterpart builders and the MPC
tightening consume.  Windows truncated by the horizon keep the bound implied
by admissible out-of-horizon completion.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

PC = "PC"
PEC = "PEC"


class UncertaintyError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """One window-sum constraint: lo <= sum(w[start:start+length]) <= hi."""

    start: int
    length: int
    lo: float
    hi: float

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class RealizedBiasState:
    """Running bias of the active averaging window.

    ``window_start`` is the absolute step index the window began at, ``t`` the
    current absolute step, ``w_p`` the sum of realized signal values over
    ``[window_start, t)``.
    """

    window_start: int
    t: int
    w_p: float

    def __post_init__(self):
        elapsed = self.t - self.window_start
        if elapsed < 0:
            raise UncertaintyError("current step precedes the window start")
        if abs(self.w_p) > elapsed + 1e-9:
            raise UncertaintyError(
                f"|w_p|={abs(self.w_p):.3f} exceeds the {elapsed} elapsed steps")

    def advance(self, w_step: float, window_steps: int) -> "RealizedBiasState":
        """Accumulate one realized step; reset at window boundaries."""
        t_next = self.t + 1
        w_p = self.w_p + w_step
        if t_next - self.window_start >= window_steps:
            return RealizedBiasState(window_start=t_next, t=t_next, w_p=0.0)
        return RealizedBiasState(window_start=self.window_start, t=t_next, w_p=w_p)


@dataclass(frozen=True)
class UncertaintySet:
    """PC box or PEC polyhedron over the horizon-stacked signal vector."""

    kind: str
    n_steps: int
    windows: tuple[Window, ...] = ()
    eps: float | None = None
    window_steps: int | None = None

    def contains(self, w, tol: float = 1e-9) -> bool:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_steps,):
            raise UncertaintyError(f"expected vector of length {self.n_steps}")
        if np.abs(w).max(initial=0.0) > 1.0 + tol:
            return False
        for win in self.windows:
            s = float(w[win.start:win.stop].sum())
            if s > win.hi + tol or s < win.lo - tol:
                return False
        return True

    def halfplanes(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialize (A_bar, b_bar): window rows, then I, then -I."""
        n = self.n_steps
        rows = []
        rhs = []
        for win in self.windows:
            row = np.zeros(n)
            row[win.start:win.stop] = 1.0
            rows.append(row)
            rhs.append(win.hi)
            rows.append(-row)
            rhs.append(-win.lo)
        rows.append(np.eye(n))
        rhs.append(np.ones(n))
        rows.append(-np.eye(n))
        rhs.append(np.ones(n))
        a_bar = np.vstack([np.atleast_2d(r) for r in rows])
        b_bar = np.concatenate([np.atleast_1d(r) for r in rhs])
        return a_bar, b_bar


def build_pc(n_steps: int) -> UncertaintySet:
    """Unit-box admissible set of dimension ``n_steps``."""
    if n_steps < 1:
        raise UncertaintyError("horizon must be at least one step")
    return UncertaintySet(kind=PC, n_steps=int(n_steps))


def build_pec(n_steps: int, eps: float, window_steps: int,
              anchor: int = 0) -> UncertaintySet:
    """Box plus windowed-mean bounds, windows tiled back-to-back from
    ``anchor`` (an offset into the first, possibly partial, window).

    ``anchor = k`` means the horizon starts k steps into an averaging window
    whose earlier steps lie before the horizon and are treated as unrealized
    (use :func:`shrink_realized` when their sum is known).
    """
    if n_steps < 1:
        raise UncertaintyError("horizon must be at least one step")
    if not (0.0 < eps <= 1.0):
        raise UncertaintyError("bias coefficient must lie in (0, 1]")
    if not (1 <= window_steps <= n_steps):
        raise UncertaintyError("window must fit inside the horizon")
    if not (0 <= anchor < window_steps):
        raise UncertaintyError("anchor must lie inside one window")
    budget = eps * window_steps
    windows = []
    pos = 0
    lead = window_steps - anchor if anchor else 0
    if lead:
        win = _truncated_window(0, min(lead, n_steps), window_steps,
                                -budget, budget)
        if win is not None:
            windows.append(win)
        pos = lead
    while pos < n_steps:
        length = min(window_steps, n_steps - pos)
        win = _truncated_window(pos, length, window_steps, -budget, budget)
        if win is not None:
            windows.append(win)
        pos += length
    return UncertaintySet(kind=PEC, n_steps=int(n_steps), windows=tuple(windows),
                          eps=float(eps), window_steps=int(window_steps))


def _truncated_window(start, length, full_steps, lo, hi):
    """Window-sum bounds for the in-horizon part of a (possibly cut) window.

    Window steps outside the horizon (unrealized lead-in or free completion)
    relax the in-horizon bound by one unit each.  Returns None when the box
    already implies the bound; raises when the realized bias has left no
    admissible completion.
    """
    free = full_steps - length
    lo_eff = max(lo - free, -float(length))
    hi_eff = min(hi + free, float(length))
    if lo_eff > hi_eff + 1e-9 or lo_eff > length + 1e-9 \
            or hi_eff < -length - 1e-9:
        raise UncertaintyError(
            "window bounds leave no admissible completion "
            f"(lo={lo_eff:.3f}, hi={hi_eff:.3f}, length={length})")
    lo_eff = min(max(lo_eff, -float(length)), float(length))
    hi_eff = min(max(hi_eff, lo_eff), float(length))
    if hi_eff >= length and lo_eff <= -length:
        return None
    return Window(start=start, length=length, lo=lo_eff, hi=hi_eff)


def shrink_realized(pec: UncertaintySet, state: RealizedBiasState,
                    remaining: int) -> UncertaintySet:
    """Admissible-completion set over the next ``remaining`` steps given the
    realized running bias of the active window.

    The active window's bound shifts by -w_p on both sides; later windows are
    fresh; a window cut by the horizon keeps its completion-implied bound.
    """
    if pec.kind != PEC:
        raise UncertaintyError("realized-bias shrinking applies to PEC sets")
    if remaining < 1:
        raise UncertaintyError("need at least one remaining step")
    t_in_window = state.t - state.window_start
    if not (0 <= t_in_window < pec.window_steps):
        raise UncertaintyError("state inconsistent with the window layout")
    budget = pec.eps * pec.window_steps
    windows = []
    rem_active = pec.window_steps - t_in_window
    first_len = min(rem_active, remaining)
    win = _truncated_window(0, first_len, rem_active,
                            -budget - state.w_p, budget - state.w_p)
    if win is not None:
        windows.append(win)
    pos = rem_active
    while pos < remaining:
        length = min(pec.window_steps, remaining - pos)
        win = _truncated_window(pos, length, pec.window_steps, -budget, budget)
        if win is not None:
            windows.append(win)
        pos += length
    return UncertaintySet(kind=PEC, n_steps=int(remaining), windows=tuple(windows),
                          eps=pec.eps, window_steps=pec.window_steps)


# ---------------------------------------------------------------------------
# worst-case linear queries
# ---------------------------------------------------------------------------

def _window_max(a: np.ndarray, lo: float, hi: float):
    """Maximize a'w with w in [-1, 1]^len and lo <= sum(w) <= hi.

    Exact greedy: start from the sign vector, then pay the smallest |a_k|
    rates to pull the coordinate sum inside [lo, hi].  Returns
    (value, w, mu, nu) where mu, nu >= 0 are the multipliers of the upper and
    lower sum constraint (at most one is nonzero).
    """
    n = a.shape[0]
    w = np.sign(a)
    s = float(w.sum())
    value = float(np.abs(a).sum())
    if lo - 1e-12 <= s <= hi + 1e-12:
        return value, w, 0.0, 0.0
    if s > hi:
        target, direction = hi, -1.0
    else:
        target, direction = lo, +1.0
    deficit = abs(s - target)
    order = np.argsort(np.abs(a), kind="stable")
    mu = 0.0
    for k in order:
        # capacity to move w_k toward `direction` extreme
        cap = (w[k] + 1.0) if direction < 0 else (1.0 - w[k])
        if cap <= 0.0:
            continue
        move = min(cap, deficit)
        w[k] += direction * move
        value -= abs(a[k]) * move
        deficit -= move
        mu = float(abs(a[k]))
        if deficit <= 1e-12:
            break
    if deficit > 1e-9:
        raise UncertaintyError("empty window range")  # guarded by construction
    if s > hi:
        return value, w, mu, 0.0
    return value, w, 0.0, mu


def worst_case_linear(uset: UncertaintySet, a) -> float:
    """max_{w in set} a'w (always >= the value at w = 0 when 0 is a member)."""
    value, _ = worst_case_argmax(uset, a)
    return value


def worst_case_argmax(uset: UncertaintySet, a) -> tuple[float, np.ndarray]:
    """Worst-case value together with a maximizing signal vector."""
    a = np.asarray(a, dtype=float)
    if a.shape != (uset.n_steps,):
        raise UncertaintyError("direction length must match the horizon")
    w = np.sign(a)
    value = float(np.abs(a).sum())
    for win in uset.windows:
        v, w_win, _, _ = _window_max(a[win.start:win.stop], win.lo, win.hi)
        value += v - float(np.abs(a[win.start:win.stop]).sum())
        w[win.start:win.stop] = w_win
    return value, w


def batch_window_max(a_rows: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Row-wise :func:`_window_max` values for a (rows, length) direction block."""
    a_rows = np.atleast_2d(a_rows)
    w0 = np.sign(a_rows)
    s = w0.sum(axis=1)
    total = np.abs(a_rows).sum(axis=1)
    over = s - hi
    under = lo - s
    deficit = np.maximum(np.maximum(over, under), 0.0)
    need = deficit > 1e-12
    if not np.any(need):
        return total
    rates = np.abs(a_rows[need])
    w0n = w0[need]
    cap = np.where(over[need, None] > 0.0, w0n + 1.0, 1.0 - w0n)
    order = np.argsort(rates, axis=1, kind="stable")
    rates_s = np.take_along_axis(rates, order, axis=1)
    cap_s = np.take_along_axis(cap, order, axis=1)
    cumcap = np.cumsum(cap_s, axis=1)
    cumcost = np.cumsum(rates_s * cap_s, axis=1)
    d = deficit[need, None]
    # first sorted position whose cumulative capacity covers the deficit
    pos = (cumcap < d - 1e-12).sum(axis=1)
    pos = np.minimum(pos, rates_s.shape[1] - 1)
    rows = np.arange(rates_s.shape[0])
    prev_cap = np.where(pos > 0, cumcap[rows, pos - 1], 0.0)
    prev_cost = np.where(pos > 0, cumcost[rows, pos - 1], 0.0)
    cost = prev_cost + rates_s[rows, pos] * (deficit[need] - prev_cap)
    out = total.copy()
    out[need] = total[need] - cost
    return out


def worst_case_rows(uset: UncertaintySet, a_rows: np.ndarray) -> np.ndarray:
    """Vectorized worst case for many direction rows at once."""
    a_rows = np.atleast_2d(np.asarray(a_rows, dtype=float))
    if a_rows.shape[1] != uset.n_steps:
        raise UncertaintyError("direction length must match the horizon")
    values = np.abs(a_rows).sum(axis=1)
    for win in uset.windows:
        seg = a_rows[:, win.start:win.stop]
        values += batch_window_max(seg, win.lo, win.hi) - np.abs(seg).sum(axis=1)
    return values


def pec_row_duals(uset: UncertaintySet, a) -> tuple[float, np.ndarray]:
    """Optimal multipliers of  max a'w  s.t.  A_bar w <= b_bar.

    Returns (value, lam) with lam ordered like :meth:`UncertaintySet.halfplanes`
    rows and satisfying  A_bar' lam = a,  b_bar' lam = value,  lam >= 0.
    """
    a = np.asarray(a, dtype=float)
    n = uset.n_steps
    alpha = np.zeros(n)
    beta = np.zeros(n)
    lam_win = []
    value = 0.0
    covered = np.zeros(n, dtype=bool)
    for win in uset.windows:
        seg = a[win.start:win.stop]
        v, _, mu, nu = _window_max(seg, win.lo, win.hi)
        value += v
        shift = seg - mu + nu
        alpha[win.start:win.stop] = np.maximum(shift, 0.0)
        beta[win.start:win.stop] = np.maximum(-shift, 0.0)
        covered[win.start:win.stop] = True
        lam_win.extend([mu, nu])
    free = ~covered
    alpha[free] = np.maximum(a[free], 0.0)
    beta[free] = np.maximum(-a[free], 0.0)
    value += float(np.abs(a[free]).sum())
    lam = np.concatenate([np.asarray(lam_win, dtype=float), alpha, beta])
    return value, lam


# ---------------------------------------------------------------------------
# vertex enumeration and sampling
# ---------------------------------------------------------------------------

MAX_VERTEX_DIM = 8


def _segment_vertices(length: int, lo: float, hi: float) -> list[np.ndarray]:
    """Vertices of [-1,1]^length intersected with lo <= sum <= hi."""
    verts = {}

    def push(v):
        key = tuple(np.round(v, 9) + 0.0)
        verts.setdefault(key, np.array(v, dtype=float))

    for signs in product((-1.0, 1.0), repeat=length):
        s = sum(signs)
        if lo - 1e-12 <= s <= hi + 1e-12:
            push(signs)
    for bound in (lo, hi):
        if abs(bound) >= length:
            continue
        for frac_pos in range(length):
            others = length - 1
            for signs in product((-1.0, 1.0), repeat=others):
                w = list(signs[:frac_pos]) + [0.0] + list(signs[frac_pos:])
                w_frac = bound - sum(signs)
                if -1.0 + 1e-12 < w_frac < 1.0 - 1e-12:
                    w[frac_pos] = w_frac
                    push(w)
    return list(verts.values())


def enumerate_vertices(uset: UncertaintySet) -> list[np.ndarray]:
    """All vertices of the admissible polytope (guarded to small horizons)."""
    n = uset.n_steps
    if n > MAX_VERTEX_DIM:
        raise UncertaintyError(
            f"vertex enumeration capped at dimension {MAX_VERTEX_DIM}")
    segments = []
    pos = 0
    for win in sorted(uset.windows, key=lambda w: w.start):
        if win.start > pos:
            segments.append((pos, win.start - pos, None))
        segments.append((win.start, win.length, win))
        pos = win.stop
    if pos < n:
        segments.append((pos, n - pos, None))
    per_segment = []
    for _, length, win in segments:
        if win is None:
            per_segment.append([np.array(s) for s in
                                product((-1.0, 1.0), repeat=length)])
        else:
            per_segment.append(_segment_vertices(length, win.lo, win.hi))
    out = []
    for combo in product(*per_segment):
        out.append(np.concatenate(combo))
    return out


def sample_admissible(uset: UncertaintySet, seed: int, count: int) -> list[np.ndarray]:
    """Deterministic admissible samples mixing interior, face, and extreme points."""
    if count < 1:
        raise UncertaintyError("need at least one sample")
    rng = np.random.default_rng(seed)
    samples: list[np.ndarray] = []
    while len(samples) < count:
        mode = len(samples) % 3
        if mode == 0:
            w = _project_membership(uset, rng.uniform(-1, 1, uset.n_steps))
        elif mode == 1:
            _, w = worst_case_argmax(uset, rng.normal(size=uset.n_steps))
        else:
            a = _project_membership(uset, rng.uniform(-1, 1, uset.n_steps))
            _, b = worst_case_argmax(uset, rng.normal(size=uset.n_steps))
            lam = rng.uniform()
            w = lam * a + (1 - lam) * b
        if not uset.contains(w, tol=1e-9):
            raise UncertaintyError("sampler produced an inadmissible point")
        samples.append(w)
    return samples


def _project_membership(uset: UncertaintySet, w: np.ndarray) -> np.ndarray:
    """Alternating projections onto the box and every window slab."""
    w = np.clip(np.asarray(w, dtype=float), -1.0, 1.0)
    for _ in range(200):
        moved = False
        for win in uset.windows:
            seg = w[win.start:win.stop]
            s = float(seg.sum())
            target = min(max(s, win.lo), win.hi)
            if abs(target - s) > 1e-13:
                seg += (target - s) / win.length
                moved = True
            w[win.start:win.stop] = seg
        clipped = np.clip(w, -1.0, 1.0)
        if np.any(clipped != w):
            moved = True
            w = clipped
        if not moved:
            return w
    if uset.contains(w, tol=1e-9):
        return w
    # contraction fallback: shrink toward the window midpoints
    center = np.zeros_like(w)
    for win in uset.windows:
        mid = (min(win.hi, win.length) + max(win.lo, -win.length)) / (2 * win.length)
        center[win.start:win.stop] = mid
    for _ in range(60):
        w = 0.5 * (w + center)
        if uset.contains(w, tol=1e-9):
            return w
    raise UncertaintyError("projection failed to reach the admissible set")
