"""Real-time layer: signal decomposition, bias estimation, dispatch.

The regulation request arrives as a normalized signal w in [-1, 1] sampled
every few seconds.  A causal low-pass filter splits it into a slow component
(absorbed elsewhere) and a fast remainder sent to the buildings; the fast
component's windowed mean stays small, which is exactly what the windowed
uncertainty sets upstream assume.  Because a filter only approximately
bounds the bias, the feed used in closed loop projects slot means onto the
admissible window set step by step (clipping events are counted): the
optimization layers need hard admissibility.

Dispatch itself is the trivial affine law around the half-hourly baseline;
heat-pump tracking dynamics are out of scope and assumed perfect.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class SfcSignal:
    """Sampled normalized regulation signal."""

    samples: np.ndarray
    sample_period_s: float
    origin: str = "synthetic"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise SignalError("signal needs at least one sample")
        if np.abs(s).max() > 1.0 + 1e-9:
            raise SignalError("samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp_s", "w"])
        for i, val in enumerate(self.samples):
            w.writerow([f"{i * self.sample_period_s:.10g}", f"{val:.10g}"])
        return buf.getvalue()


def signal_from_csv(text: str, origin: str = "historical") -> SfcSignal:
    rows = list(csv.DictReader(io.StringIO(text)))
    if len(rows) < 2:
        raise SignalError("signal file needs at least two samples")
    ts = [float(r["timestamp_s"]) for r in rows]
    period = ts[1] - ts[0]
    w = np.array([float(r["w"]) for r in rows])
    return SfcSignal(samples=np.clip(w, -1.0, 1.0), sample_period_s=period,
                     origin=origin)


# ---------------------------------------------------------------------------
# filter design and decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    """Causal low-pass H(z) = sum b_i z^-i / (1 + sum a_i z^-i)."""

    order: int
    edge_hz: float
    sample_period_s: float
    b: np.ndarray
    a: np.ndarray
    ripple_db: float

    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def is_stable(self) -> bool:
        return bool(np.abs(self.poles()).max() < 1.0)

    def dc_gain(self) -> float:
        return float(self.b.sum() / self.a.sum())


def design_filter(t_hours: float, sample_period_s: float, order: int = 3,
                  ripple_db: float = 0.5) -> FilterSpec:
    """Chebyshev type-I low-pass with pass-band edge 1/T."""
    if t_hours <= 0 or order < 1:
        raise SignalError("need a positive averaging period and order >= 1")
    edge_hz = 1.0 / (3600.0 * t_hours)
    nyquist = 0.5 / sample_period_s
    if edge_hz >= nyquist:
        raise SignalError(f"pass-band edge {edge_hz:.4g} Hz is beyond the "
                          f"Nyquist frequency {nyquist:.4g} Hz")
    b, a = sps.cheby1(order, ripple_db, edge_hz / nyquist, btype="low")
    spec = FilterSpec(order=order, edge_hz=edge_hz,
                      sample_period_s=sample_period_s,
                      b=np.asarray(b), a=np.asarray(a), ripple_db=ripple_db)
    if not spec.is_stable():
        raise SignalError("designed filter is unstable")
    return spec


@dataclass(frozen=True)
class Decomposition:
    lf: SfcSignal
    hf: SfcSignal
    lf_raw: np.ndarray        # unclipped filter output
    hf_raw: np.ndarray        # exact complement: original - lf_raw
    lf_clip_count: int
    hf_clip_count: int


def decompose(sig: SfcSignal, spec: FilterSpec) -> Decomposition:
    """Split into low-pass output and its exact complement.

    lf_raw + hf_raw reproduces the input sample-wise; the returned signals
    are clipped into [-1, 1] with the clipping events counted.
    """
    if len(sig) <= 5 * spec.order:
        raise SignalError("signal shorter than the filter transient")
    if abs(spec.sample_period_s - sig.sample_period_s) > 1e-9:
        raise SignalError("filter was designed for a different sample period")
    lf_raw = sps.lfilter(spec.b, spec.a, sig.samples)
    hf_raw = sig.samples - lf_raw
    lf_clip = int(np.count_nonzero(np.abs(lf_raw) > 1.0))
    hf_clip = int(np.count_nonzero(np.abs(hf_raw) > 1.0))
    lf = SfcSignal(samples=np.clip(lf_raw, -1, 1),
                   sample_period_s=sig.sample_period_s, origin="filtered-LF")
    hf = SfcSignal(samples=np.clip(hf_raw, -1, 1),
                   sample_period_s=sig.sample_period_s, origin="filtered-HF")
    return Decomposition(lf=lf, hf=hf, lf_raw=lf_raw, hf_raw=hf_raw,
                         lf_clip_count=lf_clip, hf_clip_count=hf_clip)


# ---------------------------------------------------------------------------
# bias estimation
# ---------------------------------------------------------------------------

def estimate_bias(sig: SfcSignal, t_hours: float) -> float:
    """Largest absolute mean over all sliding windows of length T."""
    window = int(round(t_hours * 3600.0 / sig.sample_period_s))
    if window < 1:
        raise SignalError("window shorter than one sample")
    if window > len(sig):
        raise SignalError("window longer than the signal")
    cs = np.concatenate([[0.0], np.cumsum(sig.samples)])
    sums = cs[window:] - cs[:-window]
    eps = float(np.abs(sums).max() / window)
    return min(eps, 1.0)


def bias_table(sig: SfcSignal, t_hours_list, order: int = 3,
               ripple_db: float = 0.5) -> dict:
    """Bias of the signal and of its fast component per averaging period."""
    out = {}
    for t_h in t_hours_list:
        spec = design_filter(t_h, sig.sample_period_s, order=order,
                             ripple_db=ripple_db)
        dec = decompose(sig, spec)
        out[t_h] = {"signal": estimate_bias(sig, t_h),
                    "hf": estimate_bias(dec.hf, t_h)}
    return out


def moving_average(sig: SfcSignal, t_hours: float) -> np.ndarray:
    window = int(round(t_hours * 3600.0 / sig.sample_period_s))
    if window < 1 or window > len(sig):
        raise SignalError("invalid moving-average window")
    cs = np.concatenate([[0.0], np.cumsum(sig.samples)])
    return (cs[window:] - cs[:-window]) / window


# ---------------------------------------------------------------------------
# synthetic signal generation
# ---------------------------------------------------------------------------

def generate_synthetic_signal(seed: int, n_samples: int,
                              sample_period_s: float = 10.0,
                              target_bias: dict | None = None,
                              tolerance: float = 0.05,
                              max_tries: int = 12) -> SfcSignal:
    """Deterministic AR process plus slow drift, rescaled so the windowed
    bias at the anchor period lands near the target.

    ``target_bias`` maps one anchor period in hours to the wanted bias, e.g.
    ``{2.0: 0.75}``; the drift amplitude is bisected until the estimate falls
    within ``tolerance`` (the attempt count is bounded; failure raises).
    """
    if n_samples < 1:
        raise SignalError("need at least one sample")
    if target_bias is None:
        target_bias = {2.0: 0.75}
    if len(target_bias) != 1:
        raise SignalError("calibration uses a single anchor period")
    (anchor_t, target), = target_bias.items()
    if not (0.0 <= target <= 1.0):
        raise SignalError("target bias must lie in [0, 1]")

    def build(drift_scale: float) -> np.ndarray:
        rng = np.random.default_rng(seed)
        phi = np.exp(-sample_period_s / 900.0)
        sigma = 0.35 * np.sqrt(1.0 - phi * phi)
        noise = rng.normal(scale=sigma, size=n_samples)
        ar = np.empty(n_samples)
        acc = 0.0
        for i in range(n_samples):
            acc = phi * acc + noise[i]
            ar[i] = acc
        t = np.arange(n_samples) * sample_period_s
        phases = rng.uniform(0, 2 * np.pi, size=3)
        drift = (0.55 * np.sin(2 * np.pi * t / (24 * 3600) + phases[0])
                 + 0.30 * np.sin(2 * np.pi * t / (8 * 3600) + phases[1])
                 + 0.15 * np.sin(2 * np.pi * t / (3 * 3600) + phases[2]))
        return np.clip(ar + drift_scale * drift, -1.0, 1.0)

    if target == 0.0:
        sig = SfcSignal(samples=build(0.0), sample_period_s=sample_period_s)
        return sig
    lo_scale, hi_scale = 0.0, 4.0
    best = None
    for _ in range(max_tries):
        scale = 0.5 * (lo_scale + hi_scale)
        sig = SfcSignal(samples=build(scale), sample_period_s=sample_period_s)
        eps = estimate_bias(sig, anchor_t)
        if abs(eps - target) <= tolerance:
            return sig
        if best is None or abs(eps - target) < best[0]:
            best = (abs(eps - target), sig)
        if eps < target:
            lo_scale = scale
        else:
            hi_scale = scale
    raise SignalError(
        f"could not reach bias {target:.3g} at T={anchor_t}h within "
        f"{max_tries} tries (best miss {best[0]:.3g})")


# ---------------------------------------------------------------------------
# slot aggregation and admissibility projection
# ---------------------------------------------------------------------------

def slot_means(sig: SfcSignal, slot_seconds: float) -> np.ndarray:
    per_slot = int(round(slot_seconds / sig.sample_period_s))
    if per_slot < 1:
        raise SignalError("slot shorter than one sample")
    n_slots = len(sig) // per_slot
    if n_slots < 1:
        raise SignalError("signal shorter than one slot")
    trimmed = sig.samples[:n_slots * per_slot]
    return trimmed.reshape(n_slots, per_slot).mean(axis=1)


def project_window_admissible(means: np.ndarray, eps: float,
                              window_steps: int) -> tuple[np.ndarray, int]:
    """Clip slot means step by step so that every trailing window of up to
    ``window_steps`` slots keeps |sum| <= eps * window_steps.

    Enforcing all sliding windows implies the scheduler's fixed back-to-back
    windows a fortiori, keeps every realized prefix completable, and makes
    the reported T-window moving average respect the bias bound exactly.
    The clip range is never empty: the previous trailing sum is itself
    bounded by eps*T + 1."""
    budget = eps * window_steps
    out = np.asarray(means, dtype=float).copy()
    clips = 0
    for i in range(len(out)):
        s_prev = float(out[max(0, i - window_steps + 1):i].sum())
        hi = min(1.0, budget - s_prev)
        lo = max(-1.0, -budget - s_prev)
        clipped = min(max(out[i], lo), hi)
        if abs(clipped - out[i]) > 1e-12:
            clips += 1
        out[i] = clipped
    return out, clips


@dataclass(frozen=True)
class SlotFeed:
    """Realized request per optimization slot, plus the fine-grained samples
    inside each slot for the real-time logs."""

    slot_w: np.ndarray
    fine: np.ndarray | None       # (n_slots, samples_per_slot) or None
    sample_period_s: float
    slot_seconds: float
    projection_clips: int = 0

    def __len__(self) -> int:
        return len(self.slot_w)

    def w(self, t: int) -> float:
        return float(self.slot_w[t])


def make_slot_feed(sig: SfcSignal, slot_seconds: float,
                   eps: float | None = None,
                   window_steps: int | None = None) -> SlotFeed:
    """Aggregate a fine signal to slot means, projecting them onto the
    admissible window set when (eps, window_steps) is given."""
    means = slot_means(sig, slot_seconds)
    clips = 0
    if eps is not None:
        if window_steps is None:
            raise SignalError("window_steps required with eps")
        means, clips = project_window_admissible(means, eps, window_steps)
    per_slot = int(round(slot_seconds / sig.sample_period_s))
    n_slots = len(means)
    fine = sig.samples[:n_slots * per_slot].reshape(n_slots, per_slot)
    return SlotFeed(slot_w=means, fine=fine,
                    sample_period_s=sig.sample_period_s,
                    slot_seconds=slot_seconds, projection_clips=clips)


def constant_feed(w_value: float, n_slots: int,
                  slot_seconds: float = 1800.0) -> SlotFeed:
    return SlotFeed(slot_w=np.full(n_slots, float(w_value)), fine=None,
                    sample_period_s=slot_seconds, slot_seconds=slot_seconds)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DispatchResult:
    du_thermal: np.ndarray          # per reserve slot, W/m2
    u_thermal: np.ndarray           # per input, W/m2 after dispatch
    du_electric_per_m2: np.ndarray  # per reserve slot, W electric per m2
    electric_kw: float              # building total after dispatch
    bound_violation: float          # defensive check, should stay ~0


def dispatch(u_lv2: np.ndarray, r_up: np.ndarray, r_down: np.ndarray, w: float,
             model, mode: str = "symmetric") -> DispatchResult:
    """Affine dispatch around the baseline: du = r w (symmetric), with the
    asymmetric rule picking the down capacity for w >= 0 and the up capacity
    for w < 0.  Thermal-to-electric conversion divides by the COP; tracking
    is assumed perfect, a defensive bound check logs anything outside the
    input range."""
    if abs(w) > 1.0 + 1e-9:
        raise SignalError("dispatch signal outside [-1, 1]")
    r_up = np.asarray(r_up, dtype=float)
    r_down = np.asarray(r_down, dtype=float)
    if mode == "symmetric":
        du = r_down * w
    elif mode == "asymmetric":
        du = (r_down if w >= 0 else r_up) * w
    else:
        raise SignalError(f"unknown dispatch mode {mode!r}")
    u_new = np.asarray(u_lv2, dtype=float).copy()
    for j, col in enumerate(model.reserve_actuator_index):
        u_new[col] += du[j]
    viol = max(float((u_new - model.u_max).max(initial=0.0)),
               float((model.u_min - u_new).max(initial=0.0)))
    cops = np.array(model.cop)
    du_e = du / cops
    elec = float((u_new * model.input_electric_factor).sum()
                 * model.floor_area / 1000.0)
    return DispatchResult(du_thermal=du, u_thermal=u_new,
                          du_electric_per_m2=du_e, electric_kw=elec,
                          bound_violation=max(viol, 0.0))
