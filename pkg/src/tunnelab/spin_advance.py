"""Advancement device built from pre/post-selected spin interference.

A fast particle carries a large spin through a field region of width ``d``.
Component ``m`` of the spin is delayed by ``m * delta_x`` with
``delta_x = omega_L d / p0^2``.  Choosing the interference weights ``eta_m``
to satisfy the moment conditions against a target displacement ``-n d`` makes
the weighted sum of delayed envelope copies reproduce the input envelope a
distance ``n d`` AHEAD of free propagation, at the price of an amplitude
factor C whose modulus collapses rapidly with n.

Weight magnitudes grow combinatorially with K, so everything here runs in
mpmath at the context precision; outputs keep mpmath values because the
physical amplitudes routinely sit far below the float64 underflow threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .errors import GridError, PrecisionError
from .numerics import NodeSet, PrecisionContext, lagrange_weights, moment_residuals, required_digits
from .pulses import PulseSpec, SampledWave


@dataclass(frozen=True)
class SpinAdvanceConfig:
    """Device geometry: spin size K, field width d, carrier p0, target n.

    ``delta_x`` is the per-component delay; unless overridden it equals
    ``omega_L * d / p0^2``.
    """

    K: int
    d: float
    p0: float
    n: int
    delta_x: float
    omega_L: float

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if not (self.d > 0 and self.p0 > 0 and self.delta_x > 0):
            raise ValueError("d, p0, delta_x must be positive")
        if self.n < 0:
            raise ValueError("n must be a non-negative integer")


def spin_config(
    K: int,
    d: float,
    p0: float,
    n: int,
    sigma: float | None = None,
    omega_L: float | None = None,
    delta_x: float | None = None,
) -> SpinAdvanceConfig:
    """Resolve the delay step.

    Precedence: explicit ``delta_x``, then ``omega_L`` (delta_x = omega_L d /
    p0^2), then ``sigma`` (delta_x = sigma / K, keeping the full delay span
    inside the envelope width, which keeps the reconstruction accurate).
    """
    if delta_x is None:
        if omega_L is not None:
            delta_x = omega_L * d / p0 ** 2
        elif sigma is not None:
            delta_x = sigma / max(K, 1)
        else:
            raise ValueError("one of delta_x, omega_L, sigma is required")
    if omega_L is None:
        omega_L = delta_x * p0 ** 2 / d
    return SpinAdvanceConfig(K=K, d=d, p0=p0, n=n, delta_x=delta_x, omega_L=omega_L)


@dataclass(frozen=True)
class EtaWeights:
    """Interference weights, normalized so that their sum is exactly one."""

    etas: tuple
    config: SpinAdvanceConfig

    @property
    def abs_sum(self):
        with mp.extraprec(10):
            return mp.fsum(abs(e) for e in self.etas)


@dataclass(frozen=True)
class EtaFactorization:
    """Pre/post-selected state coefficients realizing the weights.

    Satisfies ``exp(-i m omega_L d / p0) a_m conj(b_m) = eta_m`` componentwise,
    with N = (sum |a|^2)(sum |b|^2) and C = sum(eta)/sqrt(N).
    """

    a: tuple
    b: tuple
    N: object
    C: object


def synthesize_eta(cfg: SpinAdvanceConfig, ctx: PrecisionContext) -> EtaWeights:
    """Weights satisfying the K + 1 moment conditions for target ``-n d``.

    Nodes are the delays ``m delta_x``; the closed-form extrapolation weights
    to ``-n d`` automatically sum to one.  Residuals are verified against the
    10^(-digits/3) bound; insufficient precision raises.
    """
    need = required_digits(cfg.K, cfg.K * cfg.delta_x, -cfg.n * cfg.d)
    if ctx.digits < need:
        raise PrecisionError(
            f"synthesis at K={cfg.K}, n={cfg.n} needs >= {need} digits, context has {ctx.digits}"
        )
    with ctx.workdps():
        dx = mp.mpf(cfg.delta_x)
        nodes = tuple(m * dx for m in range(cfg.K + 1))
        target = -mp.mpf(cfg.n) * mp.mpf(cfg.d)
        ns = NodeSet(nodes=nodes, target=target)
        wv = lagrange_weights(ns, ctx)
        return EtaWeights(etas=wv.weights, config=cfg)


def factorize_eta(w: EtaWeights) -> EtaFactorization:
    """Balanced-magnitude split ``a_m = |eta_m|^{1/2}``, phases carried by b.

    Any split reproducing the weights is admissible; the symmetric one
    maximizes the post-selection success probability for given etas and makes
    ``N = (sum |eta|)^2`` and ``|C| = 1 / sum |eta|``.
    """
    cfg = w.config
    with mp.extraprec(20):
        phi = mp.mpf(cfg.omega_L) * mp.mpf(cfg.d) / mp.mpf(cfg.p0)
        a = []
        b = []
        for m, eta in enumerate(w.etas):
            r = abs(mp.mpmathify(eta))
            root = mp.sqrt(r)
            a.append(root)
            theta = mp.arg(mp.mpmathify(eta)) if r != 0 else mp.mpf(0)
            b.append(root * mp.expj(-(theta + m * phi)))
        sa = mp.fsum(x * x for x in a)
        sb = mp.fsum(abs(x) ** 2 for x in b)
        N = sa * sb
        C = mp.fsum(mp.mpmathify(e) for e in w.etas) / mp.sqrt(N)
        return EtaFactorization(a=tuple(a), b=tuple(b), N=N, C=C)


def _coverage_check(w: EtaWeights, spec: PulseSpec, X_lo: float, X_hi: float):
    cfg = w.config
    sig = spec.sigma_max
    x0s = [c.x0 for c in spec.components]
    lo_need = min(min(x0s) - cfg.n * cfg.d, min(x0s) - cfg.K * cfg.delta_x) - 6 * sig
    hi_need = max(x0s) + max(cfg.n * cfg.d, cfg.K * cfg.delta_x) + 6 * sig
    if X_lo > lo_need or X_hi < hi_need:
        raise GridError(
            f"grid [{X_lo:.3g}, {X_hi:.3g}] (comoving) does not cover the span "
            f"[{lo_need:.3g}, {hi_need:.3g}] required by the delay structure"
        )


def spin_transmit(
    spec: PulseSpec,
    w: EtaWeights,
    t: float,
    grid: np.ndarray,
    ctx: PrecisionContext,
) -> SampledWave:
    """Superposition of delayed, non-spreading envelope copies.

    Output is ``N^{-1/2} sum_m eta_m G(X + m delta_x)`` per component times
    the carrier, with X = x - p0 t.  All components must share one width (the
    fast-particle idealization also neglects spreading and edge reflection).
    The Gaussian copies are evaluated with a Horner recurrence in
    ``exp(-2 X delta_x / sigma^2)``, one exponential per grid point.
    """
    cfg = w.config
    sigmas = {c.sigma for c in spec.components}
    if len(sigmas) != 1:
        raise ValueError("spin transmission requires all components to share one sigma")
    if spec.cut is not None:
        raise ValueError("use spin_transmit_sampled for cut inputs")
    grid = np.asarray(grid, dtype=float)
    X_grid = grid - spec.p0 * t
    _coverage_check(w, spec, float(X_grid[0]), float(X_grid[-1]))
    with ctx.workdps():
        sig = mp.mpf(spec.components[0].sigma)
        dx = mp.mpf(cfg.delta_x)
        p0 = mp.mpf(spec.p0)
        tm = mp.mpf(t)
        inv_rootN = 1 / mp.fsum(abs(e) for e in w.etas)
        c0 = (2 / (mp.pi * sig * sig)) ** mp.mpf("0.25")
        q = mp.exp(-dx * dx / (sig * sig))
        # eta_m * exp(-m^2 dx^2 / sig^2), highest order first for Horner
        cm = [mp.mpmathify(w.etas[m]) * q ** (m * m) for m in range(cfg.K + 1)]
        vals = np.empty(grid.size, dtype=object)
        for i, x in enumerate(grid):
            xm = mp.mpf(float(x))
            X = xm - p0 * tm
            acc = mp.mpc(0)
            for comp in spec.components:
                Xt = X - mp.mpf(comp.x0)
                r = mp.exp(-2 * Xt * dx / (sig * sig))
                s = mp.mpf(0)
                for m in range(cfg.K, -1, -1):
                    s = s * r + cm[m]
                acc += mp.mpmathify(comp.weight) * mp.exp(-Xt * Xt / (sig * sig)) * s
            carrier = mp.expj(p0 * xm - p0 * p0 * tm / 2)
            vals[i] = inv_rootN * c0 * carrier * acc
    meta = {
        "op": "spin_transmit",
        "p0": spec.p0,
        "t": t,
        "K": cfg.K,
        "n": cfg.n,
        "delta_x": cfg.delta_x,
        "digits": ctx.digits,
    }
    return SampledWave(t=t, xs=grid, values=vals, meta=meta)


def spin_transmit_sampled(
    wave0: SampledWave,
    w: EtaWeights,
    t: float,
    ctx: PrecisionContext,
) -> SampledWave:
    """Device output for a sampled t = 0 input (e.g. a rear-cut pulse).

    Works directly in sample space: every delayed copy is an integer-shift of
    the initial envelope, so ``delta_x`` and ``p0 t`` must both be integer
    multiples of the grid step.  Front-tail samples ahead of any cut are
    consumed untouched, which realizes front loading exactly.
    """
    cfg = w.config
    p0 = wave0.meta.get("p0")
    if p0 is None:
        raise ValueError("input wave lacks carrier metadata 'p0'")
    if wave0.t != 0:
        raise ValueError("sampled transmission starts from a t = 0 wave")
    h = wave0.dx
    s_dx = cfg.delta_x / h
    s_t = p0 * t / h
    if abs(s_dx - round(s_dx)) > 1e-9 or abs(s_t - round(s_t)) > 1e-9:
        raise GridError(
            "delta_x and p0*t must be integer multiples of the grid step "
            f"(got delta_x/h={s_dx:.6g}, p0*t/h={s_t:.6g}); snap t or rebuild the grid"
        )
    s_dx = int(round(s_dx))
    s_t = int(round(s_t))
    n_pts = wave0.xs.size
    with ctx.workdps():
        p0m = mp.mpf(p0)
        tm = mp.mpf(t)
        inv_rootN = 1 / mp.fsum(abs(e) for e in w.etas)
        env0 = np.empty(n_pts, dtype=object)
        for i in range(n_pts):
            env0[i] = mp.mpmathify(wave0.values[i]) * mp.expj(-p0m * mp.mpf(float(wave0.xs[i])))
        etas = [mp.mpmathify(e) for e in w.etas]
        vals = np.empty(n_pts, dtype=object)
        for i, x in enumerate(wave0.xs):
            # envelope argument x - p0 t + m delta_x -> sample index i - s_t + m s_dx
            acc = mp.mpc(0)
            terms = []
            for m in range(cfg.K + 1):
                j = i - s_t + m * s_dx
                if 0 <= j < n_pts:
                    terms.append(etas[m] * env0[j])
            acc = mp.fsum(terms) if terms else mp.mpc(0)
            carrier = mp.expj(p0m * mp.mpf(float(x)) - p0m * p0m * tm / 2)
            vals[i] = inv_rootN * carrier * acc
    meta = dict(wave0.meta)
    meta.update({"op": "spin_transmit_sampled", "t": t, "K": cfg.K, "n": cfg.n, "digits": ctx.digits})
    return SampledWave(t=t, xs=wave0.xs, values=vals, meta=meta)


def _weights_dps(w: EtaWeights) -> int:
    """Working decimals for weight-scale cancellations (superoscillation
    values are order one while individual terms reach the weight magnitude)."""
    top = max((mp.mag(e) for e in w.etas if e != 0), default=1)
    return max(35, int(top * 0.30103) + 40)


def spin_T(p, w: EtaWeights):
    """Transmission amplitude ``sum_m eta_m exp(i m p delta_x)``.

    A finite Fourier sum with only non-negative frequencies; periodic in p
    with period ``2 pi / delta_x`` and equal to 1 at p = 0.  Evaluated with
    enough precision to resolve the superoscillatory window, where the huge
    terms cancel to order one.
    """
    with mp.workdps(_weights_dps(w)):
        z = mp.expj(mp.mpmathify(p) * mp.mpf(w.config.delta_x))
        acc = mp.mpc(0)
        for m in range(w.config.K, -1, -1):
            acc = acc * z + mp.mpmathify(w.etas[m])
        return acc


def local_frequency(w: EtaWeights, p, h) -> float:
    """Central-difference phase slope ``d(arg T)/dp`` with wrap handling.

    The ratio-argument form unwraps automatically provided the phase step
    across the stencil stays below pi.  Near p = 0 for synthesized weights the
    slope approaches ``-n d`` although the Fourier content of T is entirely at
    non-negative delays: the superoscillation.
    """
    with mp.workdps(_weights_dps(w) + 10):
        tp = spin_T(mp.mpf(p) + mp.mpf(h), w)
        tm = spin_T(mp.mpf(p) - mp.mpf(h), w)
        if tp == 0 or tm == 0:
            raise ValueError("T vanishes inside the stencil; phase undefined")
        return float(mp.arg(tp / tm) / (2 * mp.mpf(h)))


@dataclass(frozen=True)
class WindowReport:
    """Superoscillatory window scan around p = 0."""

    p_lo: float
    p_hi: float
    window_lo: float | None
    window_hi: float | None
    max_dev: float | None
    ps: np.ndarray
    abs_T: np.ndarray
    local_freq: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.window_lo is None

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.window_hi - self.window_lo


def window_scan(w: EtaWeights, p_range, samples: int) -> WindowReport:
    """Maximal contiguous interval around p = 0 where the local frequency
    tracks ``-n d`` within 5 percent, plus the |T| profile for plotting.

    For n = 0 the weights are the trivial unit vector, T is constant, and the
    window is the whole scanned range.
    """
    if samples < 16:
        raise ValueError("samples must be >= 16")
    cfg = w.config
    p_lo, p_hi = float(p_range[0]), float(p_range[1])
    ps = np.linspace(p_lo, p_hi, samples)
    dp = ps[1] - ps[0]
    h = dp / 8.0
    absT = np.empty(samples)
    freq = np.empty(samples)
    cap = mp.mpf("1e300")
    for i, p in enumerate(ps):
        absT[i] = float(min(abs(spin_T(p, w)), cap))
        freq[i] = local_frequency(w, p, h)
    meta = {"K": cfg.K, "n": cfg.n, "delta_x": cfg.delta_x, "d": cfg.d}
    if cfg.n == 0:
        return WindowReport(
            p_lo=p_lo, p_hi=p_hi, window_lo=p_lo, window_hi=p_hi,
            max_dev=float(np.max(np.abs(freq))), ps=ps, abs_T=absT, local_freq=freq, meta=meta,
        )
    nd = cfg.n * cfg.d
    ok = np.abs(freq + nd) <= 0.05 * nd
    i0 = int(np.argmin(np.abs(ps)))
    if not ok[i0]:
        return WindowReport(
            p_lo=p_lo, p_hi=p_hi, window_lo=None, window_hi=None,
            max_dev=None, ps=ps, abs_T=absT, local_freq=freq, meta=meta,
        )
    lo = i0
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = i0
    while hi < samples - 1 and ok[hi + 1]:
        hi += 1
    max_dev = float(np.max(np.abs(freq[lo : hi + 1] + nd)))
    return WindowReport(
        p_lo=p_lo, p_hi=p_hi, window_lo=float(ps[lo]), window_hi=float(ps[hi]),
        max_dev=max_dev, ps=ps, abs_T=absT, local_freq=freq, meta=meta,
    )
