"""Configurable-precision arithmetic, extrapolation weights, and quadrature.

Everything downstream is parameterized by a :class:`PrecisionContext`.  The
contract is reproducibility: for a fixed ``(digits, inputs)`` pair every
operation returns bit-identical results, independent of call order.

High-precision scalars are mpmath values computed at ``digits + guard_digits``
decimal places.  Grid-scale modules switch to float64 fast paths when the
context is double-equivalent (``digits <= 16``); the scalar operations here
always run through mpmath so that a single code path covers both regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import mpmath as mp
import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import PrecisionError

DOUBLE_DIGITS = 15

# Fixed Gauss-Legendre order per panel.  Recorded in the metadata of every
# artifact produced by panel quadrature.
GAUSS_ORDER = 20


@dataclass(frozen=True)
class PrecisionContext:
    """Working decimal precision plus guard digits for intermediates.

    Parameters
    ----------
    digits : int
        Requested result precision in decimal digits, at least 15
        (double-equivalent).
    guard_digits : int
        Extra digits carried through intermediate computations.
    """

    digits: int
    guard_digits: int = 10

    def __post_init__(self):
        if not isinstance(self.digits, int) or self.digits < DOUBLE_DIGITS:
            raise ValueError(f"digits must be an integer >= {DOUBLE_DIGITS}, got {self.digits!r}")
        if not isinstance(self.guard_digits, int) or self.guard_digits < 1:
            raise ValueError(f"guard_digits must be a positive integer, got {self.guard_digits!r}")

    @property
    def dps(self) -> int:
        """Decimal places used for mpmath intermediates."""
        return self.digits + self.guard_digits

    @property
    def use_floats(self) -> bool:
        """True when grid-scale work may run in float64."""
        return self.digits <= 16

    def workdps(self):
        return mp.workdps(self.dps)

    def mpf(self, x) -> mp.mpf:
        with mp.workdps(self.dps):
            return mp.mpf(x)

    def mpc(self, re, im=0) -> mp.mpc:
        with mp.workdps(self.dps):
            return mp.mpc(re, im)


def make_context(digits: int) -> PrecisionContext:
    """Build a context with the default guard; rejects ``digits < 15``."""
    return PrecisionContext(digits=int(digits))


def required_digits(K: int, node_span: float, target_offset: float) -> int:
    """Decimal digits needed to extrapolate on ``K + 1`` uniform nodes.

    Nodes are ``k * node_span / K`` for ``k = 0..K`` and the evaluation point
    is ``target_offset``.  The estimate accumulates Lagrange basis magnitudes
    in log space (cheap and overflow-free), scales by 1.2, and adds a 40-digit
    guard, floored at 55 (double-equivalent work plus guard).
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if K == 0:
        return 55
    if node_span <= 0:
        raise ValueError("node_span must be positive for K >= 1")
    h = node_span / K
    xs = [k * h for k in range(K + 1)]
    t = float(target_offset)
    best = 0.0
    for m in range(K + 1):
        acc = 0.0
        hit_node = False
        for k in range(K + 1):
            if k == m:
                continue
            dt = abs(t - xs[k])
            if dt == 0.0:
                # target sits on another node: this basis function vanishes
                hit_node = True
                break
            acc += math.log10(dt) - math.log10(abs(xs[m] - xs[k]))
        if not hit_node:
            best = max(best, acc)
    return max(55, math.ceil(1.2 * best) + 40)


@dataclass(frozen=True)
class NodeSet:
    """Distinct real abscissae plus the (generally exterior) evaluation point."""

    nodes: tuple
    target: float

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise ValueError("NodeSet needs at least one node")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("NodeSet nodes must be pairwise distinct")

    @property
    def K(self) -> int:
        return len(self.nodes) - 1


@dataclass(frozen=True)
class WeightVector:
    """Solution weights of the moment system; order matches the NodeSet."""

    weights: tuple

    def __post_init__(self):
        if len(self.weights) < 1:
            raise ValueError("empty weight vector")


def _mp_nodes(ns: NodeSet):
    xs = [mp.mpf(x) for x in ns.nodes]
    t = mp.mpf(ns.target)
    return xs, t


def _log10_weight_scale(ns: NodeSet) -> float:
    """log10 of the largest weight magnitude, accumulated in log space."""
    xs = [float(x) for x in ns.nodes]
    t = float(ns.target)
    best = 0.0
    for m in range(len(xs)):
        acc = 0.0
        on_node = False
        for k in range(len(xs)):
            if k == m:
                continue
            dt = abs(t - xs[k])
            if dt == 0.0:
                on_node = True
                break
            acc += math.log10(dt) - math.log10(abs(xs[m] - xs[k]))
        if not on_node:
            best = max(best, acc)
    return best


def lagrange_weights(ns: NodeSet, ctx: PrecisionContext) -> WeightVector:
    """Closed-form weights ``w_m = prod_{k != m} (t - x_k)/(x_m - x_k)``.

    These are the coordinates of the evaluation functional ``p -> p(target)``
    on polynomials through the nodes, so ``sum_m x_m^j w_m = target^j`` for
    all ``0 <= j <= K`` and in particular ``sum_m w_m = 1``.  The working
    precision is raised internally past the weight magnitudes so that the
    residual guarantee (every relative moment residual below
    10^(-digits/3)) holds; the check runs unconditionally and raises
    :class:`PrecisionError` if it cannot be met.
    """
    dps_eff = max(ctx.dps, math.ceil(_log10_weight_scale(ns) + ctx.digits / 3 + 10))
    with mp.workdps(dps_eff):
        xs, t = _mp_nodes(ns)
        K = ns.K
        ws = []
        for m in range(K + 1):
            num = mp.mpf(1)
            den = mp.mpf(1)
            for k in range(K + 1):
                if k == m:
                    continue
                num *= t - xs[k]
                den *= xs[m] - xs[k]
            if den == 0:
                raise ValueError("duplicate nodes in NodeSet")
            ws.append(num / den)
        wv = WeightVector(weights=tuple(ws))
        res = moment_residuals(wv, ns, K, ctx, dps=dps_eff)
        tol = mp.mpf(10) ** (-mp.mpf(ctx.digits) / 3)
        if max(res) > tol:
            raise PrecisionError(
                f"moment residual {mp.nstr(max(res), 5)} exceeds the 10^(-digits/3) bound; "
                f"raise digits (hint: required_digits)"
            )
        return wv


def vandermonde_solve(ns: NodeSet, ctx: PrecisionContext) -> WeightVector:
    """Independent small-K oracle: pivoted elimination on the moment system.

    Solves ``sum_m x_m^j w_m = target^j`` (j = 0..K) with mpmath's LU
    decomposition, carrying enough working precision to absorb the
    Vandermonde conditioning.  Intended for K <= 30; dense elimination cost
    grows cubically.
    """
    dps_eff = max(ctx.dps, math.ceil(_log10_weight_scale(ns) + ctx.digits / 2 + 10))
    with mp.workdps(dps_eff):
        xs, t = _mp_nodes(ns)
        K = ns.K
        A = mp.matrix(K + 1, K + 1)
        rhs = mp.matrix(K + 1, 1)
        row_pow = [mp.mpf(1)] * (K + 1)
        t_pow = mp.mpf(1)
        for j in range(K + 1):
            for m in range(K + 1):
                A[j, m] = row_pow[m]
                row_pow[m] *= xs[m]
            rhs[j] = t_pow
            t_pow *= t
        try:
            sol = mp.lu_solve(A, rhs)
        except ZeroDivisionError as exc:
            raise ValueError("singular moment system (duplicate nodes)") from exc
        return WeightVector(weights=tuple(sol[m] for m in range(K + 1)))


def moment_residuals(w: WeightVector, ns: NodeSet, jmax: int, ctx: PrecisionContext, dps: int | None = None):
    """Relative errors ``|sum_m x_m^j w_m - t^j| / max(1, |t|^j)`` for j = 0..jmax."""
    if jmax > ns.K:
        raise ValueError("jmax exceeds node count - 1")
    with mp.workdps(dps if dps is not None else ctx.dps):
        xs, t = _mp_nodes(ns)
        ws = [mp.mpmathify(x) for x in w.weights]
        out = []
        pw = [mp.mpf(1)] * len(xs)
        t_pow = mp.mpf(1)
        for j in range(jmax + 1):
            s = mp.fsum(ws[m] * pw[m] for m in range(len(xs)))
            out.append(abs(s - t_pow) / max(mp.mpf(1), abs(t_pow)))
            for m in range(len(xs)):
                pw[m] *= xs[m]
            t_pow *= t
        return out


# ---------------------------------------------------------------------------
# Gauss-Legendre rules
# ---------------------------------------------------------------------------

_MP_GL_CACHE: dict = {}
_F64_GL_CACHE: dict = {}


def _legendre_rule_mp(order: int, dps: int):
    """Nodes/weights on [-1, 1] by Newton iteration at ``dps`` decimals."""
    key = (order, dps)
    rule = _MP_GL_CACHE.get(key)
    if rule is not None:
        return rule
    with mp.workdps(dps + 10):
        xs = []
        ws = []
        n = order
        for k in range(1, n + 1):
            x = mp.cos(mp.pi * (4 * k - 1) / (4 * n + 2))
            for _ in range(200):
                Pn = mp.legendre(n, x)
                Pn1 = mp.legendre(n - 1, x)
                dP = n * (x * Pn - Pn1) / (x * x - 1)
                step = Pn / dP
                x -= step
                if abs(step) < mp.mpf(10) ** (-(dps + 5)):
                    break
            Pn1 = mp.legendre(n - 1, x)
            dP = n * (x * mp.legendre(n, x) - Pn1) / (x * x - 1)
            xs.append(x)
            ws.append(2 / ((1 - x * x) * dP * dP))
        rule = (tuple(xs), tuple(ws))
    _MP_GL_CACHE[key] = rule
    return rule


def gl_panel_rule_f64(a: float, b: float, panels: int, order: int = GAUSS_ORDER):
    """Composite float64 Gauss-Legendre nodes/weights over [a, b]."""
    if panels < 1:
        raise ValueError("panels must be >= 1")
    base = _F64_GL_CACHE.get(order)
    if base is None:
        base = leggauss(order)
        _F64_GL_CACHE[order] = base
    x, w = base
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    rad = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + rad[:, None] * x[None, :]).ravel()
    weights = (rad[:, None] * w[None, :]).ravel()
    return nodes, weights


def pairwise_sum(values: Sequence):
    """Fixed-order pairwise reduction; independent of chunking or threads."""
    vals = list(values)
    if not vals:
        return 0
    while len(vals) > 1:
        nxt = []
        for i in range(0, len(vals) - 1, 2):
            nxt.append(vals[i] + vals[i + 1])
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def integrate(
    f: Callable,
    interval,
    panels: int,
    ctx: PrecisionContext,
    order: int = GAUSS_ORDER,
):
    """Composite Gauss-Legendre estimate of ``int_a^b f``.

    The order is fixed per panel (default :data:`GAUSS_ORDER`); callers drive
    convergence by doubling ``panels`` and comparing successive estimates.
    Panel sums are reduced pairwise in a fixed order, so the result does not
    depend on evaluation scheduling.  Raises on non-finite integrand samples.
    """
    a, b = interval
    if panels < 1:
        raise ValueError("panels must be >= 1")
    with ctx.workdps():
        a = mp.mpf(a)
        b = mp.mpf(b)
        xs, ws = _legendre_rule_mp(order, ctx.dps)
        width = (b - a) / panels
        panel_sums = []
        for i in range(panels):
            mid = a + (i + mp.mpf("0.5")) * width
            rad = width / 2
            acc = []
            for x, w in zip(xs, ws):
                val = f(mid + rad * x)
                val = mp.mpmathify(val)
                if not mp.isfinite(val):
                    raise ValueError(f"non-finite integrand sample at x={mp.nstr(mid + rad * x, 8)}")
                acc.append(w * val)
            panel_sums.append(rad * pairwise_sum(acc))
        return pairwise_sum(panel_sums)
