"""Discrete measures, Jones beta numbers, Reifenberg packing checks and coverings.

The covering tree refines balls around a point set ``S`` using a density
oracle ``Theta(y, s)``. At a ball of radius ``s`` the pinched set collects
the points whose density at the small scale ``rho s / 10`` is still within
``delta`` of the root bound ``E``. If the pinched set spans at least ``k``
dimensions at scale ``rho s / 10``, the points of ``S`` in the ball are
covered by ``rho``-scale children and refinement continues. Otherwise it
lies near a ``(k-1)``-plane ``L``; children near ``L`` stay bad and are
refined, and the others become final once their energy drop is verified.
Final balls are covered again in a new stage with ``E`` lowered by
``delta``; the number of stages is reported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma

from .symmetry import effective_span

EIG_ZERO = 1e-13  # eigenvalues below this fraction of the trace are set to 0
VORTEX_THETA = math.pi  # Theta of the vortex extension at its centre, any radius


def unit_ball_volume(k: int) -> float:
    return float(np.pi ** (k / 2) / gamma(k / 2 + 1))


class MeasureError(ValueError):
    """Invalid measure data."""


class OracleConsistencyError(RuntimeError):
    """The density oracle decreased with the radius."""


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms ``sum_i w_i delta_{x_i}``, optionally with packing radii."""

    points: np.ndarray
    weights: np.ndarray
    radii: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim == 1:
            pts = pts[None] if pts.size else pts.reshape(0, 1)
        w = np.asarray(self.weights, float).reshape(-1)
        if pts.shape[0] != w.size:
            raise MeasureError("one weight per atom required")
        if np.any(~(w > 0)):
            raise MeasureError("weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.radii is not None:
            r = np.asarray(self.radii, float).reshape(-1)
            if r.size != w.size or np.any(~(r > 0)):
                raise MeasureError("one positive radius per atom required")
            _check_fifth_disjoint(pts, r)
            object.__setattr__(self, "radii", r)

    @classmethod
    def packing(cls, centers, radii, k: int) -> "DiscreteMeasure":
        """``sum omega_k r_x^k delta_x`` over 1/5-disjoint balls."""
        r = np.asarray(radii, float).reshape(-1)
        return cls(np.asarray(centers, float), unit_ball_volume(k) * r ** k, r)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def restrict(self, x, r: float) -> "DiscreteMeasure":
        sel = np.linalg.norm(self.points - np.asarray(x, float), axis=1) <= r
        return DiscreteMeasure(self.points[sel], self.weights[sel],
                               None if self.radii is None else self.radii[sel])


def _check_fifth_disjoint(pts, r):
    n = pts.shape[0]
    for i in range(n - 1):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        if np.any(d < (r[i + 1:] + r[i]) / 5):
            raise MeasureError("packing balls must have pairwise disjoint 1/5-shrinks")


# --------------------------------------------------------------------------
# moments and beta numbers


@dataclass
class MomentReport:
    center_of_mass: np.ndarray
    Q: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns
    mass: float
    empty: bool = False


def second_moment(mu: DiscreteMeasure, x, r: float) -> MomentReport:
    """Unnormalized second moment of ``mu`` restricted to the closed disc ``D_r(x)``."""
    sub = mu.restrict(x, r)
    n = mu.n
    if len(sub) == 0:
        z = np.zeros(n)
        return MomentReport(z, np.zeros((n, n)), z.copy(), np.eye(n), 0.0, True)
    w = sub.weights
    mass = float(w.sum())
    cm = (w @ sub.points) / mass
    rel = sub.points - cm
    Q = (rel * w[:, None]).T @ rel
    Q = 0.5 * (Q + Q.T)
    vals, vecs = np.linalg.eigh(Q)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    tr = float(np.trace(Q))
    vals = np.where(vals < EIG_ZERO * tr, 0.0, vals)
    return MomentReport(cm, Q, vals, vecs, mass)


@dataclass
class BetaResult:
    beta_sq: float
    origin: np.ndarray
    basis: np.ndarray  # (k, n) rows

    @property
    def beta(self) -> float:
        return math.sqrt(self.beta_sq)


def jones_beta(mu: DiscreteMeasure, x, r: float, k: int, moment: MomentReport = None) -> BetaResult:
    """k-dimensional Jones beta_2 number at ``D_r(x)`` from the eigenvalues.

    ``beta^2 = r^{-k-2} (lambda_{k+1} + ... + lambda_n)``; the optimal plane
    passes through the centre of mass along the top ``k`` eigenvectors.
    """
    n = mu.n
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    mom = moment or second_moment(mu, x, r)
    if mom.empty:
        return BetaResult(0.0, np.asarray(x, float), np.zeros((k, n)))
    val = float(np.sum(mom.eigenvalues[k:])) / r ** (k + 2)
    return BetaResult(val, mom.center_of_mass, mom.eigenvectors[:, :k].T.copy())


def plane_objective(mu: DiscreteMeasure, x, r: float, k: int, origin, basis) -> float:
    """``r^{-k-2} sum_{y in D_r(x)} w d(y, P)^2`` for the affine plane ``origin + span(basis)``."""
    sub = mu.restrict(x, r)
    if len(sub) == 0:
        return 0.0
    rel = sub.points - np.asarray(origin, float)
    B = np.asarray(basis, float).reshape(k, mu.n)
    if k:
        Qb, _ = np.linalg.qr(B.T)
        rel = rel - (rel @ Qb) @ Qb.T
    return float(sub.weights @ np.sum(rel * rel, axis=1)) / r ** (k + 2)


def _multiscale_nodes(r: float, J: int) -> np.ndarray:
    # each node is the log-midpoint of (s / sqrt 2, s sqrt 2]
    return r * 2.0 ** (-np.arange(J + 1))


def multiscale_beta_integral(mu: DiscreteMeasure, x, r: float, k: int, J: int = 8) -> float:
    """``int_{D_r(x)} int_0^r beta(y, s)^2 ds/s dmu(y)``.

    The inner integral uses the scales ``s_j = r 2^{-j}``, ``j = 0..J``, each
    with the log-midpoint weight ``log 2``; the outer integral is the exact
    atom sum.
    """
    sub = mu.restrict(x, r)
    total = 0.0
    scales = _multiscale_nodes(r, J)
    for y, w in zip(sub.points, sub.weights):
        inner = sum(jones_beta(mu, y, s, k).beta_sq for s in scales) * math.log(2.0)
        total += w * inner
    return float(total)


@dataclass
class BallVerdict:
    center: np.ndarray
    radius: float
    integral: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.integral < self.bound


@dataclass
class ReifenbergReport:
    passed: bool
    packing_sum: float
    verdicts: list
    violations: list


def reifenberg_predicate(mu: DiscreteMeasure, k: int, delta6: float, root_center=None,
                         root_radius: float = 2.0, J: int = 8) -> ReifenbergReport:
    """Check the multiscale beta condition on atom-centred dyadic balls inside the root disc.

    Balls ``D_s(x)`` with ``x`` an atom and ``s = root_radius 2^{-j}`` are
    tested while ``D_s(x)`` lies in the root disc and ``s`` is at least the
    smallest packing radius.
    """
    if mu.radii is None and len(mu):
        raise MeasureError("packing radii required")
    c = np.zeros(mu.n) if root_center is None else np.asarray(root_center, float)
    verdicts = []
    if len(mu):
        s_min = float(mu.radii.min())
        for x in mu.points:
            room = root_radius - float(np.linalg.norm(x - c))
            s = root_radius
            while s >= s_min:
                if s <= room + 1e-12:
                    val = multiscale_beta_integral(mu, x, s, k, J)
                    verdicts.append(BallVerdict(x.copy(), s, val, delta6 ** 2 * s ** k))
                s /= 2
    violations = [v for v in verdicts if not v.ok]
    psum = float(np.sum(mu.radii ** k)) if len(mu) else 0.0
    return ReifenbergReport(not violations, psum, verdicts, violations)


# --------------------------------------------------------------------------
# Vitali subcover


def vitali_subcover(centers, radii) -> np.ndarray:
    """Indices of a greedy subfamily with pairwise disjoint 1/5-shrinks.

    Balls are scanned by descending radius (ties in input order); a ball is
    kept iff its 1/5-shrink misses every kept 1/5-shrink. Every input centre
    then lies within ``2/5`` of the radius of some kept ball of larger or
    equal radius, so the 5-fold dilations cover all centres.
    """
    c = np.atleast_2d(np.asarray(centers, float))
    r = np.asarray(radii, float).reshape(-1)
    if r.size == 0:
        return np.zeros(0, int)
    order = np.argsort(-r, kind="stable")
    kept = []
    kc = np.empty((r.size, c.shape[1]))
    kr = np.empty(r.size)
    m = 0
    for i in order:
        if m and np.any(np.linalg.norm(kc[:m] - c[i], axis=1) < (kr[:m] + r[i]) / 5):
            continue
        kept.append(i)
        kc[m], kr[m] = c[i], r[i]
        m += 1
    return np.array(kept, int)


# --------------------------------------------------------------------------
# density oracles


class ThetaOracle:
    """Callable ``(points (M, n), s) -> Theta`` values."""

    def __call__(self, pts: np.ndarray, s: float) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class ConstantTheta(ThetaOracle):
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, pts, s):
        return np.full(np.atleast_2d(pts).shape[0], self.value)


class PointSingularityTheta(ThetaOracle):
    """``theta * min(1, (s / |y - c|)^2)``: constant at ``c``, quadratic decay elsewhere.

    Models a 0-homogeneous map with one singular point: at the centre the
    density is scale invariant and at regular points it vanishes like
    ``s^2`` below the distance to the singularity.
    """

    def __init__(self, center, theta: float = VORTEX_THETA):
        self.center = np.asarray(center, float)
        self.theta = float(theta)

    def __call__(self, pts, s):
        d = np.linalg.norm(np.atleast_2d(pts) - self.center, axis=1)
        with np.errstate(divide="ignore"):
            ratio = np.where(d > 0, (s / np.where(d > 0, d, 1.0)) ** 2, 1.0)
        return self.theta * np.minimum(1.0, ratio)


class FieldTheta(ThetaOracle):
    """Density of a computed extension; radii below ``r_min`` are clamped to ``r_min``."""

    def __init__(self, ue, r_min: Optional[float] = None):
        from .extension import theta_density

        self.ue = ue
        self._theta = theta_density
        self.r_min = r_min if r_min is not None else 4 * ue.spec.base.h

    def __call__(self, pts, s):
        s = max(s, self.r_min)
        return np.array([self._theta(self.ue, p, s) for p in np.atleast_2d(pts)])


# --------------------------------------------------------------------------
# covering tree


@dataclass
class TreeNode:
    id: int
    parent: Optional[int]
    center: list
    radius: float
    cls: str  # "root", "bad", "final", "r-ball"
    depth: int = 0
    certificate: Optional[dict] = None
    children: list = field(default_factory=list)


@dataclass
class CoveringTree:
    nodes: list
    k: int
    eps: float
    r: float
    R: float
    rho: float
    delta: float

    def leaves(self) -> list:
        return [nd for nd in self.nodes if not nd.children and nd.cls != "root"]

    def packing_sum(self) -> float:
        return float(sum(nd.radius ** self.k for nd in self.leaves()))

    def covers(self, S) -> bool:
        """Exact check that every point of ``S`` lies in a closed leaf ball."""
        S = np.atleast_2d(np.asarray(S, float))
        if S.size == 0:
            return True
        lv = self.leaves()
        if not lv:
            return False
        c = np.array([nd.center for nd in lv])
        r = np.array([nd.radius for nd in lv])
        step = max(1, 2 ** 22 // (len(lv) * S.shape[1]))
        for i in range(0, S.shape[0], step):
            d = np.linalg.norm(S[i:i + step, None, :] - c[None], axis=2)
            if not np.all(np.any(d <= r[None] * (1 + 1e-12), axis=1)):
                return False
        return True

    def to_dict(self) -> dict:
        nodes = [{"id": nd.id, "parent": nd.parent, "center": [float(v) for v in nd.center],
                  "radius": float(nd.radius), "class": nd.cls, "depth": nd.depth,
                  "certificate": nd.certificate} for nd in self.nodes]
        meta = {"k": self.k, "eps": self.eps, "r": self.r, "R": self.R, "rho": self.rho,
                "delta": self.delta, "leaves": len(self.leaves()),
                "packing_sum": self.packing_sum()}
        return {"meta": meta, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _children(S_ball, radius):
    """Centres of a Vitali family of equal balls centred at points of ``S_ball``.

    With equal radii every point is within ``2 radius / 5`` of a kept centre,
    so the undilated balls already cover ``S_ball``.
    """
    idx = vitali_subcover(S_ball, np.full(S_ball.shape[0], radius))
    kids = S_ball[idx]
    return kids[np.lexsort(kids.T[::-1])]


def covering_tree(S, theta: Callable, k: int, eps: float, delta: Optional[float] = None,
                  rho: float = 0.01, r: float = 0.01, R: float = 1.0, center=None,
                  tol: float = 1e-9, max_nodes: int = 200000) -> CoveringTree:
    """Cover ``S cap D_R(center)`` by r-balls and balls with a certified energy drop.

    At each bad ball of radius ``s``: ``E = sup Theta(y, 2s)`` over the
    points of ``S`` inside, the pinched set holds the points with
    ``Theta(y, rho s / 10) > E - delta`` and its effective span is taken at
    scale ``rho s / 10``. Children of radius ``max(rho s, r)`` are centred
    at a Vitali family of the points in the ball. If the span has dimension
    at most ``k - 1``, children farther than ``rho s / 5 + child radius``
    from the spanned plane become final when
    ``sup Theta(y, 2 child radius) <= E - delta`` over their points, with
    the numbers stored as a certificate. Everything else is refined until
    the radius reaches ``r``. Nodes are created breadth first, siblings in
    lexicographic order of their centres.

    ``eps`` is the symmetry threshold of the stratum that produced ``S`` and
    is only recorded. ``delta`` defaults to ``0.05 sup Theta(y, 2R)``.

    Raises
    ------
    ValueError
        Unless ``0 < r < R <= 1`` and ``0 < rho <= 1/100``.
    OracleConsistencyError
        If ``Theta(y, s) < Theta(y, s') - tol`` for some queried ``s' < s``.
    """
    if not 0 < r < R <= 1:
        raise ValueError("need 0 < r < R <= 1")
    if not 0 < rho <= 0.01:
        raise ValueError("rho must lie in (0, 1/100]")
    S = np.atleast_2d(np.asarray(S, float))
    empty = CoveringTree([], k, eps, r, R, rho, 0.0 if delta is None else float(delta))
    if S.size == 0:
        return empty
    c0 = np.zeros(S.shape[1]) if center is None else np.asarray(center, float)
    S = S[np.linalg.norm(S - c0, axis=1) <= R]
    if S.shape[0] == 0:
        return empty

    def sup_theta(pts, s):
        return float(np.max(theta(pts, s)))

    E0 = sup_theta(S, 2 * R)
    delta = 0.05 * E0 if delta is None else float(delta)
    if not delta > 0:
        raise ValueError("delta must be positive")
    nodes = [TreeNode(0, None, [float(v) for v in c0], float(R), "root")]

    def add(parent, ctr, rad, cls, cert=None):
        nd = TreeNode(len(nodes), parent, [float(v) for v in ctr], float(rad), cls,
                      nodes[parent].depth + 1, cert)
        nodes.append(nd)
        nodes[parent].children.append(nd.id)
        if len(nodes) > max_nodes:
            raise RuntimeError("covering tree exceeded max_nodes")
        return nd.id

    queue = [0]
    head = 0
    while head < len(queue):
        nid = queue[head]
        head += 1
        ctr = np.asarray(nodes[nid].center)
        rad = nodes[nid].radius
        Sb = S[np.linalg.norm(S - ctr, axis=1) <= rad * (1 + 1e-12)]
        if Sb.shape[0] == 0:
            continue
        small = rho * rad / 10
        th_small = np.asarray(theta(Sb, small), float)
        th_big = np.asarray(theta(Sb, 2 * rad), float)
        if np.any(th_big < th_small - tol):
            raise OracleConsistencyError("density oracle decreased with the radius")
        E = float(th_big.max())
        pinched = Sb[th_small > E - delta]
        span = effective_span(pinched, small) if pinched.shape[0] else None
        low_dim = span is None or span.dim <= k - 1
        child_r = max(rho * rad, r)
        at_bottom = child_r <= r * (1 + 1e-12)
        for kc in _children(Sb, child_r):
            if low_dim:
                if span is None:
                    far = True
                else:
                    rel = kc - span.origin
                    off = rel - (rel @ span.basis.T) @ span.basis
                    far = float(np.linalg.norm(off)) > 2 * small + child_r
                if far:
                    sub = Sb[np.linalg.norm(Sb - kc, axis=1) <= child_r * (1 + 1e-12)]
                    after = sup_theta(sub, 2 * child_r)
                    if after <= E - delta + tol:
                        cert = {"sup_theta_before": E, "sup_theta_after": after,
                                "drop": E - after, "delta": delta, "scale": 2 * child_r}
                        add(nid, kc, child_r, "final", cert)
                        continue
            if at_bottom:
                add(nid, kc, r, "r-ball")
            else:
                queue.append(add(nid, kc, child_r, "bad"))
    return CoveringTree(nodes, k, eps, r, R, rho, delta)
