"""Latent-space analyses: progress/variance projection, linear dynamics,
Gaussian-mixture clustering with outlier detection, and a next-step
prediction benchmark over traces of trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grammar import Grammar, Tree, serialize_tree
from .numerics import Rng, cholesky_solve, op_norm, sym_eig_topk
from .ted import ted


class AnalysisError(ValueError):
    """Raised for shape mismatches or degenerate inputs."""


@dataclass
class Trace:
    """One student's ordered sequence of latent codes for one task."""

    student: str
    task: str
    points: np.ndarray  # (T, n)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2:
            raise AnalysisError("trace points must be a (T, n) array")


# ---------------------------------------------------------------------------
# progress/variance projection


@dataclass
class ProjectionModel:
    """2D map of latent codes: progress toward the reference solution on
    the first axis, dominant residual variance on the second."""

    origin: np.ndarray       # x0, code of the empty/starting program
    target: np.ndarray       # x*, code of the reference solution
    direction: np.ndarray    # unit vector along target - origin
    residual_axis: np.ndarray
    scale: float             # ||target - origin||


def fit_projection(points: np.ndarray, origin: np.ndarray, target: np.ndarray) -> ProjectionModel:
    """Fit the 2D projection from a cloud of latent codes.

    The first axis is the unit vector from origin to target. Points are
    centered at the origin code and their component along that axis is
    removed; the second axis is the top eigenvector of the residual
    scatter matrix. If the residual scatter is (numerically) zero, the
    second axis falls back to the first coordinate axis orthogonalized
    against the progress direction.
    """
    points = np.asarray(points, dtype=float)
    origin = np.asarray(origin, dtype=float)
    target = np.asarray(target, dtype=float)
    if points.ndim != 2 or origin.shape != (points.shape[1],) or target.shape != origin.shape:
        raise AnalysisError("points must be (m, n) with matching origin/target vectors")
    delta = target - origin
    scale = float(np.linalg.norm(delta))
    if scale == 0.0:
        raise AnalysisError("origin and target codes coincide")
    direction = delta / scale
    centered = points - origin
    residual = centered - np.outer(centered @ direction, direction)
    scatter = residual.T @ residual
    values, vectors = sym_eig_topk(scatter, 1)
    if values.size and values[0] > 1e-12:
        axis = vectors[:, 0]
    else:
        axis = np.zeros_like(direction)
        axis[0] = 1.0
        axis = axis - (axis @ direction) * direction
        nrm = np.linalg.norm(axis)
        if nrm < 1e-12:
            axis = np.zeros_like(direction)
            axis[1 % axis.size] = 1.0
            axis = axis - (axis @ direction) * direction
            nrm = np.linalg.norm(axis)
        axis = axis / nrm
    return ProjectionModel(origin, target, direction, axis, scale)


def project(pm: ProjectionModel, x: np.ndarray) -> np.ndarray:
    """Map a latent code to (progress, variance). The origin maps to
    (0, ·) and the target to (1, ·) on the first coordinate."""
    x = np.asarray(x, dtype=float)
    basis = np.stack([pm.direction, pm.residual_axis])
    return basis @ (x - pm.origin) / pm.scale


def embed(pm: ProjectionModel, y: np.ndarray) -> np.ndarray:
    """Right inverse of :func:`project`: map 2D coordinates back to the
    plane spanned by the two axes in the latent space."""
    y = np.asarray(y, dtype=float)
    basis = np.stack([pm.direction, pm.residual_axis])
    return basis.T @ y * pm.scale + pm.origin


# ---------------------------------------------------------------------------
# linear dynamical system


@dataclass
class DynSys:
    """Per-attractor linear dynamics x_{t+1} = x_t + W (x* - x_t)."""

    attractors: np.ndarray  # (K, n)
    weights: np.ndarray     # (K, n, n)


def _nearest_attractor(ds: DynSys, x: np.ndarray) -> int:
    dists = np.linalg.norm(ds.attractors - x, axis=1)
    return int(np.argmin(dists))  # argmin takes the lowest index on ties


def fit_dynsys(traces: list[Trace], attractors: np.ndarray, reg: float = 1e-5) -> DynSys:
    """Ridge-regression fit of one weight matrix per attractor.

    Each observed transition (x_t, x_{t+1}) is assigned to the nearest
    attractor of x_t and contributes to that attractor's normal equations
    W (sum d d^T + reg I) = sum (x_{t+1} - x_t) d^T with d = x* - x_t.
    """
    attractors = np.asarray(attractors, dtype=float)
    if attractors.ndim != 2 or attractors.shape[0] < 1:
        raise AnalysisError("attractors must be a nonempty (K, n) array")
    if reg <= 0:
        raise AnalysisError("regularization must be positive")
    K, n = attractors.shape
    lhs = np.tile(reg * np.eye(n), (K, 1, 1))
    rhs = np.zeros((K, n, n))
    ds = DynSys(attractors, np.zeros((K, n, n)))
    count = 0
    for trace in traces:
        pts = trace.points
        if pts.shape[1] != n:
            raise AnalysisError(f"trace dimension {pts.shape[1]} != attractor dimension {n}")
        for t in range(len(pts) - 1):
            x = pts[t]
            j = _nearest_attractor(ds, x)
            d = attractors[j] - x
            lhs[j] += np.outer(d, d)
            rhs[j] += np.outer(pts[t + 1] - x, d)
            count += 1
    if count == 0:
        raise AnalysisError("no transitions in the given traces")
    weights = np.zeros((K, n, n))
    for j in range(K):
        # solve (lhs^T) W^T = rhs^T; lhs is symmetric positive definite
        weights[j] = cholesky_solve(lhs[j], rhs[j].T).T
    return DynSys(attractors, weights)


def dynsys_step(ds: DynSys, x: np.ndarray) -> np.ndarray:
    """One step toward the nearest attractor."""
    x = np.asarray(x, dtype=float)
    j = _nearest_attractor(ds, x)
    return x + ds.weights[j] @ (ds.attractors[j] - x)


def simulate(ds: DynSys, x_start: np.ndarray, tol: float = 1e-6,
             max_iters: int = 1000) -> np.ndarray:
    """Iterate the dynamics from x_start until the step length drops below
    tol or max_iters steps were taken; returns all visited points
    including x_start as rows."""
    x = np.asarray(x_start, dtype=float)
    out = [x]
    for _ in range(max_iters):
        nxt = dynsys_step(ds, x)
        out.append(nxt)
        if np.linalg.norm(nxt - x) < tol:
            break
        x = nxt
    return np.asarray(out)


def stability_check(ds: DynSys) -> list[dict]:
    """Sufficient-condition convergence check per attractor.

    With a single attractor the map is x -> (I - W) x + W x*, which
    converges to x* from everywhere when the largest singular value of
    I - W is below one (a contraction; the spectral radius is bounded by
    the operator norm). A report of sufficient=False does not prove
    divergence — the condition is conservative.
    """
    reports = []
    for j in range(ds.attractors.shape[0]):
        n = ds.weights[j].shape[0]
        sigma = op_norm(np.eye(n) - ds.weights[j])
        reports.append({
            "attractor": j,
            "op_norm": float(sigma),
            "sufficient": bool(sigma < 1.0),
        })
    return reports


# ---------------------------------------------------------------------------
# PCA + Gaussian mixture + outliers


@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # (n, r), columns are directions
    explained: np.ndarray   # fraction of variance per kept component


def fit_pca(points: np.ndarray, variance: float = 0.95) -> PCAModel:
    """Keep the smallest number of principal directions whose cumulative
    explained variance reaches the threshold."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2:
        raise AnalysisError("need at least two points for PCA")
    if not 0 < variance <= 1:
        raise AnalysisError("variance threshold must be in (0, 1]")
    mean = points.mean(axis=0)
    centered = points - mean
    scatter = centered.T @ centered / (points.shape[0] - 1)
    values, vectors = sym_eig_topk(scatter, scatter.shape[0])
    values = np.clip(values, 0.0, None)
    total = values.sum()
    if total == 0.0:
        return PCAModel(mean, vectors[:, :1], np.array([1.0]))
    fractions = values / total
    r = int(np.searchsorted(np.cumsum(fractions), variance - 1e-12) + 1)
    r = min(r, len(values))
    return PCAModel(mean, vectors[:, :r], fractions[:r])


def pca_transform(pca: PCAModel, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return (points - pca.mean) @ pca.components


@dataclass
class GMMModel:
    pca: PCAModel
    weights: np.ndarray  # (K,)
    means: np.ndarray    # (K, r)
    covariances: np.ndarray  # (K, r, r)
    log_likelihood: float = 0.0
    # per-restart mean log-likelihood after every EM iteration
    histories: tuple = ()


def _log_gaussian(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    r = mean.size
    chol = np.linalg.cholesky(cov)
    diff = points - mean
    solved = np.linalg.solve(chol, diff.T)
    maha = (solved * solved).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + logdet + r * np.log(2.0 * np.pi))


def _component_logs(gmm: GMMModel, proj: np.ndarray) -> np.ndarray:
    K = gmm.weights.size
    logs = np.empty((proj.shape[0], K))
    for j in range(K):
        logs[:, j] = np.log(gmm.weights[j]) + _log_gaussian(proj, gmm.means[j], gmm.covariances[j])
    return logs


def fit_gmm(points: np.ndarray, k: int, seed: int = 0, restarts: int = 5,
            max_iter: int = 500, tol: float = 1e-9, reg: float = 1e-6,
            variance: float = 0.95) -> GMMModel:
    """PCA-reduced full-covariance Gaussian mixture fit by EM.

    Each restart initializes responsibilities at random (seeded), runs EM
    to convergence of the mean log-likelihood, and the best restart wins.
    A small diagonal ridge is added to every covariance each M-step.
    """
    points = np.asarray(points, dtype=float)
    if k < 1:
        raise AnalysisError("k must be at least 1")
    if points.ndim != 2 or points.shape[0] < k:
        raise AnalysisError("need at least k points")
    pca = fit_pca(points, variance)
    proj = pca_transform(pca, points)
    m, r = proj.shape
    rng = Rng(seed)
    best: Optional[GMMModel] = None
    histories: list[list[float]] = []
    for _ in range(restarts):
        resp = rng.uniform(0.0, 1.0, (m, k)) + 1e-3
        resp /= resp.sum(axis=1, keepdims=True)
        model = GMMModel(pca, np.full(k, 1.0 / k), np.zeros((k, r)),
                         np.tile(np.eye(r), (k, 1, 1)))
        history: list[float] = []
        prev = -np.inf
        for _ in range(max_iter):
            # M-step from current responsibilities
            nk = resp.sum(axis=0)
            model.weights = nk / m
            model.means = (resp.T @ proj) / nk[:, None]
            for j in range(k):
                diff = proj - model.means[j]
                model.covariances[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + reg * np.eye(r)
            # E-step
            logs = _component_logs(model, proj)
            top = logs.max(axis=1, keepdims=True)
            lse = top[:, 0] + np.log(np.exp(logs - top).sum(axis=1))
            resp = np.exp(logs - lse[:, None])
            ll = float(lse.mean())
            history.append(ll)
            if abs(ll - prev) < tol:
                prev = ll
                break
            prev = ll
        histories.append(history)
        model.log_likelihood = prev
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    best.histories = tuple(tuple(h) for h in histories)
    return best


def gmm_logdensity(gmm: GMMModel, points: np.ndarray) -> np.ndarray:
    """Per-point log-density under the mixture (in the reduced space)."""
    proj = pca_transform(gmm.pca, np.asarray(points, dtype=float))
    logs = _component_logs(gmm, proj)
    top = logs.max(axis=1, keepdims=True)
    return top[:, 0] + np.log(np.exp(logs - top).sum(axis=1))


def gmm_posterior(gmm: GMMModel, points: np.ndarray) -> np.ndarray:
    """Per-point component responsibilities; each row sums to 1."""
    proj = pca_transform(gmm.pca, np.asarray(points, dtype=float))
    logs = _component_logs(gmm, proj)
    top = logs.max(axis=1, keepdims=True)
    resp = np.exp(logs - top)
    return resp / resp.sum(axis=1, keepdims=True)


def gmm_assign(gmm: GMMModel, points: np.ndarray) -> np.ndarray:
    """Most probable component index per point."""
    proj = pca_transform(gmm.pca, np.asarray(points, dtype=float))
    return np.argmax(_component_logs(gmm, proj), axis=1)


def detect_outliers(logdensities) -> list[int]:
    """Indices of samples whose log-density is unusually low.

    Scores are s_i = l_i / l_min where l_min is the most negative
    log-density, so s lies in (0, 1] with larger meaning less likely.
    A sample is an outlier when s_i >= 2 * mean(s); with all-equal
    densities (including a single sample) nothing is flagged.
    """
    ll = np.asarray(logdensities, dtype=float)
    if ll.size == 0:
        raise AnalysisError("need at least one log-density")
    lmin = ll.min()
    if lmin >= 0.0:
        raise AnalysisError("expected at least one negative log-density")
    scores = ll / lmin
    threshold = 2.0 * scores.mean()
    return [int(i) for i in np.nonzero(scores >= threshold)[0]]


# ---------------------------------------------------------------------------
# next-step prediction benchmark


def rmse_of_predictor(traces: list[list[Tree]], predictor: Callable[[Tree], Tree]) -> float:
    """RMSE of tree edit distance between predicted and actual next trees."""
    errors = []
    for trace in traces:
        for i in range(len(trace) - 1):
            guess = predictor(trace[i])
            errors.append(ted(guess, trace[i + 1]))
    if not errors:
        raise AnalysisError("no transitions to evaluate")
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(errors * errors)))


def identity_predictor() -> Callable[[Tree], Tree]:
    """Baseline: predict no change."""
    return lambda t: t


def nearest_neighbor_predictor(g: Grammar, transitions: list[tuple[Tree, Tree]]) -> Callable[[Tree], Tree]:
    """Baseline: return the successor of the training tree closest in edit
    distance; distance ties are broken by the lexicographically smallest
    serialization of the candidate's predecessor."""
    if not transitions:
        raise AnalysisError("nearest-neighbor predictor needs training transitions")
    keyed = sorted(transitions, key=lambda pair: serialize_tree(g, pair[0]))

    def predict(t: Tree) -> Tree:
        best_d = None
        best_succ = None
        for prev, succ in keyed:
            d = ted(t, prev)
            if best_d is None or d < best_d:
                best_d, best_succ = d, succ
        return best_succ

    return predict


def latent_predictor(encode_fn: Callable[[Tree], np.ndarray], decode_fn, ds: DynSys) -> Callable[[Tree], Tree]:
    """Encode, take one step of the linear dynamics, decode."""

    def predict(t: Tree) -> Tree:
        return decode_fn(dynsys_step(ds, encode_fn(t)))

    return predict

ALL_METHODS = ("identity", "onenn", "linear")


def prediction_errors(model, train_traces: list[list[Tree]], test_traces: list[list[Tree]],
                      solution: Tree, lam: float = 1e-5,
                      methods: tuple[str, ...] = ALL_METHODS) -> dict[str, list[float]]:
    """Per-transition edit-distance errors of each prediction method.

    For every consecutive pair (t_j, t_{j+1}) in the test traces each
    method predicts a next tree from t_j and is scored by edit distance
    to t_{j+1}. Methods: "identity" predicts no change; "onenn" returns
    the recorded successor of the nearest training tree; "linear"
    encodes, steps the fitted linear dynamics toward the encoded
    solution, and decodes.
    """
    from . import autoencoder as ae

    bad = set(methods) - set(ALL_METHODS)
    if bad:
        raise AnalysisError(f"unknown methods: {sorted(bad)}")
    predictors: dict[str, Callable[[Tree], Tree]] = {}
    if "identity" in methods:
        predictors["identity"] = identity_predictor()
    if "onenn" in methods:
        transitions = [(tr[i], tr[i + 1]) for tr in train_traces for i in range(len(tr) - 1)]
        predictors["onenn"] = nearest_neighbor_predictor(model.grammar, transitions)
    if "linear" in methods:
        x_star = ae.encode(model, solution)
        coded = [Trace("", "", np.asarray([ae.encode(model, t) for t in tr]))
                 for tr in train_traces if len(tr) >= 2]
        ds = fit_dynsys(coded, x_star.reshape(1, -1), reg=lam)
        predictors["linear"] = latent_predictor(lambda t: ae.encode(model, t),
                                                lambda z: ae.decode(model, z), ds)
    errors: dict[str, list[float]] = {name: [] for name in predictors}
    transitions_seen = 0
    for trace in test_traces:
        for i in range(len(trace) - 1):
            transitions_seen += 1
            for name, predict in predictors.items():
                errors[name].append(float(ted(predict(trace[i]), trace[i + 1])))
    if transitions_seen == 0:
        raise AnalysisError("no transitions to evaluate")
    return errors


def predict_eval(model, train_traces: list[list[Tree]], test_traces: list[list[Tree]],
                 solution: Tree, lam: float = 1e-5,
                 methods: tuple[str, ...] = ALL_METHODS) -> dict[str, float]:
    """RMSE-of-edit-distance report per method; see prediction_errors."""
    errors = prediction_errors(model, train_traces, test_traces, solution, lam, methods)
    return {name: float(np.sqrt(np.mean(np.square(errs))))
            for name, errs in errors.items()}
