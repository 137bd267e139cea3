"""Kernel SVM training, LOPO cross-validation and the (C, sigma) grid job.

The trainer solves the standard soft-margin kernel SVM dual with a
two-variable SMO loop (maximal-violating-pair selection) to a KKT tolerance,
using the Gaussian RBF kernel exp(-||a-b||^2 / (2 sigma^2)). Multiclass
prediction is one-vs-all with ties broken to the lowest class id.

Grid searches run as MapReduce jobs: every grid-file line ``C \\t sigma`` is
one map task running a full leave-one-patient-out cross-validation, with the
completed fold count as the task's progress unit so the kill-factor policy
can terminate slow couples after two folds. Killed couples stay in the
output with the sentinel accuracy -1.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .core import JobResult, JobSpec, run_job
from .errors import InputError, SolverError
from .records import Record, read_records
from .scheduler import TerminationPolicy, TrackerNode

_EPS = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> float:
    """Gaussian RBF kernel exp(-||a - b||^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch: %s vs %s" % (a.shape, b.shape))
    d2 = float(((a - b) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * sigma * sigma)))


def rbf_gram(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    """Kernel matrix K[i, j] = rbf(A[i], B[j], sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    d2 = (
        (A * A).sum(axis=1)[:, None]
        - 2.0 * A @ B.T
        + (B * B).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (2.0 * sigma * sigma))


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (n_sv, D)
    dual_coef: np.ndarray  # alpha_i * y_i per support vector
    bias: float
    C: float
    sigma: float
    n_iter: int
    # full-problem copies kept for KKT inspection
    alpha: np.ndarray
    labels: np.ndarray

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError("feature dimension mismatch")
        return rbf_gram(X, self.support_vectors, self.sigma) @ self.dual_coef - self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Binary labels; a decision value of exactly 0 maps to +1."""
        return np.where(self.decision_function(X) >= 0.0, 1, -1)


def train_svm(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    sigma: float,
    tol: float = 1e-3,
    max_iter: int = 10**7,
) -> SvmModel:
    """Solve the soft-margin dual by SMO to KKT tolerance ``tol``.

    max  sum(alpha) - 1/2 alpha' Q alpha,  Q = yy' * K
    s.t. 0 <= alpha_i <= C,  sum(alpha_i y_i) = 0
    """
    if C <= 0 or sigma <= 0:
        raise ValueError("C and sigma must be > 0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise InputError("training labels must contain both +1 and -1")
    n = len(y)
    K = rbf_gram(X, X, sigma)
    Q = K * np.outer(y, y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - sum(a)

    pos = y > 0
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        can_up = np.where(pos, alpha < C - _EPS, alpha > _EPS)
        can_dn = np.where(pos, alpha > _EPS, alpha < C - _EPS)
        viol = -y * grad
        up_vals = np.where(can_up, viol, -np.inf)
        dn_vals = np.where(can_dn, viol, np.inf)
        i = int(up_vals.argmax())
        j = int(dn_vals.argmin())
        gap = up_vals[i] - dn_vals[j]
        if not np.isfinite(gap) or gap <= tol:
            break

        # Platt-style two-variable update on the (i, j) pair.
        e_i = y[i] * grad[i]
        e_j = y[j] * grad[j]
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta < _EPS:
            eta = _EPS
        if y[i] != y[j]:
            low = max(0.0, alpha[j] - alpha[i])
            high = min(C, C + alpha[j] - alpha[i])
        else:
            low = max(0.0, alpha[i] + alpha[j] - C)
            high = min(C, alpha[i] + alpha[j])
        a_j = alpha[j] + y[j] * (e_i - e_j) / eta
        a_j = min(max(a_j, low), high)
        a_i = alpha[i] + y[i] * y[j] * (alpha[j] - a_j)
        a_i = min(max(a_i, 0.0), C)  # absorb float creep at the box edge
        d_i, d_j = a_i - alpha[i], a_j - alpha[j]
        if abs(d_j) < _EPS and abs(d_i) < _EPS:
            break  # numerically stuck at the boundary of feasibility
        alpha[i], alpha[j] = a_i, a_j
        grad += Q[:, i] * d_i + Q[:, j] * d_j
    else:
        raise SolverError(
            "SMO did not converge in %d iterations" % max_iter, gap=float(gap)
        )

    # bias such that f(x) = sum(alpha_i y_i K(x_i, x)) - bias
    e_vals = y * grad  # equals g_i - y_i at the current alpha
    free = (alpha > _EPS) & (alpha < C - _EPS)
    if free.any():
        bias = float(e_vals[free].mean())
    else:
        uppers = e_vals[(np.abs(alpha) <= _EPS) & pos | (alpha >= C - _EPS) & ~pos]
        lowers = e_vals[(np.abs(alpha) <= _EPS) & ~pos | (alpha >= C - _EPS) & pos]
        hi = uppers.min() if len(uppers) else 0.0
        lo = lowers.max() if len(lowers) else 0.0
        bias = float((hi + lo) / 2.0)

    sv = alpha > _EPS
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv].copy(),
        bias=bias,
        C=C,
        sigma=sigma,
        n_iter=n_iter,
        alpha=alpha,
        labels=y.copy(),
    )


def dual_objective(model: SvmModel, X: np.ndarray) -> float:
    """Value of the dual objective sum(a) - 1/2 a'Qa at the trained alpha."""
    y = model.labels
    Q = rbf_gram(X, X, model.sigma) * np.outer(y, y)
    a = model.alpha
    return float(a.sum() - 0.5 * a @ Q @ a)


@dataclass
class OvaModel:
    class_ids: list[int]
    models: list[SvmModel]

    def decision_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.stack([m.decision_function(X) for m in self.models])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """argmax of one-vs-all decision values; ties pick the lowest class id."""
        best = self.decision_matrix(X).argmax(axis=0)
        return np.array([self.class_ids[i] for i in best])


def train_ova(
    X: np.ndarray, labels: np.ndarray, C: float, sigma: float, tol: float = 1e-3
) -> OvaModel:
    class_ids = sorted(int(c) for c in np.unique(labels))
    if len(class_ids) < 2:
        raise InputError("need at least two classes to train")
    models = []
    for cid in class_ids:
        y = np.where(labels == cid, 1.0, -1.0)
        models.append(train_svm(X, y, C, sigma, tol=tol))
    return OvaModel(class_ids, models)


# -- dataset file -------------------------------------------------------------


@dataclass
class SvmDataset:
    X: np.ndarray  # (n, D)
    labels: np.ndarray  # (n,) int
    patients: list[str]
    n_classes: int


def load_dataset(path: str) -> SvmDataset:
    """Read ``dim=<D> classes=<K>`` header then ``patient \\t label \\t f1,..`` lines."""
    try:
        with open(path) as f:
            header = dict(kv.split("=") for kv in f.readline().split())
            dim, n_classes = int(header["dim"]), int(header["classes"])
            patients, labels, rows = [], [], []
            for line in f:
                if not line.strip():
                    continue
                pid, label, feats = line.rstrip("\n").split("\t")
                patients.append(pid)
                labels.append(int(label))
                rows.append([float(v) for v in feats.split(",")])
    except (OSError, KeyError, ValueError) as exc:
        raise InputError("bad dataset file %s: %s" % (path, exc)) from exc
    X = np.array(rows)
    if X.shape[1] != dim:
        raise InputError("%s: feature width %d != header dim %d" % (path, X.shape[1], dim))
    return SvmDataset(X=X, labels=np.array(labels), patients=patients, n_classes=n_classes)


def save_dataset(path: str, dataset: SvmDataset) -> None:
    with open(path, "w") as f:
        f.write("dim=%d classes=%d\n" % (dataset.X.shape[1], dataset.n_classes))
        for pid, label, row in zip(dataset.patients, dataset.labels, dataset.X):
            f.write("%s\t%d\t%s\n" % (pid, label, ",".join(repr(float(v)) for v in row)))


# -- cross-validation ----------------------------------------------------------


def lopo_cv(
    dataset: SvmDataset,
    C: float,
    sigma: float,
    progress: Optional[Callable[[int], bool]] = None,
    tol: float = 1e-3,
) -> float:
    """Leave-one-patient-out accuracy; folds iterate in ascending patient_id.

    ``progress(fold)`` fires after each completed fold; a truthy return stops
    the validation and yields the kill sentinel -1.0.
    """
    patients = np.asarray(dataset.patients)
    order = sorted(set(dataset.patients))
    if len(order) < 2:
        raise InputError("LOPO CV needs at least two distinct patients")
    correct = 0
    total = 0
    for fold, held_out in enumerate(order, start=1):
        test_mask = patients == held_out
        model = train_ova(
            dataset.X[~test_mask], dataset.labels[~test_mask], C, sigma, tol=tol
        )
        pred = model.predict(dataset.X[test_mask])
        correct += int((pred == dataset.labels[test_mask]).sum())
        total += int(test_mask.sum())
        if progress is not None and progress(fold):
            return -1.0
    return correct / total


# -- grid job -------------------------------------------------------------------


@dataclass
class ParamCouple:
    C: float
    sigma: float
    accuracy: float  # in [0, 1], or -1 when the task was killed
    runtime: float


@dataclass
class GridSpec:
    c_values: list[float]
    sigma_values: list[float]
    dataset_path: str
    kill_factor: Optional[float] = None

    def write_grid_file(self, path: str) -> int:
        return write_grid_file(path, self.c_values, self.sigma_values)

    def run(self, grid_path: str, workspace: str, out_path: str, **kwargs):
        self.write_grid_file(grid_path)
        return grid_job(
            grid_path, self.dataset_path, workspace, out_path,
            kill_factor=self.kill_factor, **kwargs,
        )


def write_grid_file(path: str, c_values: Iterable[float], sigma_values: Iterable[float]) -> int:
    """One ``C \\t sigma`` line per couple; each line becomes one map task."""
    count = 0
    with open(path, "w") as f:
        for c in c_values:
            for s in sigma_values:
                f.write("%g\t%g\n" % (c, s))
                count += 1
    return count


CvRunner = Callable[[Optional[SvmDataset], float, float, Callable[[int], bool]], float]


def grid_job(
    grid_path: str,
    dataset_path: Optional[str],
    workspace: str,
    out_path: str,
    map_slots: int = 1,
    kill_factor: Optional[float] = None,
    min_reference_count: int = 1,
    job_id: str = "gridsvm",
    cv_runner: Optional[CvRunner] = None,
    nodes: Optional[list[TrackerNode]] = None,
    tol: float = 1e-3,
) -> tuple[list[ParamCouple], Optional[ParamCouple], JobResult]:
    """Grid search as a MapReduce job, one couple per map task.

    Returns (couples sorted by (C, sigma), best couple, job result) and
    writes ``C \\t sigma \\t accuracy \\t runtime_seconds`` lines to out_path.
    The best couple maximizes accuracy with ties broken by smaller C then
    smaller sigma.
    """
    dataset = load_dataset(dataset_path) if dataset_path else None
    if cv_runner is None:
        if dataset is None:
            raise InputError("grid_job needs a dataset unless cv_runner is given")

        def cv_runner(ds, c, s, progress):
            return lopo_cv(ds, c, s, progress=progress, tol=tol)

    def grid_mapper(record: Record, task_io) -> Iterable[Record]:
        c = float(record.key)
        s = float(record.value)
        t0 = time.monotonic()

        def progress(fold: int) -> bool:
            return task_io.report(fold, time.monotonic() - t0)

        accuracy = cv_runner(dataset, c, s, progress)
        runtime = time.monotonic() - t0
        yield Record(
            record.key + b"\t" + record.value, b"%.6f\t%.6f" % (accuracy, runtime)
        )

    def passthrough(key: bytes, values: list[bytes]) -> Iterable[Record]:
        for v in values:
            yield Record(key, v)

    policy = None
    if kill_factor is not None:
        policy = TerminationPolicy(
            kill_factor=kill_factor, checkpoint_unit=2, min_reference_count=min_reference_count
        )
    result = run_job(JobSpec(
        job_id=job_id, input_manifest=grid_path, mapper=grid_mapper,
        reducer=passthrough, workspace=workspace, split_size=1, num_reducers=1,
        map_slots=map_slots, kill_policy=policy, nodes=nodes,
    ))

    couples = []
    lines = []
    for record in read_records(result.output_paths[0]):
        c_txt, s_txt = record.key.split(b"\t")
        acc_txt, rt_txt = record.value.split(b"\t")
        couples.append(ParamCouple(
            C=float(c_txt), sigma=float(s_txt),
            accuracy=float(acc_txt), runtime=float(rt_txt),
        ))
        lines.append((float(c_txt), float(s_txt), record.key + b"\t" + record.value))
    couples.sort(key=lambda p: (p.C, p.sigma))
    lines.sort(key=lambda t: (t[0], t[1]))
    with open(out_path, "wb") as f:
        for _, _, line in lines:
            f.write(line + b"\n")

    best = None
    scored = [p for p in couples if p.accuracy >= 0.0]
    if scored:
        best = min(scored, key=lambda p: (-p.accuracy, p.C, p.sigma))
    return couples, best, result
