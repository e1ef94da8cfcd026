"""Decoding, accuracy, entropy-based confidence filtering, and line fits.

Accuracy gamma is micro-averaged: correct connection predictions divided by
all candidate connections, pooled over every evaluated instance.  The
confidence of a head is its binary Shannon entropy S in [0, ln 2]; low S
means a sharp, confident head.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .dataset import Dataset
from .dynamics import AdjacencyMatrix, EvolutionInstance, num_pairs, pair_list
from .nn import Model, head_entropy

LN2 = float(np.log(2.0))


def decode_bits(probs: np.ndarray) -> np.ndarray:
    """argmax per head; an exact tie decodes to 0 (no connection)."""
    probs = np.asarray(probs)
    return (probs[..., 1] > probs[..., 0]).astype(np.uint8)


def predict_adjacency(model: Model, instance) -> tuple[AdjacencyMatrix, np.ndarray]:
    """Decoded lattice and per-connection entropies for one instance."""
    data = instance.data if isinstance(instance, EvolutionInstance) else instance
    probs = model.forward(np.asarray(data))
    bits = decode_bits(probs)
    return AdjacencyMatrix.from_bits(bits, model.L), head_entropy(probs)


@dataclass
class PredictionReport:
    """Flat per-(instance, connection) records for one evaluated split."""

    set_tag: str
    L: int
    instance_index: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    predicted: np.ndarray
    truth: np.ndarray
    p_absent: np.ndarray
    p_present: np.ndarray
    entropy: np.ndarray

    def __len__(self):
        return len(self.predicted)

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.truth

    @property
    def gamma(self) -> float:
        return float(self.correct.mean())


def evaluate_batch(model: Model, X: np.ndarray, Y: np.ndarray,
                   set_tag: str = "test", batch_size: int = 256) -> PredictionReport:
    """Run the model over (n, L, M) inputs with (n, K) truth bits."""
    X = np.asarray(X, np.float32)
    Y = np.asarray(Y)
    if len(X) == 0:
        raise ValueError("cannot evaluate an empty set")
    K = num_pairs(model.L)
    preds, ents, p0s, p1s = [], [], [], []
    for i in range(0, len(X), batch_size):
        probs = model.forward(X[i:i + batch_size])
        preds.append(decode_bits(probs))
        ents.append(head_entropy(probs))
        p0s.append(probs[..., 0])
        p1s.append(probs[..., 1])
    pairs = np.array(pair_list(model.L))
    n = len(X)
    return PredictionReport(
        set_tag=set_tag,
        L=model.L,
        instance_index=np.repeat(np.arange(n), K),
        pair_i=np.tile(pairs[:, 0], n),
        pair_j=np.tile(pairs[:, 1], n),
        predicted=np.concatenate(preds).reshape(-1),
        truth=Y.astype(np.uint8).reshape(-1),
        p_absent=np.concatenate(p0s).reshape(-1),
        p_present=np.concatenate(p1s).reshape(-1),
        entropy=np.concatenate(ents).reshape(-1),
    )


def evaluate_dataset(model: Model, dataset: Dataset,
                     set_tag: Optional[str] = None) -> PredictionReport:
    items = dataset.items
    if set_tag is not None:
        dataset = dataset.split(set_tag)
        items = dataset.items
    tags = {it.split for it in items}
    tag = set_tag or (tags.pop() if len(tags) == 1 else "mixed")
    X, Y = dataset.arrays()
    return evaluate_batch(model, X, Y, set_tag=tag)


def accuracy(reports) -> float:
    """Pooled gamma over one report or an iterable of reports."""
    if isinstance(reports, PredictionReport):
        reports = [reports]
    reports = list(reports)
    if not reports or all(len(r) == 0 for r in reports):
        raise ValueError("accuracy of an empty report is undefined")
    correct = sum(int(r.correct.sum()) for r in reports)
    total = sum(len(r) for r in reports)
    return correct / total


@dataclass(frozen=True)
class EntropySplit:
    mean_correct: Optional[float]    # None when there is no correct record
    mean_incorrect: Optional[float]  # None when there is no incorrect record


def entropy_split(report: PredictionReport) -> EntropySplit:
    """Mean entropy over the correct and the incorrect predictions."""
    ok = report.correct
    s = report.entropy
    return EntropySplit(
        mean_correct=float(s[ok].mean()) if ok.any() else None,
        mean_incorrect=float(s[~ok].mean()) if (~ok).any() else None,
    )


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    eta: float                        # fraction of connections with S < S_c
    gamma_filtered: Optional[float]   # None when the subset is empty


def confidence_sweep(report: PredictionReport,
                     thresholds: Sequence[float]) -> list[SweepPoint]:
    points = []
    s = report.entropy
    ok = report.correct
    for sc in thresholds:
        mask = s < sc
        eta = float(mask.mean())
        gamma_f = float(ok[mask].mean()) if mask.any() else None
        points.append(SweepPoint(threshold=float(sc), eta=eta,
                                 gamma_filtered=gamma_f))
    return points


@dataclass(frozen=True)
class FitResult:
    a: float   # slope
    b: float   # intercept
    r2: float

    def predict(self, x):
        return self.a * np.asarray(x, np.float64) + self.b


def linear_fit(points: Iterable[tuple[float, float]]) -> FitResult:
    """Ordinary least squares y = a*x + b with the coefficient of
    determination R^2 = 1 - SS_res / SS_tot."""
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.all(x == x[0]):
        raise ValueError("fit is degenerate: all abscissae identical")
    design = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (a * x + b)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return FitResult(a=float(a), b=float(b), r2=r2)


# ---------------------------------------------------------------------------
# CSV emission

REPORT_COLUMNS = ("instance", "i", "j", "predicted", "truth",
                  "p_absent", "p_present", "entropy")


def write_report_csv(report: PredictionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for t in range(len(report)):
            writer.writerow([
                report.instance_index[t], report.pair_i[t], report.pair_j[t],
                report.predicted[t], report.truth[t],
                repr(float(report.p_absent[t])), repr(float(report.p_present[t])),
                repr(float(report.entropy[t]))])


def read_report_csv(path, set_tag: str = "unknown") -> PredictionReport:
    cols = {name: [] for name in REPORT_COLUMNS}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for name in REPORT_COLUMNS:
                cols[name].append(row[name])
    as_int = lambda name: np.array([int(v) for v in cols[name]])
    as_f = lambda name: np.array([float(v) for v in cols[name]])
    pj = as_int("j")
    L = int(pj.max()) + 1 if len(pj) else 0
    return PredictionReport(
        set_tag=set_tag, L=L,
        instance_index=as_int("instance"), pair_i=as_int("i"), pair_j=pj,
        predicted=as_int("predicted").astype(np.uint8),
        truth=as_int("truth").astype(np.uint8),
        p_absent=as_f("p_absent"), p_present=as_f("p_present"),
        entropy=as_f("entropy"))


SWEEP_COLUMNS = ("s_c", "eta", "gamma_filtered")


def write_sweep_csv(points: Sequence[SweepPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for p in points:
            gf = "nan" if p.gamma_filtered is None else repr(p.gamma_filtered)
            writer.writerow([repr(p.threshold), repr(p.eta), gf])
