"""Pose-fidelity metrics and distribution distance.

Errors compare an instructed box against a detected box: translation
error is the centre distance (ground-plane by default, optionally full
3D), orientation error is the absolute yaw difference folded into
[0, pi], and a result counts as flipped when that error strictly
exceeds pi/2.  Aggregation averages per class over matched results and
then averages the class means without weighting, so small classes
count as much as large ones.  Flip rate uses the matched count of the
class as its denominator.

The Frechet distance between two feature sets A and B is

    ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^(1/2))

with unbiased covariances.  The matrix square root is evaluated
through the symmetric product S_A^(1/2) S_B S_A^(1/2), whose
eigendecomposition is real; tiny negative eigenvalues from rounding
are clamped to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pngio
from .errors import (
    DimensionMismatchError,
    NonFiniteError,
    OutOfRangeError,
    TooFewSamplesError,
)
from .geometry import Box3D, normalize_angle

FEAT_MAGIC = b"FEAT"

METRIC_MODES = ("ground_plane", "full_3d")

# Eigenvalues of a nominally-PSD matrix below this fraction of the
# largest one are treated as corrupt input rather than rounding noise.
_PSD_TOLERANCE = 1e-6


def translation_error(a: Box3D, b: Box3D, mode: str = "ground_plane") -> float:
    """Centre distance between two boxes in metres.

    ground_plane ignores the vertical axis (the usual driving metric);
    full_3d uses all three components.
    """
    if mode not in METRIC_MODES:
        raise OutOfRangeError(f"unknown metric mode {mode!r}, expected one of {METRIC_MODES}")
    d = a.center - b.center
    if mode == "ground_plane":
        d = d[:2]
    return float(np.linalg.norm(d))


def yaw_error(a: float, b: float) -> float:
    """Absolute yaw difference folded to [0, pi].

    Equal to min over integers k of |a - b + 2 pi k|; wraparound is
    handled so that e.g. yaw_error(-3, 3) is 2 pi - 6, not 6.
    """
    return abs(normalize_angle(float(a) - float(b)))


def is_flipped(aoe: float) -> bool:
    """Whether an orientation error means the box points backwards.

    Strict: exactly pi/2 is not a flip.  The input must already be a
    folded error in [0, pi].
    """
    if not math.isfinite(aoe):
        raise NonFiniteError(f"orientation error must be finite, got {aoe!r}")
    if aoe < 0.0 or aoe > math.pi:
        raise OutOfRangeError(f"orientation error must lie in [0, pi], got {aoe}")
    return aoe > math.pi / 2.0


def _detection_sort_key(det) -> str:
    # Canonical serialization used only to break exact distance+score ties.
    box = det.box
    return (
        f"{det.category}|{box.center[0]!r},{box.center[1]!r},{box.center[2]!r}"
        f"|{box.size[0]!r},{box.size[1]!r},{box.size[2]!r}|{box.yaw!r}|{det.score!r}"
    )


def match_box(category: str, box: Box3D, detections, max_center_dist: float = 2.0):
    """Nearest same-category detection within a ground-plane radius.

    `detections` is any iterable of records with .category, .box and
    .score.  Ties on distance prefer the higher score, then the
    lexicographically smallest serialization, so matching is
    deterministic regardless of input order.  Returns None when
    nothing qualifies.
    """
    best = None
    best_key = None
    for det in detections:
        if det.category != category:
            continue
        dist = float(np.linalg.norm((box.center - det.box.center)[:2]))
        if dist > max_center_dist:
            continue
        key = (dist, -float(det.score), _detection_sort_key(det))
        if best_key is None or key < best_key:
            best, best_key = det, key
    return best


def match_detection(instruction, detections, max_center_dist: float = 2.0):
    """match_box applied to an edit instruction's category and box."""
    return match_box(instruction.category, instruction.box, detections, max_center_dist)


@dataclass(frozen=True)
class InstanceResult:
    """Outcome of scoring one instruction against the detector output."""

    token: str
    category: str
    matched: bool
    ate: float | None = None
    aoe: float | None = None
    flipped: bool | None = None


def evaluate_instructions(
    instructions,
    detections: dict[str, list],
    mode: str = "ground_plane",
    max_center_dist: float = 2.0,
) -> list[InstanceResult]:
    """Score every instruction against its frame's detections.

    The join key is the instruction's frame_token, so detector outputs
    must be grouped under the same tokens the instructions carry.
    Unmatched instructions yield a result with matched=False and no
    error values.
    """
    results = []
    for i, instr in enumerate(instructions):
        token = instr.instance_token or f"{instr.frame_token}:{i}"
        det = match_detection(instr, detections.get(instr.frame_token, []), max_center_dist)
        if det is None:
            results.append(InstanceResult(token=token, category=instr.category, matched=False))
            continue
        aoe = yaw_error(instr.box.yaw, det.box.yaw)
        results.append(
            InstanceResult(
                token=token,
                category=instr.category,
                matched=True,
                ate=translation_error(instr.box, det.box, mode),
                aoe=aoe,
                flipped=is_flipped(aoe),
            )
        )
    return results


@dataclass(frozen=True)
class ClassStats:
    count: int
    matched: int
    match_rate: float
    mean_ate: float | None
    mean_aoe: float | None
    flip_rate: float | None


@dataclass(frozen=True)
class EvalReport:
    """Per-class statistics plus unweighted cross-class means."""

    per_class: dict[str, ClassStats]
    mean_ate: float | None
    mean_aoe: float | None
    flip_rate: float | None
    match_rate: float | None
    fid: float | None = None

    def to_json(self) -> dict:
        return {
            "per_class": {
                name: {
                    "count": s.count,
                    "matched": s.matched,
                    "match_rate": s.match_rate,
                    "mean_ate": s.mean_ate,
                    "mean_aoe": s.mean_aoe,
                    "flip_rate": s.flip_rate,
                }
                for name, s in self.per_class.items()
            },
            "mean_ate": self.mean_ate,
            "mean_aoe": self.mean_aoe,
            "flip_rate": self.flip_rate,
            "match_rate": self.match_rate,
            "fid": self.fid,
        }

    def to_text(self) -> str:
        def fmt(v, width=10):
            return f"{'-':>{width}}" if v is None else f"{v:>{width}.4f}"

        lines = [
            f"{'class':<12}{'count':>7}{'matched':>9}{'match_rate':>12}"
            f"{'mATE_m':>10}{'mAOE_rad':>10}{'flip_rate':>11}"
        ]
        for name in sorted(self.per_class):
            s = self.per_class[name]
            lines.append(
                f"{name:<12}{s.count:>7}{s.matched:>9}{s.match_rate:>12.4f}"
                f"{fmt(s.mean_ate)}{fmt(s.mean_aoe)}{fmt(s.flip_rate, 11)}"
            )
        lines.append(
            f"{'mean':<12}{'':>7}{'':>9}{fmt(self.match_rate, 12)}"
            f"{fmt(self.mean_ate)}{fmt(self.mean_aoe)}{fmt(self.flip_rate, 11)}"
        )
        if self.fid is not None:
            lines.append(f"fid: {self.fid:.6f}")
        return "\n".join(lines)


def aggregate(results: list[InstanceResult], fid: float | None = None) -> EvalReport:
    """Fold per-instance results into class means and cross-class means.

    Error means cover only matched results.  The cross-class mATE,
    mAOE and flip rate average the class means over classes with at
    least one match; the cross-class match rate averages over every
    class present.  math.fsum keeps all means independent of input
    order.
    """
    by_class: dict[str, list[InstanceResult]] = {}
    for r in results:
        by_class.setdefault(r.category, []).append(r)

    per_class: dict[str, ClassStats] = {}
    for name in sorted(by_class):
        rows = by_class[name]
        matched = [r for r in rows if r.matched]
        if matched:
            mean_ate = math.fsum(r.ate for r in matched) / len(matched)
            mean_aoe = math.fsum(r.aoe for r in matched) / len(matched)
            flip_rate = sum(1 for r in matched if r.flipped) / len(matched)
        else:
            mean_ate = mean_aoe = flip_rate = None
        per_class[name] = ClassStats(
            count=len(rows),
            matched=len(matched),
            match_rate=len(matched) / len(rows),
            mean_ate=mean_ate,
            mean_aoe=mean_aoe,
            flip_rate=flip_rate,
        )

    with_matches = [s for s in per_class.values() if s.matched > 0]
    if with_matches:
        mean_ate = math.fsum(s.mean_ate for s in with_matches) / len(with_matches)
        mean_aoe = math.fsum(s.mean_aoe for s in with_matches) / len(with_matches)
        flip_rate = math.fsum(s.flip_rate for s in with_matches) / len(with_matches)
    else:
        mean_ate = mean_aoe = flip_rate = None
    match_rate = (
        math.fsum(s.match_rate for s in per_class.values()) / len(per_class)
        if per_class
        else None
    )
    return EvalReport(
        per_class=per_class,
        mean_ate=mean_ate,
        mean_aoe=mean_aoe,
        flip_rate=flip_rate,
        match_rate=match_rate,
        fid=fid,
    )


@dataclass(frozen=True)
class FeatureSet:
    """N x D float32 feature matrix with at least two rows."""

    data: np.ndarray
    tag: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"features must be 2D (N, D), got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise TooFewSamplesError(f"need at least 2 feature rows, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("feature matrix contains NaN or infinity")
        object.__setattr__(self, "data", arr)


def save_features(features: FeatureSet, path: str | Path) -> None:
    """Write a feature set as a raw float32 tensor (FEAT, version 1)."""
    n, d = features.data.shape
    pngio.write_tensor(path, FEAT_MAGIC, (n, d), features.data)


def load_features(path: str | Path, tag: str = "") -> FeatureSet:
    (n, d), flat = pngio.read_tensor(path, FEAT_MAGIC, 2)
    return FeatureSet(flat.reshape(n, d), tag=tag)


def _moments(features: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    x = features.data.astype(np.float64)
    mu = x.mean(axis=0)
    sigma = np.atleast_2d(np.cov(x, rowvar=False))
    return mu, sigma


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    vals = _clamp_psd(vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _clamp_psd(vals: np.ndarray) -> np.ndarray:
    largest = max(float(vals.max(initial=0.0)), 0.0)
    floor = -_PSD_TOLERANCE * largest
    if float(vals.min(initial=0.0)) < floor:
        raise OutOfRangeError(
            f"matrix is not positive semi-definite (eigenvalue {vals.min()} "
            f"below tolerance {floor})"
        )
    return np.clip(vals, 0.0, None)


def frechet_distance_from_moments(
    mu_a: np.ndarray, sigma_a: np.ndarray, mu_b: np.ndarray, sigma_b: np.ndarray
) -> float:
    """Frechet distance between two Gaussians given mean and covariance."""
    mu_a = np.asarray(mu_a, dtype=np.float64).reshape(-1)
    mu_b = np.asarray(mu_b, dtype=np.float64).reshape(-1)
    sigma_a = np.atleast_2d(np.asarray(sigma_a, dtype=np.float64))
    sigma_b = np.atleast_2d(np.asarray(sigma_b, dtype=np.float64))
    d = mu_a.shape[0]
    if mu_b.shape[0] != d or sigma_a.shape != (d, d) or sigma_b.shape != (d, d):
        raise DimensionMismatchError(
            f"moment shapes disagree: mu {mu_a.shape}/{mu_b.shape}, "
            f"sigma {sigma_a.shape}/{sigma_b.shape}"
        )
    for name, arr in (("mu_a", mu_a), ("mu_b", mu_b), ("sigma_a", sigma_a), ("sigma_b", sigma_b)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{name} contains NaN or infinity")
    diff = mu_a - mu_b
    a_half = _psd_sqrt(sigma_a)
    product = a_half @ sigma_b @ a_half
    cross_vals = _clamp_psd(np.linalg.eigvalsh((product + product.T) / 2.0))
    fid = (
        float(diff @ diff)
        + float(np.trace(sigma_a))
        + float(np.trace(sigma_b))
        - 2.0 * float(np.sum(np.sqrt(cross_vals)))
    )
    return max(fid, 0.0)


def frechet_distance(a: FeatureSet, b: FeatureSet) -> float:
    """Frechet distance between the Gaussian fits of two feature sets.

    Covariances are the unbiased (N-1) sample estimates.  Raises
    DimensionMismatchError when the feature widths differ.
    """
    if a.data.shape[1] != b.data.shape[1]:
        raise DimensionMismatchError(
            f"feature widths differ: {a.data.shape[1]} vs {b.data.shape[1]}"
        )
    mu_a, sigma_a = _moments(a)
    mu_b, sigma_b = _moments(b)
    return frechet_distance_from_moments(mu_a, sigma_a, mu_b, sigma_b)
