"""Single-pixel detection: forward model, projection protocols and detector noise."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateInput, DimensionMismatch
from .patterns import MeasurementMatrix


class Protocol(str, enum.Enum):
    IDEAL = "ideal"
    DIFFERENTIAL = "differential"
    SINGLE_ROUND = "single-round"


@dataclass(frozen=True)
class ProtocolConfig:
    """How patterns are projected and how noisy the detector is.

    ``snr_db=None`` means noiseless.  ``noise_step1=False`` keeps the
    low-resolution pre-detection of the two-step pipeline noiseless.
    """

    protocol: Protocol = Protocol.SINGLE_ROUND
    snr_db: Optional[float] = None
    noise_seed: int = 0
    noise_step1: bool = True

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """Bucket readings of one projection sequence.

    For single-round records ``readings`` holds the raw responses to the
    [0, 1]-normalized patterns, ``coeffs`` the per-pattern ``(c1, c2)`` and
    ``auxiliary_reading`` the response to the all-ones pattern; use
    :meth:`signal` for the de-embedded readings.  Differential records keep
    the positive/negative responses in ``pairs``.
    """

    readings: np.ndarray
    protocol: Protocol
    projections: int
    auxiliary_reading: Optional[float] = None
    coeffs: Optional[np.ndarray] = None
    pairs: Optional[np.ndarray] = None
    noise_seed: Optional[int] = None
    snr_db: Optional[float] = None

    def __post_init__(self):
        if (self.coeffs is not None) != (self.protocol is Protocol.SINGLE_ROUND):
            raise ValueError("coeffs must be present exactly for single-round records")
        if self.coeffs is not None and len(self.coeffs) != len(self.readings):
            raise DimensionMismatch("one (c1, c2) pair per reading required")

    def __len__(self):
        return len(self.readings)

    def signal(self) -> np.ndarray:
        """Readings of the original (signed) patterns."""
        if self.protocol is Protocol.SINGLE_ROUND:
            c1 = self.coeffs[:, 0]
            c2 = self.coeffs[:, 1]
            return c1 * self.readings - c2 * self.auxiliary_reading
        return np.asarray(self.readings)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "reading", "c1", "c2"])
            for i, r in enumerate(self.readings):
                if self.coeffs is None:
                    w.writerow([i, repr(float(r)), "", ""])
                else:
                    c1, c2 = self.coeffs[i]
                    w.writerow([i, repr(float(r)), repr(float(c1)), repr(float(c2))])

    def sidecar(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "projections": self.projections,
            "seed": self.noise_seed,
            "snr_db": self.snr_db,
            "auxiliary_reading": self.auxiliary_reading,
        }

    def save(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        Path(json_path).write_text(json.dumps(self.sidecar(), indent=2) + "\n")

    @classmethod
    def load(cls, csv_path, json_path) -> "DetectionRecord":
        meta = json.loads(Path(json_path).read_text())
        readings, coeffs = [], []
        with open(csv_path, newline="") as fh:
            for row in csv.DictReader(fh):
                readings.append(float(row["reading"]))
                if row["c1"]:
                    coeffs.append((float(row["c1"]), float(row["c2"])))
        return cls(np.array(readings), Protocol(meta["protocol"]), meta["projections"],
                   auxiliary_reading=meta["auxiliary_reading"],
                   coeffs=np.array(coeffs) if coeffs else None,
                   noise_seed=meta["seed"], snr_db=meta["snr_db"])


def _scene(phi: MeasurementMatrix, obj) -> np.ndarray:
    x = np.asarray(obj, dtype=np.float64).ravel()
    if x.size != phi.cols:
        raise DimensionMismatch(f"object has {x.size} pixels, patterns have {phi.cols}")
    return x


def measure_ideal(phi: MeasurementMatrix, obj) -> DetectionRecord:
    """Noiseless ``B = Phi vec(O)`` with signed patterns (not physically projectable)."""
    x = _scene(phi, obj)
    return DetectionRecord(phi.forward(x), Protocol.IDEAL, phi.rows)


def measure_differential(phi: MeasurementMatrix, obj) -> DetectionRecord:
    """Positive/negative pattern pairs; readings are ``scale * (B+ - B-)``.

    Each row is divided by its largest magnitude so both halves
    ``(1 +/- P) / 2`` lie in [0, 1]; the scale is multiplied back afterwards.
    """
    x = _scene(phi, obj)
    scale = np.abs(phi.entries).max(axis=1)
    scale[scale == 0.0] = 1.0
    signed = phi.forward(x) / scale
    total = x.sum()
    plus = 0.5 * (total + signed)
    minus = 0.5 * (total - signed)
    readings = scale * (plus - minus)
    return DetectionRecord(readings, Protocol.DIFFERENTIAL, 2 * phi.rows,
                           pairs=np.column_stack([plus, minus]))


def measure_single_round(phi: MeasurementMatrix, obj) -> DetectionRecord:
    """Project min-max normalized patterns plus one all-ones auxiliary pattern."""
    x = _scene(phi, obj)
    lo, hi = phi.row_extrema()
    c1 = hi - lo
    if np.any(c1 == 0.0):
        raise DegenerateInput(f"pattern {int(np.argmin(c1))} is constant")
    total = x.sum()
    # (P - lo) / c1 applied to x without materializing the projected patterns
    readings = (phi.forward(x) - lo * total) / c1
    return DetectionRecord(readings, Protocol.SINGLE_ROUND, phi.rows + 1,
                           auxiliary_reading=float(total),
                           coeffs=np.column_stack([c1, -lo]))


def measure(phi: MeasurementMatrix, obj, protocol) -> DetectionRecord:
    protocol = Protocol(protocol)
    if protocol is Protocol.IDEAL:
        return measure_ideal(phi, obj)
    if protocol is Protocol.DIFFERENTIAL:
        return measure_differential(phi, obj)
    return measure_single_round(phi, obj)


def add_noise(record: DetectionRecord, snr_db: float, seed: int) -> DetectionRecord:
    """Add white Gaussian noise with ``Var(readings) / sigma^2 = 10^(snr_db / 10)``.

    For single-round records the auxiliary reading receives its own
    independent draw of the same variance.
    """
    var = float(np.var(record.readings))
    if var == 0.0:
        raise DegenerateInput("readings are constant; SNR is undefined")
    sigma = np.sqrt(var / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noisy = record.readings + rng.normal(0.0, sigma, size=len(record.readings))
    aux = record.auxiliary_reading
    if aux is not None:
        aux = float(aux + rng.normal(0.0, sigma))
    return replace(record, readings=noisy, auxiliary_reading=aux,
                   noise_seed=seed, snr_db=float(snr_db))
