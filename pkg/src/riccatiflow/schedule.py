"""Declarative time-dependent Hamiltonian schedules.

A schedule is an ordered list of segments, each carrying a coefficient law
evaluated at absolute time.  Hermitian four-level schedules are usually
written in antisymmetric-coefficient (F) form; explicit matrices are
accepted for other level counts and for the non-Hermitian mode, where the
lower-left block is independent of the coupling block.

Schedules are immutable after construction; sampling is pure.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, ValidationError
from .generators import (
    AntisymmetricCoeffs,
    coeffs_from_hamiltonian,
    hamiltonian_from_coeffs,
)

__all__ = [
    "ConstantLaw",
    "HarmonicLaw",
    "PolynomialLaw",
    "TableLaw",
    "Segment",
    "HamiltonianSchedule",
    "BlockPartition",
    "SubalgebraTag",
    "sample",
    "sample_coeffs",
    "law_hamiltonian",
    "block_partition",
    "make_traceless",
    "classify_subalgebra",
    "parse_config",
    "load_config",
]


def _as_value(v):
    """A law value is either AntisymmetricCoeffs (F form) or a complex matrix."""
    if isinstance(v, AntisymmetricCoeffs):
        return v
    return np.asarray(v, dtype=complex)


def _zero_like(v):
    if isinstance(v, AntisymmetricCoeffs):
        return AntisymmetricCoeffs.zeros(v.dim)
    return np.zeros_like(v)


@dataclass(frozen=True)
class ConstantLaw:
    value: object  # AntisymmetricCoeffs or ndarray

    def __call__(self, t: float):
        return self.value

    def parts(self):
        return [self.value]


@dataclass(frozen=True)
class HarmonicLaw:
    """value(t) = base + amplitude * cos(omega * t + theta), t absolute."""

    base: object
    amplitude: object
    omega: float
    theta: float = 0.0

    def __call__(self, t: float):
        return self.base + self.amplitude * float(np.cos(self.omega * t + self.theta))

    def parts(self):
        return [self.base, self.amplitude]


@dataclass(frozen=True)
class PolynomialLaw:
    """value(t) = sum_k coeffs[k] * t**k, t absolute."""

    coeffs: tuple

    def __call__(self, t: float):
        acc = _zero_like(self.coeffs[0])
        for k, c in enumerate(self.coeffs):
            acc = acc + c * float(t) ** k
        return acc

    def parts(self):
        return list(self.coeffs)


@dataclass(frozen=True)
class TableLaw:
    """Piecewise-linear interpolation of sampled values on an absolute time grid."""

    times: tuple
    values: tuple

    def __call__(self, t: float):
        ts = self.times
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        j = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return self.values[j] * (1.0 - w) + self.values[j + 1] * w

    def parts(self):
        return list(self.values)


@dataclass(frozen=True)
class Segment:
    duration: float
    law: object

    def __post_init__(self):
        if not (self.duration > 0 and np.isfinite(self.duration)):
            raise ValidationError(f"segment duration must be positive and finite, got {self.duration}")


@dataclass(frozen=True)
class HamiltonianSchedule:
    """Time-dependent N-level Hamiltonian as a sequence of law segments."""

    n_levels: int
    segments: tuple
    hermitian: bool = True

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValidationError("need at least two levels")
        if not self.segments:
            raise ValidationError("schedule needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> np.ndarray:
        """Cumulative segment edges [0, t1, ..., total]."""
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def segment_at(self, t: float) -> tuple[int, Segment]:
        total = self.total_duration
        if t < -1e-12 or t > total * (1 + 1e-12) + 1e-12:
            raise DomainError(f"time {t} outside schedule span [0, {total}]")
        edges = self.boundaries()
        idx = min(int(np.searchsorted(edges, min(max(t, 0.0), total), side="right")) - 1,
                  len(self.segments) - 1)
        return idx, self.segments[idx]


class SubalgebraTag(enum.Enum):
    SU2xSU2 = "SU2xSU2"
    SU2xSU2xU1 = "SU2xSU2xU1"
    SO5 = "SO5"
    SU3 = "SU3"
    FullSU4 = "FullSU4"
    GenericN = "GenericN"


@dataclass(frozen=True)
class BlockPartition:
    """Four blocks of an N-level operator for the split N = (N-n) + n.

    In Hermitian mode the lower-left block is coupling.conj().T; the
    non-Hermitian mode keeps an independent lower_coupling (Y-dagger
    stored directly as the n x (N-n) block).
    """

    top: np.ndarray
    coupling: np.ndarray
    lower_coupling: np.ndarray
    bottom: np.ndarray

    @property
    def n_top(self) -> int:
        return self.top.shape[0]

    @property
    def n_bottom(self) -> int:
        return self.bottom.shape[0]

    def assemble(self) -> np.ndarray:
        m, n = self.n_top, self.n_bottom
        out = np.zeros((m + n, m + n), dtype=complex)
        out[:m, :m] = self.top
        out[:m, m:] = self.coupling
        out[m:, :m] = self.lower_coupling
        out[m:, m:] = self.bottom
        return out


def law_hamiltonian(schedule: HamiltonianSchedule, seg: Segment, t: float) -> np.ndarray:
    """Evaluate one segment's law at absolute time t (no segment lookup).

    Integrators use this to keep boundary samples one-sided: at a segment
    edge the outgoing segment's law applies.
    """
    val = seg.law(t)
    if isinstance(val, AntisymmetricCoeffs):
        if schedule.n_levels != 4:
            raise DimensionError("coefficient-form laws require a four-level schedule")
        return hamiltonian_from_coeffs(val)
    val = np.asarray(val, dtype=complex)
    if val.shape != (schedule.n_levels, schedule.n_levels):
        raise DimensionError(
            f"law value shape {val.shape} does not match n_levels {schedule.n_levels}"
        )
    return val


def sample(schedule: HamiltonianSchedule, t: float) -> np.ndarray:
    """The N x N Hamiltonian at absolute time t (domain-checked)."""
    _, seg = schedule.segment_at(t)
    return law_hamiltonian(schedule, seg, t)


def sample_coeffs(schedule: HamiltonianSchedule, t: float, tol: float = 1e-10):
    """Antisymmetric coefficients of the traceless part at time t, or None.

    Available per construction for F-form laws; for Hermitian matrix-form
    four-level schedules the coefficients are recovered by projection.
    """
    _, seg = schedule.segment_at(t)
    val = seg.law(t)
    if isinstance(val, AntisymmetricCoeffs):
        return val if val.dim == 6 else val.embed(6)
    if schedule.n_levels != 4 or not schedule.hermitian:
        return None
    H = np.asarray(val, dtype=complex)
    H0 = H - np.trace(H) / 4.0 * np.eye(4)
    try:
        return coeffs_from_hamiltonian(H0, tol=tol)
    except ValidationError:
        return None


def block_partition(H: np.ndarray, n: int) -> BlockPartition:
    """Split an N x N operator into the 2x2 block structure with lower size n."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionError(f"operator must be square, got {H.shape}")
    N = H.shape[0]
    if not 1 <= n < N:
        raise DimensionError(f"block size n={n} invalid for N={N}")
    m = N - n
    return BlockPartition(
        top=H[:m, :m].copy(),
        coupling=H[:m, m:].copy(),
        lower_coupling=H[m:, :m].copy(),
        bottom=H[m:, m:].copy(),
    )


def make_traceless(H: np.ndarray) -> tuple[np.ndarray, complex]:
    """Remove the trace part: H = H0 + rate * I with rate = Tr(H)/N.

    The returned rate integrates into an overall phase factor
    exp(-i * integral(rate)) of the propagator.
    """
    H = np.asarray(H, dtype=complex)
    rate = complex(np.trace(H)) / H.shape[0]
    return H - rate * np.eye(H.shape[0]), rate


# Index planes spanned by the two commuting single-qubit triplets, and by the
# block-diagonal seven-operator family (two coupled triplets plus the central
# generator); used for the fast pattern checks below.
_TWO_TRIPLET = {(1, 2), (1, 3), (2, 3), (4, 5), (4, 6), (5, 6)}
_U1_FAMILY = {(1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4), (5, 6)}

# The eight-parameter family is the annihilator of this vector: it is the
# direction singled out by the chart constraints z4 = -i z1, z3 = -i z2
# (the flow preserves those constraints exactly when H kills it).
_SU3_ANCHOR = np.array([0.0, 0.0, 1.0, -1.0]) / np.sqrt(2.0)


def _part_coefficients(schedule: HamiltonianSchedule):
    """Coefficient form of every law operand, or None if not expressible."""
    out = []
    for seg in schedule.segments:
        for part in seg.law.parts():
            if isinstance(part, AntisymmetricCoeffs):
                out.append(part if part.dim == 6 else part.embed(6))
            else:
                if schedule.n_levels != 4 or not schedule.hermitian:
                    return None
                H = np.asarray(part, dtype=complex)
                H0 = H - np.trace(H) / 4.0 * np.eye(4)
                try:
                    out.append(coeffs_from_hamiltonian(H0))
                except ValidationError:
                    return None
    return out


def classify_subalgebra(schedule: HamiltonianSchedule) -> SubalgebraTag:
    """Smallest documented symmetry class containing every active generator.

    Checks run from the most specific family outward, so adding active
    coefficients never moves the result to a smaller class.  The all-zero
    schedule classifies as SU2xSU2xU1 (documented tie-break).
    """
    if schedule.n_levels != 4 or not schedule.hermitian:
        return SubalgebraTag.GenericN
    parts = _part_coefficients(schedule)
    if parts is None:
        return SubalgebraTag.GenericN
    active: set[tuple[int, int]] = set()
    for F in parts:
        active |= F.active_pairs(1e-14)
    if not active:
        return SubalgebraTag.SU2xSU2xU1
    if active <= _TWO_TRIPLET:
        return SubalgebraTag.SU2xSU2
    if active <= _U1_FAMILY:
        return SubalgebraTag.SU2xSU2xU1
    if all(
        np.linalg.norm(hamiltonian_from_coeffs(F) @ _SU3_ANCHOR)
        <= 1e-10 * max(1.0, F.norm())
        for F in parts
    ):
        return SubalgebraTag.SU3
    if all(b <= 5 for _, b in active):
        return SubalgebraTag.SO5
    return SubalgebraTag.FullSU4


# --------------------------------------------------------------------------
# Config ingestion


def _ctx(path: str, msg: str) -> ConfigError:
    return ConfigError(f"{path}: {msg}")


def _parse_complex(obj, path: str) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if isinstance(obj, (list, tuple)) and len(obj) == 2 and all(
        isinstance(x, (int, float)) for x in obj
    ):
        return complex(obj[0], obj[1])
    raise _ctx(path, f"expected number or [re, im] pair, got {obj!r}")


def _parse_matrix(obj, path: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise _ctx(path, "expected a nested list matrix")
    try:
        rows = [[_parse_complex(x, path) for x in row] for row in obj]
    except TypeError:
        raise _ctx(path, "expected a nested list matrix") from None
    mat = np.array(rows, dtype=complex)
    if mat.ndim != 2:
        raise _ctx(path, "matrix must be two-dimensional")
    return mat


def _parse_coeffs(obj, path: str) -> AntisymmetricCoeffs:
    if not isinstance(obj, dict):
        raise _ctx(path, "F must be an object of 'mn' keys (missing keys are zero)")
    values = {}
    for key, val in obj.items():
        if not (isinstance(key, str) and len(key) == 2 and key.isdigit()):
            raise _ctx(path, f"bad coefficient key {key!r}; expected two digits like '65'")
        mu, nu = int(key[0]), int(key[1])
        if not (1 <= mu <= 6 and 1 <= nu <= 6) or mu == nu:
            raise _ctx(path, f"coefficient key {key!r} out of range")
        if not isinstance(val, (int, float)):
            raise _ctx(path, f"coefficient {key!r} must be real, got {val!r}")
        values[(mu, nu)] = float(val)
    try:
        return AntisymmetricCoeffs.from_pairs(values)
    except ValidationError as exc:
        raise _ctx(path, str(exc)) from None


def _parse_value(seg: dict, names: tuple[str, str], path: str, schedule_n: int, hermitian: bool):
    """One law operand: either F coefficients or an explicit matrix / block set."""
    fkey, mkey = names
    present = [k for k in (fkey, mkey, f"{mkey}_blocks") if k in seg]
    if len(present) != 1:
        raise _ctx(path, f"segment needs exactly one of '{fkey}' or '{mkey}' (got {present or 'none'})")
    key = present[0]
    if key == fkey:
        if not hermitian:
            raise _ctx(path, "non-Hermitian schedules must supply explicit block matrices")
        return _parse_coeffs(seg[key], f"{path}.{fkey}")
    if key == mkey:
        mat = _parse_matrix(seg[key], f"{path}.{mkey}")
        if mat.shape != (schedule_n, schedule_n):
            raise _ctx(path, f"matrix shape {mat.shape} != n_levels {schedule_n}")
        return mat
    blocks = seg[key]
    if not isinstance(blocks, dict) or set(blocks) != {"top", "v", "y", "bottom"}:
        raise _ctx(path, "blocks must be an object with keys top, v, y, bottom")
    top = _parse_matrix(blocks["top"], f"{path}.top")
    v = _parse_matrix(blocks["v"], f"{path}.v")
    y = _parse_matrix(blocks["y"], f"{path}.y")
    bottom = _parse_matrix(blocks["bottom"], f"{path}.bottom")
    m, n = top.shape[0], bottom.shape[0]
    if m + n != schedule_n:
        raise _ctx(path, f"block sizes {m}+{n} != n_levels {schedule_n}")
    if v.shape != (m, n) or y.shape != (m, n):
        raise _ctx(path, f"coupling blocks must be {m}x{n}")
    return BlockPartition(top, v, y.conj().T, bottom).assemble()


def parse_config(doc: dict) -> HamiltonianSchedule:
    """Build a schedule from a parsed JSON document; errors carry key paths."""
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    n_levels = doc.get("n_levels")
    if not isinstance(n_levels, int) or n_levels < 2:
        raise ConfigError("top level: 'n_levels' must be an integer >= 2")
    hermitian = doc.get("hermitian", True)
    if not isinstance(hermitian, bool):
        raise ConfigError("top level: 'hermitian' must be a boolean")
    raw_segments = doc.get("segments")
    if not isinstance(raw_segments, list) or not raw_segments:
        raise ConfigError("top level: 'segments' must be a non-empty list")

    segments = []
    for i, seg in enumerate(raw_segments):
        path = f"segments[{i}]"
        if not isinstance(seg, dict):
            raise _ctx(path, "expected an object")
        kind = seg.get("law")
        duration = seg.get("duration")
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise _ctx(path, "'duration' must be a positive number")
        if kind == "constant":
            value = _parse_value(seg, ("F", "matrix"), path, n_levels, hermitian)
            law = ConstantLaw(value)
        elif kind == "harmonic":
            base = _parse_value(seg, ("F0", "matrix0"), path, n_levels, hermitian)
            amp = _parse_value(seg, ("F1", "matrix1"), path, n_levels, hermitian)
            omega = seg.get("omega")
            theta = seg.get("theta", 0.0)
            if not isinstance(omega, (int, float)):
                raise _ctx(path, "'omega' must be a number")
            if not isinstance(theta, (int, float)):
                raise _ctx(path, "'theta' must be a number")
            law = HarmonicLaw(base, amp, float(omega), float(theta))
        elif kind == "polynomial":
            raw = seg.get("F_powers") or seg.get("matrix_powers")
            if not isinstance(raw, list) or not raw:
                raise _ctx(path, "'F_powers' (or 'matrix_powers') must be a non-empty list")
            coeffs = []
            for k, item in enumerate(raw):
                sub = {"F": item} if "F_powers" in seg else {"matrix": item}
                coeffs.append(_parse_value(sub, ("F", "matrix"), f"{path}[{k}]", n_levels, hermitian))
            law = PolynomialLaw(tuple(coeffs))
        elif kind == "table":
            times = seg.get("times")
            raw = seg.get("F_values") or seg.get("matrix_values")
            if not isinstance(times, list) or not isinstance(raw, list) or len(times) != len(raw):
                raise _ctx(path, "'times' and 'F_values'/'matrix_values' must be equal-length lists")
            if len(times) < 2:
                raise _ctx(path, "table law needs at least two samples")
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                raise _ctx(path, "table times must be strictly increasing")
            vals = []
            for k, item in enumerate(raw):
                sub = {"F": item} if "F_values" in seg else {"matrix": item}
                vals.append(_parse_value(sub, ("F", "matrix"), f"{path}[{k}]", n_levels, hermitian))
            law = TableLaw(tuple(float(t) for t in times), tuple(vals))
        else:
            raise _ctx(path, f"unknown law {kind!r}; expected constant|harmonic|polynomial|table")
        segments.append(Segment(float(duration), law))

    schedule = HamiltonianSchedule(n_levels=n_levels, segments=tuple(segments), hermitian=hermitian)
    if hermitian:
        for t in (0.0, schedule.total_duration / 3, schedule.total_duration * 0.99):
            H = sample(schedule, t)
            if np.linalg.norm(H - H.conj().T) > 1e-9 * max(1.0, np.linalg.norm(H)):
                raise ConfigError(
                    f"schedule flagged hermitian but the sample at t={t:.3g} is not"
                )
    return schedule


def load_config(path: str) -> HamiltonianSchedule:
    """Parse a JSON config file; JSON syntax errors keep line/column info."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    return parse_config(doc)
