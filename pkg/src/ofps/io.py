"""File formats: amplitude JSON, CSV tables, JSON lines and run manifests.

Data files never carry timestamps, so reruns with the same parameters are
byte-identical; the timestamp lives in a ``.manifest.json`` sidecar.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .fock import NORM_TOL, FockCutoff, TwoModePureState

AMPLITUDE_CONVENTION = (
    "amplitudes are (re, im) pairs in row-major flat order k = i*(N+1)+j "
    "for the two-mode Fock ket |i, j>"
)


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    library_version: str
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    assumptions: list = field(default_factory=list)


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_manifest(path, manifest: RunManifest) -> Path:
    target = manifest_path(path)
    target.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return target


def amplitudes_to_pairs(amps) -> list[list[float]]:
    amps = np.asarray(amps, dtype=complex)
    return [[float(a.real), float(a.imag)] for a in amps]


def pairs_to_amplitudes(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("amplitudes must be a list of (re, im) pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def state_record(state: TwoModePureState, **extra) -> dict:
    rec = {"convention": AMPLITUDE_CONVENTION, "N": state.cutoff.N, "amplitudes": amplitudes_to_pairs(state.amplitudes)}
    rec.update(extra)
    return rec


def write_json(path, record: dict):
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def read_state(path) -> tuple[TwoModePureState, dict]:
    """Load a probe written by ``state_record``; returns the state and the full record."""
    rec = json.loads(Path(path).read_text())
    try:
        N = int(rec["N"])
        amps = pairs_to_amplitudes(rec["amplitudes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a probe-state file ({exc})") from None
    cutoff = FockCutoff(N)
    if abs(np.vdot(amps, amps).real - 1.0) <= NORM_TOL:
        return TwoModePureState(cutoff, amps), rec  # keep the stored bits
    return TwoModePureState.from_amplitudes(cutoff, amps), rec


def write_csv(path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_amplitude_csv(path, state: TwoModePureState):
    """Rows ``(i, j, amplitude)``; complex amplitudes get ``re`` and ``im`` columns."""
    i, j = state.cutoff.occupations()
    amps = state.amplitudes
    if np.all(amps.imag == 0):
        write_csv(path, ["i", "j", "amplitude"], zip(i.tolist(), j.tolist(), amps.real.tolist()))
    else:
        write_csv(path, ["i", "j", "amplitude_re", "amplitude_im"],
                  zip(i.tolist(), j.tolist(), amps.real.tolist(), amps.imag.tolist()))


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
