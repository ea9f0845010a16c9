"""Syndrome records and their on-disk format.

File layout (text)::

    {"format": "syndrome-record/1", ...header...}
    <hex row for shot 0>
    <hex row for shot 1>
    ...

Each row is the hex encoding of::

    prep byte  (Z syndrome in the low nibble, X in the high nibble)
    n_cycles bytes  (same packing, one byte per cycle)
    2 bytes per terminal readout  (little-endian, bit q = data qubit q)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decoder import BatchDecoder, final_layer
from .frames import unpack_bits
from .surface_code import LOGICAL_Z_SUPPORT, parity_matrices


class RecordFormatError(ValueError):
    pass


@dataclass
class SyndromeRecord:
    """Measurement history for a batch of shots.

    Syndrome arrays hold 4-bit integers (bit ``j`` = row ``j`` of the check
    matrix).  ``terminal_data[:, t]`` is the Z-basis data readout taken after
    ``terminal_lengths[t]`` noisy cycles; for a single contiguous run the last
    terminal length equals ``n_cycles`` and earlier ones are the readouts the
    same shot would have produced had it stopped there.
    """

    protocol: str
    z_syndromes: np.ndarray  # (shots, n_cycles) uint8
    x_syndromes: np.ndarray
    prep_z: np.ndarray  # (shots,) uint8
    prep_x: np.ndarray
    terminal_lengths: np.ndarray  # (T,)
    terminal_data: np.ndarray  # (shots, T) uint16
    encoded: int = 0
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        S, C = self.z_syndromes.shape
        if self.x_syndromes.shape != (S, C):
            raise RecordFormatError("X and Z syndrome arrays differ in shape")
        if self.prep_z.shape != (S,) or self.prep_x.shape != (S,):
            raise RecordFormatError("preparation syndromes must have one entry per shot")
        self.terminal_lengths = np.asarray(self.terminal_lengths, dtype=np.int64)
        if self.terminal_data.shape != (S, len(self.terminal_lengths)):
            raise RecordFormatError("terminal readouts do not match shots x terminal lengths")
        if len(self.terminal_lengths) and (self.terminal_lengths.max() > C or self.terminal_lengths.min() < 1):
            raise RecordFormatError("terminal length outside the recorded cycles")

    @property
    def shots(self) -> int:
        return self.z_syndromes.shape[0]

    @property
    def n_cycles(self) -> int:
        return self.z_syndromes.shape[1]

    @property
    def final_data(self) -> np.ndarray:
        """Readout bits ``(shots, 9)`` after the last terminal length."""
        return unpack_bits(self.terminal_data[:, -1], 9)

    def z_bits(self) -> np.ndarray:
        return unpack_bits(self.z_syndromes, 4)

    def detector_layers(self) -> np.ndarray:
        """Packed Z-syndrome differences ``(shots, n_cycles)``."""
        prev = np.concatenate([self.prep_z[:, None], self.z_syndromes[:, :-1]], axis=1)
        return self.z_syndromes ^ prev

    def final_layers(self) -> np.ndarray:
        """Packed final detector layer per terminal length ``(shots, T)``."""
        H = parity_matrices().H_Z
        data = unpack_bits(self.terminal_data, 9)  # (S, T, 9)
        last = self.z_syndromes[:, self.terminal_lengths - 1]
        bits = final_layer(data, unpack_bits(last, 4), H)
        return (bits << np.arange(4, dtype=np.uint8)).sum(axis=-1).astype(np.uint8)

    def raw_logical(self) -> np.ndarray:
        bits = unpack_bits(self.terminal_data, 9)[..., list(LOGICAL_Z_SUPPORT)]
        return ((bits.sum(axis=-1) + self.encoded) % 2).astype(np.uint8)

    def decode(self, decoder: BatchDecoder | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Corrected and uncorrected logical verdicts, each ``(shots, T)``."""
        decoder = decoder or BatchDecoder()
        par, _ = decoder.decode(self.detector_layers(), self.final_layers(), self.terminal_lengths)
        raw = self.raw_logical()
        return raw ^ par, raw

    def concat(self, other: "SyndromeRecord") -> "SyndromeRecord":
        if not np.array_equal(self.terminal_lengths, other.terminal_lengths) or self.protocol != other.protocol:
            raise RecordFormatError("records are not compatible")
        return SyndromeRecord(
            self.protocol,
            np.concatenate([self.z_syndromes, other.z_syndromes]),
            np.concatenate([self.x_syndromes, other.x_syndromes]),
            np.concatenate([self.prep_z, other.prep_z]),
            np.concatenate([self.prep_x, other.prep_x]),
            self.terminal_lengths,
            np.concatenate([self.terminal_data, other.terminal_data]),
            self.encoded,
            dict(self.manifest),
        )

    # --- serialisation -----------------------------------------------------------------

    def _rows(self) -> np.ndarray:
        prep = (self.prep_z | (self.prep_x << 4)).astype(np.uint8)[:, None]
        cyc = (self.z_syndromes | (self.x_syndromes << 4)).astype(np.uint8)
        term = self.terminal_data.astype("<u2").view(np.uint8).reshape(self.shots, -1)
        return np.concatenate([prep, cyc, term], axis=1)

    def save(self, path: str | Path) -> None:
        header = {
            "format": "syndrome-record/1",
            "protocol": self.protocol,
            "shots": self.shots,
            "n_cycles": self.n_cycles,
            "terminal_lengths": self.terminal_lengths.tolist(),
            "encoded": self.encoded,
            "manifest": self.manifest,
        }
        rows = self._rows()
        lines = [json.dumps(header, sort_keys=True)] + [r.tobytes().hex() for r in rows]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SyndromeRecord":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise RecordFormatError(f"{path}: empty file")
        try:
            h = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"{path}:1: bad header ({exc.msg})") from None
        if h.get("format") != "syndrome-record/1":
            raise RecordFormatError(f"{path}:1: unknown format {h.get('format')!r}")
        S, C, T = h["shots"], h["n_cycles"], len(h["terminal_lengths"])
        width = 1 + C + 2 * T
        body = lines[1 : 1 + S]
        if len(body) != S:
            raise RecordFormatError(f"{path}: header announces {S} shots, found {len(body)}")
        rows = np.empty((S, width), dtype=np.uint8)
        for i, ln in enumerate(body):
            try:
                b = bytes.fromhex(ln.strip())
            except ValueError:
                raise RecordFormatError(f"{path}:{i + 2}: not a hex row") from None
            if len(b) != width:
                raise RecordFormatError(f"{path}:{i + 2}: row has {len(b)} bytes, expected {width}")
            rows[i] = np.frombuffer(b, dtype=np.uint8)
        term = rows[:, 1 + C :].copy().view("<u2").astype(np.uint16).reshape(S, T)
        return cls(
            h["protocol"],
            rows[:, 1 : 1 + C] & 0xF,
            rows[:, 1 : 1 + C] >> 4,
            rows[:, 0] & 0xF,
            rows[:, 0] >> 4,
            np.array(h["terminal_lengths"], dtype=np.int64),
            term,
            h.get("encoded", 0),
            h.get("manifest", {}),
        )


def write_verdicts(path: str | Path, terminal_lengths, corrected: np.ndarray, uncorrected: np.ndarray) -> None:
    """Columnar text: ``shot terminal_length corrected uncorrected``."""
    lines = ["shot terminal_length corrected uncorrected"]
    S, T = corrected.shape
    for s in range(S):
        for t in range(T):
            lines.append(f"{s} {int(terminal_lengths[t])} {int(corrected[s, t])} {int(uncorrected[s, t])}")
    Path(path).write_text("\n".join(lines) + "\n")
