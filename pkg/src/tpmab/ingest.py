"""Listening-session logs to per-playlist replay pools.

A session is a run of ``N`` songs from one playlist. Each song contributes
four binary per-round rewards, one per listening level, so a song listened
up to level ``L`` becomes ``L`` ones followed by ``4 - L`` zeros and a session
becomes a reward vector of length ``4N``. Pools are written in a small
line-oriented text format so they diff cleanly and round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import SmoothnessSpec, TPMABError

logger = logging.getLogger(__name__)

LEVELS = 4
HEADER = ("session_id", "playlist_id", "position", "skip_level")
POOL_MAGIC = "tpmab-pool v1"


class IngestError(TPMABError, ValueError):
    pass


class BadHeader(IngestError):
    pass


class BadRow(IngestError):
    """A malformed data row. ``all_errors`` lists every bad row found in the input."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.all_errors: list[BadRow] = [self]


class BadLevel(BadRow):
    pass


class BadPosition(BadRow):
    pass


class NoPlaylists(IngestError):
    pass


class EmptyArm(IngestError):
    pass


class InsufficientSamples(EmptyArm):
    pass


class CorruptPool(IngestError):
    pass


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    playlist_id: str
    position: int
    skip_level: int


def level_from_flags(reached: Sequence[bool]) -> tuple[int, bool]:
    """Listening level from four "reached level j" flags.

    Returns the length of the leading run of true flags and whether any
    later flag contradicts it (a level reached without the one below).
    """
    if len(reached) != LEVELS:
        raise ValueError(f"expected {LEVELS} flags, got {len(reached)}")
    level = 0
    while level < LEVELS and reached[level]:
        level += 1
    conflict = any(reached[level:])
    return level, conflict


def encode_song(level: int) -> np.ndarray:
    if not 0 <= level <= LEVELS:
        raise ValueError(f"level must be in [0, {LEVELS}], got {level}")
    out = np.zeros(LEVELS)
    out[:level] = 1.0
    return out


def encode_session(levels: Sequence[int]) -> np.ndarray:
    """Concatenated song encodings; song ``k`` occupies entries ``4k .. 4k+3``."""
    return np.concatenate([encode_song(int(lv)) for lv in levels]) if len(levels) else np.zeros(0)


def parse_sessions(rows: str | Iterable[str]) -> list[SessionRecord]:
    """Parse ``session_id,playlist_id,position,skip_level`` rows (header first).

    Every malformed row is collected; the first one is raised with the full
    list attached as ``all_errors``. Duplicate positions within a session are
    rejected here; gaps and short sessions are left to :func:`build_pool`.
    """
    if isinstance(rows, str):
        rows = io.StringIO(rows)
    reader = csv.reader(rows)
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeader("empty input") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise BadHeader(f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}")

    records: list[SessionRecord] = []
    errors: list[BadRow] = []
    seen: set[tuple[str, int]] = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(HEADER):
            errors.append(BadRow(line, f"expected {len(HEADER)} fields, got {len(row)}"))
            continue
        sid, pid, pos_s, lvl_s = (cell.strip() for cell in row)
        try:
            pos = int(pos_s)
        except ValueError:
            errors.append(BadPosition(line, f"position {pos_s!r} is not an integer"))
            continue
        if pos < 1:
            errors.append(BadPosition(line, f"position {pos} is below 1"))
            continue
        if (sid, pos) in seen:
            errors.append(BadPosition(line, f"session {sid!r} repeats position {pos}"))
            continue
        try:
            level = int(lvl_s)
        except ValueError:
            errors.append(BadLevel(line, f"skip level {lvl_s!r} is not an integer"))
            continue
        if not 0 <= level <= LEVELS:
            errors.append(BadLevel(line, f"skip level {level} outside [0, {LEVELS}]"))
            continue
        seen.add((sid, pos))
        records.append(SessionRecord(sid, pid, pos, level))
    if errors:
        first = errors[0]
        first.all_errors = errors
        raise first
    return records


def format_sessions(records: Iterable[SessionRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow((r.session_id, r.playlist_id, r.position, r.skip_level))
    return buf.getvalue()


@dataclass(frozen=True)
class SessionPool:
    """Per-arm stacks of session reward vectors plus their smoothness spec.

    ``vectors[i]`` has shape ``(n_i, 4N)``; arm ``i`` is playlist
    ``playlist_ids[i]``.
    """

    spec: SmoothnessSpec
    vectors: tuple[np.ndarray, ...]
    playlist_ids: tuple[str, ...]
    session_ids: tuple[tuple[str, ...], ...]
    dropped_incomplete: int = 0
    dropped_switch: int = 0

    @property
    def num_songs(self) -> int:
        return self.spec.alpha

    def stats(self) -> tuple[np.ndarray, np.ndarray]:
        return pool_stats(self)

    def equals(self, other: "SessionPool") -> bool:
        """Bit-exact comparison of spec, ids and vectors."""
        return (
            self.spec == other.spec
            and self.playlist_ids == other.playlist_ids
            and self.session_ids == other.session_ids
            and all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.vectors, other.vectors))
        )


def pool_spec(num_arms: int, n_songs: int) -> SmoothnessSpec:
    """``tau_max = 4N``, ``alpha = N`` and ``R̄ = 4N`` on every arm."""
    return SmoothnessSpec(num_arms, LEVELS * n_songs, n_songs, (float(LEVELS * n_songs),) * num_arms)


def build_pool(records: Sequence[SessionRecord], n_songs: int = 20, top: int = 6) -> SessionPool:
    """Keep complete single-playlist sessions of the ``top`` most played playlists.

    A session is complete when it covers positions ``1..n_songs``; later
    positions are truncated. Sessions touching more than one playlist are
    dropped as playlist switches. Playlists are ranked by complete-session
    count, ties broken by playlist id, and become arms in that order.
    """
    if n_songs < 1 or top < 1:
        raise ValueError("n_songs and top must be positive")
    sessions: dict[str, list[SessionRecord]] = {}
    for r in records:
        sessions.setdefault(r.session_id, []).append(r)

    complete: dict[str, list[tuple[str, np.ndarray]]] = {}
    dropped_incomplete = dropped_switch = 0
    for sid, rows in sessions.items():
        if len({r.playlist_id for r in rows}) > 1:
            dropped_switch += 1
            continue
        by_pos = {r.position: r.skip_level for r in rows}
        if any(p not in by_pos for p in range(1, n_songs + 1)):
            dropped_incomplete += 1
            continue
        levels = [by_pos[p] for p in range(1, n_songs + 1)]
        complete.setdefault(rows[0].playlist_id, []).append((sid, encode_session(levels)))
    if dropped_incomplete or dropped_switch:
        logger.info("dropped %d incomplete sessions and %d playlist switches", dropped_incomplete, dropped_switch)

    if len(complete) < top:
        raise NoPlaylists(f"{len(complete)} playlists have complete sessions, {top} requested")
    ranked = sorted(complete, key=lambda pid: (-len(complete[pid]), pid))[:top]
    return SessionPool(
        spec=pool_spec(top, n_songs),
        vectors=tuple(np.vstack([v for _, v in complete[pid]]) for pid in ranked),
        playlist_ids=tuple(ranked),
        session_ids=tuple(tuple(s for s, _ in complete[pid]) for pid in ranked),
        dropped_incomplete=dropped_incomplete,
        dropped_switch=dropped_switch,
    )


def pool_stats(pool: SessionPool) -> tuple[np.ndarray, np.ndarray]:
    """Per-arm sample mean and unbiased standard deviation of cumulative rewards."""
    mu, sd = [], []
    for i, block in enumerate(pool.vectors):
        if len(block) == 0:
            raise EmptyArm(f"arm {i} has no sessions")
        if len(block) == 1:
            raise InsufficientSamples(f"arm {i} has a single session; standard deviation undefined")
        totals = block.sum(axis=1)
        mu.append(totals.mean())
        sd.append(totals.std(ddof=1))
    return np.array(mu), np.array(sd)


def check_encoding(vector: np.ndarray, n_songs: int) -> None:
    """Raise :class:`CorruptPool` unless ``vector`` is a valid session encoding."""
    v = np.asarray(vector)
    if v.shape != (LEVELS * n_songs,):
        raise CorruptPool(f"vector length {v.size}, expected {LEVELS * n_songs}")
    if not np.all((v == 0.0) | (v == 1.0)):
        raise CorruptPool("per-round rewards must be 0 or 1")
    blocks = v.reshape(n_songs, LEVELS)
    bad = np.nonzero(np.any(np.diff(blocks, axis=1) > 0, axis=1))[0]
    if bad.size:
        raise CorruptPool(f"song {int(bad[0]) + 1} reaches a level without the one below it")


# ---------------------------------------------------------------------------
# Pool files
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def dumps_pool(pool: SessionPool) -> str:
    """Serialise a pool: magic line, spec line, one ``arm`` line per arm, one ``session`` line per vector."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    buf.write(POOL_MAGIC + "\n")
    spec = pool.spec
    writer.writerow(["spec", spec.num_arms, spec.tau_max, spec.alpha, *(_fmt(r) for r in spec.max_reward)])
    for i, (pid, block) in enumerate(zip(pool.playlist_ids, pool.vectors)):
        writer.writerow(["arm", i, pid, len(block)])
    for i, (sids, block) in enumerate(zip(pool.session_ids, pool.vectors)):
        for sid, row in zip(sids, block):
            writer.writerow(["session", i, sid, *(_fmt(x) for x in row)])
    return buf.getvalue()


def loads_pool(text: str) -> SessionPool:
    """Parse and validate a pool file; any inconsistency raises :class:`CorruptPool`."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != POOL_MAGIC:
        raise CorruptPool(f"missing {POOL_MAGIC!r} header")
    reader = csv.reader(lines[1:])
    try:
        head = next(reader)
        if head[0] != "spec":
            raise CorruptPool("second line must be the spec line")
        K, tau, alpha = int(head[1]), int(head[2]), int(head[3])
        rbar = tuple(float(x) for x in head[4:])
        spec = SmoothnessSpec(K, tau, alpha, rbar)
    except CorruptPool:
        raise
    except (StopIteration, IndexError, ValueError, TPMABError) as exc:
        raise CorruptPool(f"bad spec line: {exc}") from None
    if spec != pool_spec(K, alpha):
        raise CorruptPool("spec does not describe a 4-level session pool")

    pids: list[str] = []
    counts: list[int] = []
    rows: list[list[np.ndarray]] = [[] for _ in range(K)]
    sids: list[list[str]] = [[] for _ in range(K)]
    for n, row in enumerate(reader, start=3):
        try:
            kind = row[0]
            if kind == "arm":
                if int(row[1]) != len(pids):
                    raise CorruptPool(f"line {n}: arm lines out of order")
                pids.append(row[2])
                counts.append(int(row[3]))
            elif kind == "session":
                arm = int(row[1])
                if not 0 <= arm < K:
                    raise CorruptPool(f"line {n}: arm {arm} out of range")
                vec = np.array([float(x) for x in row[3:]])
                try:
                    check_encoding(vec, alpha)
                except CorruptPool as exc:
                    raise CorruptPool(f"line {n}: {exc}") from None
                sids[arm].append(row[2])
                rows[arm].append(vec)
            else:
                raise CorruptPool(f"line {n}: unknown record type {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, CorruptPool):
                raise
            raise CorruptPool(f"line {n}: {exc}") from None
    if len(pids) != K:
        raise CorruptPool(f"{len(pids)} arm lines for {K} arms")
    for i in range(K):
        if len(rows[i]) != counts[i]:
            raise CorruptPool(f"arm {i} declares {counts[i]} sessions, found {len(rows[i])}")
    vectors = tuple(np.vstack(r) if r else np.zeros((0, tau)) for r in rows)
    return SessionPool(spec, vectors, tuple(pids), tuple(tuple(s) for s in sids))


def write_pool(pool: SessionPool, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_pool(pool))


def read_pool(path) -> SessionPool:
    with open(path, encoding="utf-8") as fh:
        return loads_pool(fh.read())


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------


def expected_session_reward(level_probs, n_songs: int = 20) -> np.ndarray:
    """Mean cumulative reward per playlist for level probabilities of shape ``(K, 5)`` or ``(K, N, 5)``."""
    p = np.asarray(level_probs, dtype=float)
    per_song = p @ np.arange(LEVELS + 1)
    return per_song.sum(axis=-1) if p.ndim == 3 else n_songs * per_song


def simulate_sessions(
    level_probs,
    sessions_per_playlist: int | Sequence[int],
    n_songs: int = 20,
    seed: int = 0,
    playlist_ids: Sequence[str] | None = None,
) -> list[SessionRecord]:
    """Draw synthetic complete sessions with known per-song level probabilities.

    ``level_probs`` has shape ``(K, 5)`` (same for every song) or
    ``(K, n_songs, 5)``; entry ``L`` is the probability of stopping at
    level ``L``. Sessions of different playlists are interleaved in a fixed
    order so that the output does not group by playlist.
    """
    p = np.asarray(level_probs, dtype=float)
    K = p.shape[0]
    if p.ndim == 2:
        p = np.broadcast_to(p[:, None, :], (K, n_songs, LEVELS + 1))
    if p.shape != (K, n_songs, LEVELS + 1):
        raise ValueError(f"level_probs shape {p.shape} does not match {K} playlists x {n_songs} songs")
    if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0):
        raise ValueError("level probabilities must be non-negative and sum to 1")
    counts = [sessions_per_playlist] * K if np.isscalar(sessions_per_playlist) else list(sessions_per_playlist)
    pids = list(playlist_ids) if playlist_ids is not None else [f"p{i + 1}" for i in range(K)]
    rng = np.random.default_rng(seed)
    order = np.repeat(np.arange(K), counts)
    rng.shuffle(order)
    made = Counter()
    records: list[SessionRecord] = []
    for arm in order:
        made[arm] += 1
        sid = f"{pids[arm]}-s{made[arm]}"
        cdf = np.cumsum(p[arm], axis=-1)
        u = rng.random(n_songs)
        levels = np.minimum((u[:, None] > cdf).sum(axis=1), LEVELS)
        records.extend(SessionRecord(sid, pids[arm], k + 1, int(levels[k])) for k in range(n_songs))
    return records
