"""Data corruption that mirrors observed occlusion statistics.

From a reference corpus we estimate per-marker occlusion rates and a pooled
gap-length histogram. Corrupting a clean sequence then places, per marker
and gap length, exactly

    N(l, i) = floor( (L / l)
                     * (l * g[l] / sum_l' l' * g[l'])
                     * p_occ
                     * (rate[i] / sum_i' rate[i']) )

gaps, where ``L`` is the sequence length and ``p_occ`` the total occlusion
budget expressed as a fraction of one marker track. Placement is
longest-first with uniform feasible starts; a placed gap never touches an
existing occluded frame, so re-scanning the output recovers the placed
multiset exactly. Single-frame shifts model ghost-marker jumps. All
randomness flows from per-marker streams spawned off one master seed.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .sequence import MarkerSequence

log = logging.getLogger(__name__)

DEFAULT_P_SHIFT = 0.01
DEFAULT_SIGMA_SHIFT = 3.0  # cm


@dataclass(frozen=True)
class OcclusionStats:
    """Per-marker occlusion rates and pooled gap-length histogram."""

    occlusion_rates: tuple  # fraction of occluded frames per marker
    gap_lengths: tuple  # sorted unique lengths
    gap_probs: tuple  # histogram over gap_lengths, sums to 1

    def __post_init__(self):
        object.__setattr__(self, "occlusion_rates", tuple(self.occlusion_rates))
        object.__setattr__(self, "gap_lengths", tuple(self.gap_lengths))
        object.__setattr__(self, "gap_probs", tuple(self.gap_probs))
        if len(self.gap_lengths) != len(self.gap_probs):
            raise ValidationError("gap_lengths/gap_probs length mismatch")
        # loose enough to absorb canonical-file rounding of each bin
        if self.gap_probs and abs(sum(self.gap_probs) - 1.0) > 1e-3:
            raise ValidationError("gap histogram must sum to 1")

    @property
    def empty(self):
        """True when the corpus contained no occlusion at all."""
        return not self.gap_lengths

    def to_dict(self):
        return {
            "occlusion_rates": [float(r) for r in self.occlusion_rates],
            "gap_lengths": [int(l) for l in self.gap_lengths],
            "gap_probs": [float(p) for p in self.gap_probs],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                tuple(doc["occlusion_rates"]),
                tuple(doc["gap_lengths"]),
                tuple(doc["gap_probs"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed stats document: {exc}") from None


def estimate_stats(seqs):
    """Estimate occlusion statistics from one or more sequences.

    Rates are pooled per marker index; the gap histogram pools maximal
    occlusion runs over all markers and sequences. A fully visible corpus
    yields all-zero rates and an empty histogram (``stats.empty``).
    """
    if isinstance(seqs, MarkerSequence):
        seqs = [seqs]
    seqs = list(seqs)
    if not seqs:
        raise ValidationError("no sequences given")
    m = seqs[0].n_markers
    occluded = np.zeros(m)
    total = np.zeros(m)
    runs = {}
    for seq in seqs:
        if seq.n_markers != m:
            raise ValidationError("sequences have different marker counts")
        vis = seq.visible
        occluded += (~vis).sum(axis=0)
        total += seq.n_frames
        for i in range(m):
            col = vis[:, i]
            t = 0
            while t < seq.n_frames:
                if col[t]:
                    t += 1
                    continue
                run = t
                while run + 1 < seq.n_frames and not col[run + 1]:
                    run += 1
                length = run - t + 1
                runs[length] = runs.get(length, 0) + 1
                t = run + 1
    lengths = sorted(runs)
    count = sum(runs.values())
    probs = [runs[l] / count for l in lengths] if count else []
    return OcclusionStats(tuple(occluded / total), tuple(lengths), tuple(probs))


def gap_counts(stats, seq_length, p_occ):
    """Exact per-length, per-marker gap counts for a corruption run.

    Returns an integer array of shape (len(gap_lengths), M). The floor in
    the formula is kept as-is: no stochastic top-up, so the total occluded
    frame count can undershoot the budget by a bounded deficit.
    """
    if stats.empty:
        raise ValidationError("occlusion stats are empty (fully visible corpus)")
    rates = np.asarray(stats.occlusion_rates, dtype=float)
    if rates.sum() <= 0:
        raise ValidationError("occlusion rates are all zero")
    if not 0 < p_occ <= 1:
        raise ValidationError(f"p_occ must be in (0, 1], got {p_occ}")
    lengths = np.asarray(stats.gap_lengths, dtype=float)
    probs = np.asarray(stats.gap_probs, dtype=float)
    length_mass = lengths * probs
    length_w = length_mass / length_mass.sum()
    marker_w = rates / rates.sum()
    raw = (
        (seq_length / lengths)[:, None]
        * length_w[:, None]
        * p_occ
        * marker_w[None, :]
    )
    return np.floor(raw).astype(int)


def _marker_rng(seed, marker, purpose):
    return np.random.default_rng([seed, marker, purpose])


def _place_marker_gaps(occupied, lengths, rng, t):
    """Place gaps of the given lengths into one marker track.

    ``occupied`` marks frames that may not be occluded again nor touched
    (placement keeps one visible frame of clearance so runs never merge).
    Returns a list of (start, length); truncated gaps are dropped.
    """
    placed = []
    for l in lengths:
        if l > t:
            log.warning("gap length %d exceeds sequence length %d; dropped", l, t)
            continue
        found = None
        for _ in range(100):
            a = int(rng.integers(0, t - l + 1))
            lo = max(0, a - 1)
            hi = min(t, a + l + 1)
            if not occupied[lo:hi].any():
                found = a
                break
        if found is None:
            for a in range(t - l + 1):
                lo = max(0, a - 1)
                hi = min(t, a + l + 1)
                if not occupied[lo:hi].any():
                    found = a
                    break
        if found is None:
            log.warning("no feasible slot for a gap of length %d; truncated", l)
            continue
        occupied[found : found + l] = True
        placed.append((found, l))
    return placed


def place_gaps(seq, counts, gap_lengths, seed):
    """Occlude markers according to exact gap counts.

    Parameters
    ----------
    seq : MarkerSequence
    counts : (len(gap_lengths), M) int array
        As returned by :func:`gap_counts`.
    gap_lengths : sequence of int
    seed : int

    Returns
    -------
    (MarkerSequence, (T, M) bool ndarray)
        Corrupted sequence and the mask of newly occluded entries.
        Visibility only ever flips 1 -> 0; positions are carried unchanged.
    """
    counts = np.asarray(counts, dtype=int)
    t, m = seq.n_frames, seq.n_markers
    if counts.shape != (len(gap_lengths), m):
        raise ValidationError("counts shape does not match lengths/markers")
    vis = np.array(seq.visibility)
    mask = np.zeros((t, m), dtype=bool)
    for i in range(m):
        todo = []
        for li, l in enumerate(gap_lengths):
            todo.extend([int(l)] * counts[li, i])
        if not todo:
            continue
        todo.sort(reverse=True)
        occupied = ~seq.visible[:, i].copy()
        rng = _marker_rng(seed, i, 0)
        for start, l in _place_marker_gaps(occupied, todo, rng, t):
            vis[start : start + l, i] = 0
            mask[start : start + l, i] = True
    return seq.with_positions(seq.positions, vis), mask


def apply_shifts(seq, p_shift=DEFAULT_P_SHIFT, sigma_shift=DEFAULT_SIGMA_SHIFT, seed=0):
    """Displace visible samples by uniform per-coordinate offsets.

    Each visible entry independently shifts with probability ``p_shift``;
    offsets are U(-sigma_shift, sigma_shift) per coordinate. Returns the
    shifted sequence and the (T, M) mask of entries that moved.
    """
    if not 0 <= p_shift <= 1:
        raise ValidationError(f"p_shift must be in [0, 1], got {p_shift}")
    if sigma_shift < 0:
        raise ValidationError("sigma_shift must be >= 0")
    t, m = seq.n_frames, seq.n_markers
    pos = np.array(seq.positions)
    vis = seq.visible
    mask = np.zeros((t, m), dtype=bool)
    for i in range(m):
        rng = _marker_rng(seed, i, 1)
        hit = (rng.random(t) < p_shift) & vis[:, i]
        offsets = rng.uniform(-sigma_shift, sigma_shift, size=(t, 3))
        pos[hit, i] += offsets[hit]
        mask[:, i] = hit
    return seq.with_positions(pos), mask


def per_frame_baseline(seq, p_occ, seed):
    """Independent per-frame occlusion at rate ``p_occ`` (comparison only).

    This is the corruption scheme the histogram-driven placement replaces:
    it matches the overall rate but produces geometrically distributed gap
    lengths with no long-gap mass.
    """
    if not 0 <= p_occ < 1:
        raise ValidationError(f"p_occ must be in [0, 1), got {p_occ}")
    t, m = seq.n_frames, seq.n_markers
    vis = np.array(seq.visibility)
    mask = np.zeros((t, m), dtype=bool)
    for i in range(m):
        rng = _marker_rng(seed, i, 2)
        hit = (rng.random(t) < p_occ) & seq.visible[:, i]
        vis[hit, i] = 0
        mask[:, i] = hit
    return seq.with_positions(seq.positions, vis), mask


@dataclass(frozen=True)
class CorruptionResult:
    sequence: MarkerSequence
    occlusion_mask: np.ndarray  # (T, M) bool, entries occluded by placement
    shift_mask: np.ndarray  # (T, M) bool, entries displaced


def corrupt_sequence(
    seq,
    stats,
    p_occ,
    p_shift=DEFAULT_P_SHIFT,
    sigma_shift=DEFAULT_SIGMA_SHIFT,
    seed=0,
):
    """Histogram-matched gaps followed by sparse single-sample shifts."""
    counts = gap_counts(stats, seq.n_frames, p_occ)
    gapped, occ_mask = place_gaps(seq, counts, stats.gap_lengths, seed)
    shifted, shift_mask = apply_shifts(gapped, p_shift, sigma_shift, seed)
    return CorruptionResult(shifted, occ_mask, shift_mask)
