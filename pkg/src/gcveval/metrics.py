"""Simulation quality (A_o) and transfer quality (S_o) from a GCV matrix.

Both metrics are convex combinations of the forward transfer ratios R_oi
(synthetic model evaluated on reference test sets), differing only in how
the per-reference weights are derived:

* Simulation quality weights each reference by how well its own model
  transfers back to the synthetic domain:

      w_i = R_io / sum_j R_jo          A_o = sum_i w_i * R_oi

  A high reverse ratio marks a reference the synthetic data resembles, so
  A_o rewards realism with respect to the most similar references.

* Transfer quality weights each reference by its dominance in the pairwise
  transfer network among references:

      C_ij = R_ij / (R_ij + R_ji)      for ordered pairs i != j
      v_i  = 2 / (N - 1) * sum_{j != i} C_ij

  Raw v values sum to N (each unordered pair contributes C_ij + C_ji = 1,
  there are N(N-1)/2 pairs, scaled by 2/(N-1)), so the normalized weights
  used in S_o are v_i / N. The report records this as "v normalized by sum".

Complementary dominance pairs are computed from one shared division
(C_ji = 1 - C_ij) so C_ij + C_ji equals 1 exactly in floating point.

No clamping anywhere: forward ratios above 1 propagate into scores above 1.
With a single reference the pairwise network is empty, so S_o is reported
as unavailable rather than silently zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateWeights, TooFewReferences, UndefinedDominance
from .matrix import GcvMatrix

V_NORMALIZATION_NOTE = "v normalized by sum"
S_O_UNAVAILABLE = "n/a (requires >= 2 references)"

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SimulationWeights:
    """Per-reference weights proportional to the reverse ratios R_io."""

    reference_ids: tuple[str, ...]
    reverse_ratios: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        total = sum(self.weights)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"simulation weights sum to {total}, not 1")


@dataclass(frozen=True)
class TransferWeights:
    """Pairwise dominance coefficients and the centrality weights they induce."""

    reference_ids: tuple[str, ...]
    dominance: tuple[tuple[str, str, float], ...]  # (from_id, to_id, C_ij)
    raw: tuple[float, ...]         # v_i, sums to N
    normalized: tuple[float, ...]  # v_i / sum(v), sums to 1

    def dominance_of(self, from_id: str, to_id: str) -> float:
        for a, b, c in self.dominance:
            if a == from_id and b == to_id:
                return c
        raise KeyError((from_id, to_id))


@dataclass(frozen=True)
class QualityScores:
    """Both headline metrics plus every intermediate, for report transparency."""

    a_o: float
    s_o: float | None
    s_o_note: str | None
    forward_ratios: tuple[float, ...]
    simulation: SimulationWeights
    transfer: TransferWeights | None
    matrix_fingerprint: str
    metric_name: str


def simulation_weights(g: GcvMatrix) -> SimulationWeights:
    """w_i = R_io / sum_j R_jo over the reference rows of column 0."""
    reverse = g.reverse_ratios()
    total = sum(reverse)
    if total <= 0.0:
        raise DegenerateWeights(
            "every reverse ratio R_io is zero; no reference model transfers "
            "to the synthetic domain"
        )
    return SimulationWeights(
        reference_ids=g.dataset_ids[1:],
        reverse_ratios=reverse,
        weights=tuple(r / total for r in reverse),
    )


def simulation_quality(g: GcvMatrix, w: SimulationWeights) -> float:
    """A_o: reverse-ratio-weighted average of the forward ratios."""
    total = sum(w.weights)
    if abs(total - 1.0) > _WEIGHT_SUM_TOL * max(1, len(w.weights)):
        raise ValueError(f"weights sum to {total}, not 1")
    return sum(wi * ri for wi, ri in zip(w.weights, g.forward_ratios()))


def transfer_weights(g: GcvMatrix) -> TransferWeights:
    """Dominance C_ij over reference pairs and centrality weights v."""
    n = g.n_references
    if n < 2:
        raise TooFewReferences(n)
    ref_ids = g.dataset_ids[1:]

    # C for ordered pairs; the complement is derived, not re-divided, so
    # each pair sums to 1 exactly.
    dominance: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in range(i + 1, n):
            r_ij = g.ratios[i + 1][j + 1]
            r_ji = g.ratios[j + 1][i + 1]
            denom = r_ij + r_ji
            if denom == 0.0:
                raise UndefinedDominance(ref_ids[i], ref_ids[j])
            c_ij = r_ij / denom
            dominance[(i, j)] = c_ij
            dominance[(j, i)] = 1.0 - c_ij

    scale = 2.0 / (n - 1)
    raw = tuple(
        scale * sum(dominance[(i, j)] for j in range(n) if j != i)
        for i in range(n)
    )
    total = sum(raw)  # equals N up to rounding
    normalized = tuple(v / total for v in raw)
    triples = tuple(
        (ref_ids[i], ref_ids[j], dominance[(i, j)])
        for i in range(n) for j in range(n) if i != j
    )
    return TransferWeights(
        reference_ids=ref_ids,
        dominance=triples,
        raw=raw,
        normalized=normalized,
    )


def transfer_quality(g: GcvMatrix, v: TransferWeights) -> float:
    """S_o: dominance-weighted average of the forward ratios."""
    total = sum(v.normalized)
    if abs(total - 1.0) > _WEIGHT_SUM_TOL * max(1, len(v.normalized)):
        raise ValueError(f"normalized weights sum to {total}, not 1")
    return sum(vi * ri for vi, ri in zip(v.normalized, g.forward_ratios()))


def score(g: GcvMatrix) -> QualityScores:
    """Compute both metrics with all intermediates.

    A_o needs one reference; S_o needs two, and is marked unavailable
    (never silently zero) below that.
    """
    sim = simulation_weights(g)
    a_o = simulation_quality(g, sim)
    if g.n_references >= 2:
        trans = transfer_weights(g)
        s_o: float | None = transfer_quality(g, trans)
        note = None
    else:
        trans = None
        s_o = None
        note = S_O_UNAVAILABLE
    return QualityScores(
        a_o=a_o,
        s_o=s_o,
        s_o_note=note,
        forward_ratios=g.forward_ratios(),
        simulation=sim,
        transfer=trans,
        matrix_fingerprint=g.fingerprint(),
        metric_name=g.metric_name,
    )
