"""Gibbs sampling with optional evidence-symmetry orbital moves.

Each iteration resamples one non-evidence atom from its full conditional;
with the configured probability the step is preceded by an orbital jump
that applies a uniform random permutation within each class of
exchangeable constants.  Such permutations leave world weights unchanged,
so the stationary distribution is preserved.  Marginals come from either
the sample frequency or Rao-Blackwellized conditional averaging.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InconsistencyError, InputError
from .mln import (
    Atom,
    Conditioned,
    EvidenceSet,
    Model,
    World,
    ground,
)
from .reduction import constant_symmetry_classes

__all__ = [
    "ChainConfig",
    "MarginalEstimate",
    "gibbs_step",
    "orbital_step",
    "estimate_marginals",
    "kld",
    "RNG_ALGORITHM",
]

RNG_ALGORITHM = "numpy-pcg64/seedsequence"
_BLOCK = 8192


@dataclass(frozen=True)
class ChainConfig:
    """Single-chain settings; burn_in of None means 10% of iterations."""

    iterations: int
    burn_in: int | None = None
    seed: int = 0
    orbital_move_probability: float = 0.1
    estimator: str = "rao_blackwell"

    def __post_init__(self):
        if self.iterations <= 0:
            raise InputError(f"iterations must be positive, got {self.iterations}")
        if not 0.0 <= self.orbital_move_probability <= 1.0:
            raise InputError(
                f"orbital_move_probability must be in [0, 1], got {self.orbital_move_probability}"
            )
        if self.estimator not in ("frequency", "rao_blackwell"):
            raise InputError(f"unknown estimator {self.estimator!r}")
        if self.resolved_burn_in() >= self.iterations:
            raise InputError(
                f"burn_in {self.resolved_burn_in()} must be below iterations {self.iterations}"
            )

    def resolved_burn_in(self) -> int:
        return self.iterations // 10 if self.burn_in is None else self.burn_in


@dataclass(frozen=True)
class MarginalEstimate:
    """Per-atom probability estimates plus convergence snapshots."""

    estimates: dict[Atom, float]
    snapshots: tuple[tuple[int, dict[Atom, float]], ...]
    iterations: int
    seed: int
    estimator: str
    rng_algorithm: str = RNG_ALGORITHM
    world_counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for atom, p in self.estimates.items():
            if not 0.0 <= p <= 1.0:
                raise InputError(f"estimate for {atom} outside [0, 1]: {p}")


# --- elementary chain moves ------------------------------------------------


def _conditional_true_probability(cond: Conditioned, values: np.ndarray, i: int) -> float:
    """P(atom i = true | rest), honoring hard formulas; raises if neither
    setting satisfies them."""
    log1 = 0.0
    log0 = 0.0
    ok1 = ok0 = True
    old = values[i]
    for comp in cond.hard:
        if i in comp.atom_ids:
            values[i] = 1
            sat1 = comp.table[comp.packed_index(values)]
            values[i] = 0
            sat0 = comp.table[comp.packed_index(values)]
            ok1 &= bool(sat1)
            ok0 &= bool(sat0)
    for comp in cond.weighted:
        if i in comp.atom_ids:
            values[i] = 1
            if comp.table[comp.packed_index(values)]:
                log1 += comp.weight
            values[i] = 0
            if comp.table[comp.packed_index(values)]:
                log0 += comp.weight
    values[i] = old
    if not ok1 and not ok0:
        raise InconsistencyError(
            "both settings of an atom violate hard formulas; the model is inconsistent"
        )
    if not ok1:
        return 0.0
    if not ok0:
        return 1.0
    # clamp the log-odds gap so extreme weights cannot overflow exp()
    gap = min(max(log0 - log1, -700.0), 700.0)
    return 1.0 / (1.0 + math.exp(gap))


def gibbs_step(cond: Conditioned, state: World, rng: np.random.Generator) -> World:
    """Resample one uniformly chosen non-evidence atom from its conditional."""
    values = np.array(state.values, dtype=np.uint8)
    i = int(rng.integers(len(values)))
    p = _conditional_true_probability(cond, values, i)
    values[i] = 1 if rng.random() < p else 0
    return cond.world(values)


def _class_permutation(
    classes: Sequence[Sequence[str]], rng: np.random.Generator
) -> dict[str, str]:
    sigma: dict[str, str] = {}
    for cls in classes:
        if len(cls) < 2:
            continue
        perm = rng.permutation(len(cls))
        for src, dst in enumerate(perm):
            if src != dst:
                sigma[cls[src]] = cls[dst]
    return sigma


def _apply_renaming(cond: Conditioned, values: np.ndarray, sigma: Mapping[str, str]) -> np.ndarray:
    out = values.copy()
    for i, atom in enumerate(cond.atoms):
        if any(a in sigma for a in atom.args):
            target = Atom(atom.pred, tuple(sigma.get(a, a) for a in atom.args))
            out[cond.index[target]] = values[i]
    return out


def orbital_step(
    cond: Conditioned,
    state: World,
    classes: Sequence[Sequence[str]],
    rng: np.random.Generator,
) -> World:
    """Apply a uniform random permutation within each symmetry class.

    The induced relabeling of the atom assignment never changes the world
    log weight, because exchangeable constants agree on all evidence and
    do not occur in formulas.
    """
    sigma = _class_permutation(classes, rng)
    if not sigma:
        return state
    return cond.world(_apply_renaming(cond, state.values, sigma))


def find_consistent_world(
    cond: Conditioned,
    rng: np.random.Generator,
    max_restarts: int = 60,
    max_flips: int = 4000,
) -> np.ndarray:
    """Random restarts plus WalkSAT-style repair over the hard formulas."""
    n = len(cond.atoms)
    for _ in range(max_restarts):
        values = rng.integers(0, 2, size=n).astype(np.uint8)
        if not cond.hard:
            return values
        for _ in range(max_flips):
            violated = [
                comp for comp in cond.hard if not comp.table[comp.packed_index(values)]
            ]
            if not violated:
                return values
            comp = violated[int(rng.integers(len(violated)))]
            flip = comp.atom_ids[int(rng.integers(len(comp.atom_ids)))]
            values[flip] ^= 1
    raise InconsistencyError("could not find a world satisfying the hard formulas")


# --- chain runner -----------------------------------------------------------


def estimate_marginals(
    model: Model,
    evidence: EvidenceSet,
    queries: Sequence[Atom],
    config: ChainConfig,
    snapshot_every: int | None = None,
    collect_world_counts: bool = False,
) -> MarginalEstimate:
    """Run one chain and estimate P(atom | evidence) for the query atoms.

    Deterministic given the config: all randomness flows from independent
    PCG64 streams spawned off the seed.  Snapshots record the running
    estimate every `snapshot_every` iterations once past burn-in.
    """
    cond = ground(model).condition(evidence)
    for atom in queries:
        model.check_formula(atom, "query")
    burn_in = config.resolved_burn_in()
    use_orbital = config.orbital_move_probability > 0.0
    classes = constant_symmetry_classes(model, evidence) if use_orbital else ()

    streams = [
        np.random.default_rng(s)
        for s in np.random.SeedSequence(config.seed).spawn(5)
    ]
    init_rng, atom_rng, unif_rng, orbit_decide_rng, orbit_perm_rng = streams

    values = find_consistent_world(cond, init_rng)
    n = len(cond.atoms)
    if n == 0:
        raise InputError("model has no non-evidence atoms to sample")

    fixed: dict[Atom, float] = {}
    open_queries: list[Atom] = []
    for atom in queries:
        if atom in evidence:
            fixed[atom] = 1.0 if evidence[atom] else 0.0
        else:
            open_queries.append(atom)
    qpos = {cond.index[a]: k for k, a in enumerate(open_queries)}
    nq = len(open_queries)
    sums = np.zeros(nq)
    samples = 0

    counts = None
    world_int = 0
    if collect_world_counts:
        if n > 16:
            raise InputError(f"world counting supports at most 16 atoms, got {n}")
        counts = np.zeros(1 << n, dtype=np.int64)
        world_int = int(sum(int(v) << i for i, v in enumerate(values)))

    snapshots: list[tuple[int, dict[Atom, float]]] = []

    def current_estimates() -> dict[Atom, float]:
        est = dict(fixed)
        if samples:
            est.update(
                {a: float(sums[k] / samples) for k, a in enumerate(open_queries)}
            )
        else:
            est.update({a: float(values[cond.index[a]]) for a in open_queries})
        return est

    rao_blackwell = config.estimator == "rao_blackwell"
    t = 0
    while t < config.iterations:
        block = min(_BLOCK, config.iterations - t)
        picks = atom_rng.integers(0, n, size=block)
        unifs = unif_rng.random(block)
        if use_orbital:
            jumps = orbit_decide_rng.random(block) < config.orbital_move_probability
        for b in range(block):
            t += 1
            if use_orbital and jumps[b]:
                sigma = _class_permutation(classes, orbit_perm_rng)
                if sigma:
                    values = _apply_renaming(cond, values, sigma)
                    if counts is not None:
                        world_int = int(sum(int(v) << i for i, v in enumerate(values)))
            i = int(picks[b])
            p = _conditional_true_probability(cond, values, i)
            new = 1 if unifs[b] < p else 0
            if new != values[i]:
                values[i] = new
                world_int ^= 1 << i
            if t > burn_in:
                samples += 1
                if nq:
                    if rao_blackwell:
                        for qi, k in qpos.items():
                            sums[k] += p if qi == i else values[qi]
                    else:
                        for qi, k in qpos.items():
                            sums[k] += values[qi]
                if counts is not None:
                    counts[world_int] += 1
                if snapshot_every and t % snapshot_every == 0:
                    snapshots.append((t, current_estimates()))

    return MarginalEstimate(
        estimates=current_estimates(),
        snapshots=tuple(snapshots),
        iterations=config.iterations,
        seed=config.seed,
        estimator=config.estimator,
        world_counts=counts,
    )


def kld(
    reference: Mapping[Atom, float],
    estimate: Mapping[Atom, float] | MarginalEstimate,
    eps: float = 1e-6,
) -> float:
    """Mean Bernoulli KL divergence from reference marginals to estimates.

    Estimates are clamped to [eps, 1-eps] so empty-count estimates stay
    finite; the reference is used as-is with the 0 log 0 = 0 convention.
    """
    values = estimate.estimates if isinstance(estimate, MarginalEstimate) else estimate
    if not reference:
        raise InputError("reference marginals are empty")
    total = 0.0
    for atom, p in reference.items():
        q = min(max(values[atom], eps), 1.0 - eps)
        term = 0.0
        if p > 0.0:
            term += p * math.log(p / q)
        if p < 1.0:
            term += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
        total += term
    return total / len(reference)
