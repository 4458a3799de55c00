"""Exact simulation of the finite-N two-spin system.

Two simulators are provided.  ``simulate`` runs the full 2N-spin chain in
pure Python and is intended as an oracle for small N.  ``reduced_simulate``
runs the equivalent Markov chain on the empirical moment triple (equivalently
on the four cell counts) in a compiled kernel and is the large-N workhorse.

Both use the direct method over eight aggregated rate classes: a sigma flip
or an omega flip out of each of the four (sigma, omega) cells.  All firms in
a cell share the same rates, so a class is picked with probability
proportional to ``count * rate`` and then, for the full chain, a firm is
picked uniformly inside the cell.

Random streams are Philox generators keyed by ``SeedSequence([seed, replica])``
so every replica is reproducible on its own, independent of scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .errors import DomainError, GridMismatchError, ValidationError
from .meanfield import OdeSolution
from .model import CELLS, InitialLaw, ModelParams

# cell index reached by flipping sigma / omega, in CELLS order
SIGMA_FLIP = (2, 3, 0, 1)
OMEGA_FLIP = (1, 0, 3, 2)
_SIGN_S = np.array([1, 1, -1, -1])
_SIGN_W = np.array([1, -1, 1, -1])
MAX_EVENTS = 2**62


def make_rng(seed: int, replica: Optional[int] = None) -> np.random.Generator:
    """Counter-based stream for ``seed`` (and optionally a replica index)."""
    entropy = [int(seed)] if replica is None else [int(seed), int(replica)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def counts_to_moments(counts) -> np.ndarray:
    """Empirical (m_sigma, m_omega, m_sigma_omega) from cell counts; works row-wise."""
    c = np.asarray(counts, dtype=float)
    n = c.sum(axis=-1, keepdims=True)
    return np.concatenate(
        [
            (c @ _SIGN_S)[..., None],
            (c @ _SIGN_W)[..., None],
            (c @ (_SIGN_S * _SIGN_W))[..., None],
        ],
        axis=-1,
    ) / n


# ---------------------------------------------------------------------------
# full 2N-spin chain

@dataclass
class ParticleState:
    """Spins of all firms plus the bookkeeping needed for O(1) updates.

    ``members[c]`` lists the firms currently in cell ``c`` and ``slot[i]`` is
    the position of firm ``i`` inside its cell list.
    """

    sigma: np.ndarray
    omega: np.ndarray
    cell_counts: List[int]
    t: float = 0.0
    members: List[List[int]] = field(default_factory=list, repr=False)
    slot: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_spins(cls, sigma, omega, t: float = 0.0) -> "ParticleState":
        sigma = np.asarray(sigma, dtype=np.int8).copy()
        omega = np.asarray(omega, dtype=np.int8).copy()
        if sigma.shape != omega.shape or sigma.ndim != 1 or len(sigma) == 0:
            raise ValidationError("sigma and omega must be equal-length, non-empty")
        if not (np.all(np.abs(sigma) == 1) and np.all(np.abs(omega) == 1)):
            raise ValidationError("spins must be +-1")
        cells = _cell_index(sigma, omega)
        members: List[List[int]] = [[], [], [], []]
        slot = np.empty(len(sigma), dtype=np.int64)
        for i, c in enumerate(cells):
            slot[i] = len(members[c])
            members[c].append(i)
        counts = [len(m) for m in members]
        return cls(sigma, omega, counts, float(t), members, slot)

    @property
    def N(self) -> int:
        return len(self.sigma)

    @property
    def m_sigma(self) -> float:
        return (self.cell_counts[0] + self.cell_counts[1] - self.cell_counts[2] - self.cell_counts[3]) / self.N

    def moments(self) -> np.ndarray:
        return counts_to_moments(self.cell_counts)

    def check(self):
        """Assert the counts agree with the spins (debug aid)."""
        assert sum(self.cell_counts) == self.N
        expected = np.bincount(_cell_index(self.sigma, self.omega), minlength=4)
        assert expected.tolist() == self.cell_counts
        for c, m in enumerate(self.members):
            assert len(m) == self.cell_counts[c]
            for k, i in enumerate(m):
                assert self.slot[i] == k

    def _move(self, i: int, src: int, dst: int):
        lst = self.members[src]
        k = self.slot[i]
        last = lst.pop()
        if last != i:
            lst[k] = last
            self.slot[last] = k
        self.slot[i] = len(self.members[dst])
        self.members[dst].append(i)
        self.cell_counts[src] -= 1
        self.cell_counts[dst] += 1


def _cell_index(sigma, omega) -> np.ndarray:
    # (1,1)->0, (1,-1)->1, (-1,1)->2, (-1,-1)->3
    return (2 * (np.asarray(sigma) < 0) + (np.asarray(omega) < 0)).astype(np.int64)


def sample_initial(law: InitialLaw, N: int, seed) -> ParticleState:
    """N i.i.d. draws from ``law``.  ``seed`` is an int or a Generator."""
    if int(N) < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    cells = rng.choice(4, size=int(N), p=np.asarray(law.probs))
    sig = np.array([CELLS[c][0] for c in range(4)])[cells]
    om = np.array([CELLS[c][1] for c in range(4)])[cells]
    return ParticleState.from_spins(sig, om)


def _rates(c, N: int, beta: float, gamma: float) -> List[float]:
    m = (c[0] + c[1] - c[2] - c[3]) / N
    eb, ebi = math.exp(-beta), math.exp(beta)
    eu, ed = math.exp(-gamma * m), math.exp(gamma * m)
    return [c[0] * eb, c[1] * ebi, c[2] * ebi, c[3] * eb, c[0] * eu, c[1] * ed, c[2] * eu, c[3] * ed]


def class_rates(counts, N: int, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Aggregated (sigma-flip, omega-flip) rates of the four cells."""
    r = _rates(list(counts), N, params.beta, params.gamma)
    return np.array(r[:4]), np.array(r[4:])


def step(state: ParticleState, params: ModelParams, rng: np.random.Generator):
    """Advance the full chain by one event.

    Returns ``(dt, (kind, firm))`` with ``kind`` in {"sigma", "omega"}.
    ``state`` is updated in place, including its clock.
    """
    rates = _rates(state.cell_counts, state.N, params.beta, params.gamma)
    total = sum(rates)
    dt = rng.exponential() / total
    kind, i = _fire(state, rates, total, rng)
    state.t += dt
    return dt, (kind, i)


@dataclass(frozen=True)
class TrajectorySample:
    grid: np.ndarray
    moments: np.ndarray  # (G, 3) empirical moments at grid times
    counts: np.ndarray  # (G, 4) cell counts at grid times
    event_count: int
    seed: object
    N: int

    def moment(self, i: int):
        from .model import MomentVector

        return MomentVector.from_array(self.moments[i])


def _check_grid(grid, T: float) -> np.ndarray:
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.ndim != 1 or len(g) == 0:
        raise ValidationError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(g) <= 0):
        raise ValidationError("grid must be strictly increasing")
    if g[0] < 0 or g[-1] > T:
        raise GridMismatchError(f"grid must lie in [0, {T}]")
    return g


def simulate(params: ModelParams, law: InitialLaw, N: int, T: float, grid, seed,
             state: Optional[ParticleState] = None) -> TrajectorySample:
    """Full-chain trajectory sampled at ``grid`` (state before any jump at a grid time)."""
    g = _check_grid(grid, T)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    if state is None:
        state = sample_initial(law, N, rng)
    G = len(g)
    out = np.empty((G, 4), dtype=np.int64)
    gi = 0
    events = 0
    while gi < G:
        # grid times before the next jump see the current state
        rates = _rates(state.cell_counts, state.N, params.beta, params.gamma)
        total = sum(rates)
        t_next = state.t + rng.exponential() / total
        while gi < G and g[gi] <= t_next:
            out[gi] = state.cell_counts
            gi += 1
        if gi == G or t_next > T:
            break
        _fire(state, rates, total, rng)
        state.t = t_next
        events += 1
    while gi < G:
        out[gi] = state.cell_counts
        gi += 1
    return TrajectorySample(g, counts_to_moments(out), out, events, seed, state.N)


def _fire(state: ParticleState, rates: List[float], total: float, rng: np.random.Generator):
    u = rng.random() * total
    k = 0
    acc = rates[0]
    while acc <= u and k < 7:
        k += 1
        acc += rates[k]
    while rates[k] == 0:  # u landed on the edge of an empty class
        k -= 1
    cell = k % 4
    members = state.members[cell]
    i = members[int(rng.integers(len(members)))]
    if k < 4:
        state.sigma[i] = -state.sigma[i]
        state._move(i, cell, SIGMA_FLIP[cell])
        return "sigma", i
    state.omega[i] = -state.omega[i]
    state._move(i, cell, OMEGA_FLIP[cell])
    return "omega", i


# ---------------------------------------------------------------------------
# reduced (cell-count) chain

@numba.njit(nogil=True, cache=True)
def _reduced_kernel(rng, counts0, beta, gamma, T, grid, max_events):
    c = counts0.copy()
    N = c.sum()
    G = grid.shape[0]
    out = np.empty((G, 4), dtype=np.int64)
    r = np.empty(8)
    eb_aligned = math.exp(-beta)
    eb_opposed = math.exp(beta)
    t = 0.0
    gi = 0
    events = 0
    while gi < G:
        xi = (c[0] + c[1] - c[2] - c[3]) / N
        ew_up = math.exp(-gamma * xi)
        ew_down = math.exp(gamma * xi)
        r[0] = c[0] * eb_aligned
        r[1] = c[1] * eb_opposed
        r[2] = c[2] * eb_opposed
        r[3] = c[3] * eb_aligned
        r[4] = c[0] * ew_up
        r[5] = c[1] * ew_down
        r[6] = c[2] * ew_up
        r[7] = c[3] * ew_down
        total = 0.0
        for k in range(8):
            total += r[k]
        t_next = t + rng.exponential() / total
        while gi < G and grid[gi] <= t_next:
            out[gi, :] = c
            gi += 1
        if gi == G or t_next > T:
            break
        u = rng.random() * total
        k = 0
        acc = r[0]
        while acc <= u and k < 7:
            k += 1
            acc += r[k]
        while r[k] == 0.0:
            k -= 1
        if k < 4:
            src = k
            dst = (k + 2) % 4
        else:
            src = k - 4
            dst = src ^ 1
        c[src] -= 1
        c[dst] += 1
        t = t_next
        events += 1
        if events >= max_events:
            return out, events, False
    while gi < G:
        out[gi, :] = c
        gi += 1
    return out, events, True


def initial_counts(law: InitialLaw, N: int, rng: np.random.Generator) -> np.ndarray:
    if int(N) < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    return rng.multinomial(int(N), np.asarray(law.probs)).astype(np.int64)


def reduced_simulate(params: ModelParams, law: InitialLaw, N: int, T: float, grid, seed,
                     counts0=None, max_events: int = MAX_EVENTS) -> TrajectorySample:
    """Trajectory of the moment-triple chain, identical in law to the full chain."""
    g = _check_grid(grid, T)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    c0 = initial_counts(law, N, rng) if counts0 is None else np.asarray(counts0, dtype=np.int64)
    out, events, ok = _reduced_kernel(rng, c0, params.beta, params.gamma, float(T), g, max_events)
    if not ok:
        raise OverflowError(f"event budget {max_events} exhausted before T={T}")
    return TrajectorySample(g, counts_to_moments(out), out, int(events), seed, int(c0.sum()))


# ---------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class EnsembleStats:
    replicas: int
    grid: np.ndarray
    mean: np.ndarray  # (G, 3)
    var: np.ndarray  # (G, 3), unbiased
    samples: np.ndarray  # (M, G, 3) empirical moments per replica
    counts: np.ndarray  # (M, G, 4)
    events: np.ndarray  # (M,)
    N: int
    fluct_mean: Optional[np.ndarray] = None
    fluct_var: Optional[np.ndarray] = None
    fluct_cov: Optional[np.ndarray] = None  # (G, 3, 3)
    fluctuations: Optional[np.ndarray] = None  # (M, G, 3)


def ensemble(params: ModelParams, law: InitialLaw, N: int, T: float, grid, replicas: int,
             base_seed: int, reference: Optional[OdeSolution] = None, method: str = "reduced",
             threads: int = 1, seeds: Optional[Sequence[int]] = None) -> EnsembleStats:
    """Run ``replicas`` independent trajectories and reduce them per grid time.

    Replica ``r`` uses the stream ``make_rng(base_seed, r)`` unless explicit
    ``seeds`` are given.  Results are stored by replica index, so the output
    does not depend on ``threads``.
    """
    if replicas < 2:
        raise DomainError("an ensemble needs at least 2 replicas")
    if method not in ("reduced", "full"):
        raise ValueError(f"unknown method {method!r}")
    g = _check_grid(grid, T)
    if seeds is not None and len(seeds) != replicas:
        raise ValidationError("seeds must have one entry per replica")
    sim = reduced_simulate if method == "reduced" else simulate

    def run(r):
        rng = make_rng(seeds[r]) if seeds is not None else make_rng(base_seed, r)
        return sim(params, law, N, T, g, rng)

    if threads > 1 and method == "reduced":
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(run, range(replicas)))
    else:
        trajs = [run(r) for r in range(replicas)]

    samples = np.stack([tr.moments for tr in trajs])
    counts = np.stack([tr.counts for tr in trajs])
    events = np.array([tr.event_count for tr in trajs], dtype=np.int64)
    stats = dict(
        replicas=replicas, grid=g, mean=samples.mean(axis=0), var=samples.var(axis=0, ddof=1),
        samples=samples, counts=counts, events=events, N=int(N),
    )
    if reference is not None:
        fl = np.sqrt(N) * (samples - reference.at(g)[None, :, :])
        centered = fl - fl.mean(axis=0)
        stats.update(
            fluct_mean=fl.mean(axis=0),
            fluct_var=fl.var(axis=0, ddof=1),
            fluct_cov=np.einsum("mgi,mgj->gij", centered, centered) / (replicas - 1),
            fluctuations=fl,
        )
    return EnsembleStats(**stats)


def fluctuation_path(traj: TrajectorySample, ode: OdeSolution) -> np.ndarray:
    """Rows ``(t, x_N, y_N, z_N)`` of sqrt(N)-scaled deviations from the ODE."""
    ref = ode.at(traj.grid)
    fl = np.sqrt(traj.N) * (traj.moments - ref)
    return np.column_stack([traj.grid, fl])
