"""Reproducible Monte Carlo simulation of noisy cellular automata.

Every error decision comes from a counter-based generator, a pure function
of (seed, trial, t, i), so a trajectory does not depend on how trials are
split across threads.  With golden = 0x9E3779B97F4A7C15 and fin the
splitmix64 finalizer

    fin(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
             z ^= z >> 27; z *= 0x94D049BB133111EB
             z ^= z >> 31

and mix(x) = fin(x + golden), all arithmetic mod 2^64, the generator is

    prf(seed, trial, t, i) = fin(seed ^ mix(trial) ^ mix(t * 2654435769 + i))

Cell i of the window (column index, 0-based) receives an error when going
from row t to row t+1 iff prf(seed, trial, t, i) < floor(eps * 2^64).
Custom noise draws the replacement state from a second stream, the same
function with seed ^ golden.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .rates import rate_table
from .rule import Configuration, LocalRule, RuleError, is_monotone, is_quiescent, step_valid

GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_CELL_STRIDE = 2654435769
_MASK = (1 << 64) - 1
_CHUNK = 64

PERIODIC = "periodic"
NOISE_KINDS = ("independent-max", "independent-set", "custom")


# --- generator ----------------------------------------------------------------------------------

def finalize(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _M1
        z = z ^ (z >> np.uint64(27))
        z = z * _M2
    return z ^ (z >> np.uint64(31))


def mix(x) -> np.ndarray:
    with np.errstate(over="ignore"):
        return finalize(np.asarray(x, dtype=np.uint64) + np.uint64(GOLDEN))


def _cell_keys(t: int, width: int) -> np.ndarray:
    base = (t * _CELL_STRIDE) & _MASK
    with np.errstate(over="ignore"):
        return mix(np.uint64(base) + np.arange(width, dtype=np.uint64))


def prf(seed: int, trial, t: int, i) -> np.ndarray:
    """Vectorized generator; ``trial`` and ``i`` broadcast against each other."""
    cell = (t * _CELL_STRIDE) & _MASK
    with np.errstate(over="ignore"):
        keys = mix(np.uint64(cell) + np.asarray(i, dtype=np.uint64))
    return finalize(np.uint64(seed & _MASK) ^ mix(trial) ^ keys)


def threshold(eps: float) -> int:
    """floor(eps * 2^64), computed exactly from the binary value of eps."""
    return math.floor(Fraction(eps) * (1 << 64))


def _below(z: np.ndarray, limit: int) -> np.ndarray:
    if limit >= 1 << 64:
        return np.ones(z.shape, dtype=bool)
    return z < np.uint64(limit)


def error_sites(seed: int, trials: Sequence[int], t: int, width: int, eps: float) -> np.ndarray:
    """Boolean (len(trials), width) mask of error sites for the step t -> t+1."""
    tr = np.asarray(trials, dtype=np.uint64)[:, None]
    z = finalize(np.uint64(seed & _MASK) ^ mix(tr) ^ _cell_keys(t, width)[None, :])
    return _below(z, threshold(eps))


# --- configuration ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Which cells err and what they turn into.

    ``independent-max`` writes max(a, F(...)) at error sites,
    ``independent-set`` writes a, and ``custom`` writes a state drawn from
    ``distribution`` (probabilities of 0..m).
    """

    kind: str
    epsilon: float
    a: int = 0
    distribution: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise RuleError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise RuleError("epsilon must lie in [0, 1]")
        if self.kind == "custom":
            dist = tuple(float(p) for p in self.distribution)
            if not dist or min(dist) < 0 or not math.isclose(sum(dist), 1.0):
                raise RuleError("custom noise needs a probability vector")
            object.__setattr__(self, "distribution", dist)

    @classmethod
    def independent_max(cls, a: int, epsilon: float) -> "NoiseModel":
        return cls("independent-max", epsilon, a)

    @classmethod
    def independent_set(cls, a: int, epsilon: float) -> "NoiseModel":
        return cls("independent-set", epsilon, a)

    @classmethod
    def custom(cls, distribution: Sequence[float], epsilon: float) -> "NoiseModel":
        return cls("custom", epsilon, 0, tuple(distribution))

    def check(self, rule: LocalRule) -> None:
        if self.kind == "custom":
            if len(self.distribution) != rule.state_count:
                raise RuleError(f"distribution has {len(self.distribution)} entries, rule has {rule.state_count} states")
        elif not 0 <= self.a <= rule.m:
            raise RuleError(f"noise state {self.a} outside 0..{rule.m}")

    def describe(self) -> str:
        if self.kind == "custom":
            return f"custom({','.join(repr(p) for p in self.distribution)})"
        return f"{self.kind}({self.a})"

    def apply(self, image: np.ndarray, seed: int, trials: np.ndarray, t: int) -> np.ndarray:
        """Perturb the noiseless image of row t, one row per trial."""
        width = image.shape[-1]
        tr = mix(np.asarray(trials, dtype=np.uint64))[:, None]
        cells = _cell_keys(t, width)[None, :]
        hit = _below(finalize(np.uint64(seed & _MASK) ^ tr ^ cells), threshold(self.epsilon))
        if not hit.any():
            return image
        if self.kind == "independent-max":
            return np.where(hit, np.maximum(image, self.a), image).astype(image.dtype)
        if self.kind == "independent-set":
            return np.where(hit, self.a, image).astype(image.dtype)
        u = finalize(np.uint64((seed ^ GOLDEN) & _MASK) ^ tr ^ cells)
        drawn = np.zeros(image.shape, dtype=image.dtype)
        acc = Fraction(0)
        for p in self.distribution[:-1]:
            acc += Fraction(p)
            drawn += ~_below(u, math.floor(acc * (1 << 64)))
        return np.where(hit, drawn, image).astype(image.dtype)


@dataclass(frozen=True)
class SimConfig:
    width: int
    T: int
    seed: int = 0
    trials: int = 1
    boundary: str | int = PERIODIC

    def __post_init__(self):
        if self.T < 1:
            raise RuleError("horizon T must be at least 1")
        if self.trials < 1:
            raise RuleError("trials must be at least 1")
        if self.boundary != PERIODIC and not isinstance(self.boundary, int):
            raise RuleError(f"boundary must be 'periodic' or a state, got {self.boundary!r}")
        object.__setattr__(self, "seed", int(self.seed) & _MASK)

    def check(self, rule: LocalRule) -> None:
        if self.width < 2 * rule.radius + 1:
            raise RuleError(f"width {self.width} is smaller than one neighborhood")
        if self.boundary != PERIODIC:
            if not 0 <= self.boundary <= rule.m or not is_quiescent(rule, self.boundary):
                raise RuleError(f"fixed boundary state {self.boundary} is not quiescent")

    @property
    def origin(self) -> int:
        """Column observed by the density and ergodicity experiments."""
        return self.width // 2


def _image(rule: LocalRule, rows: np.ndarray, boundary) -> np.ndarray:
    r = rule.radius
    if r == 0:
        return rule.lut[rows].astype(rows.dtype)
    if boundary == PERIODIC:
        padded = np.concatenate([rows[:, -r:], rows, rows[:, :r]], axis=1)
    else:
        pad = np.full((rows.shape[0], r), boundary, dtype=rows.dtype)
        padded = np.concatenate([pad, rows, pad], axis=1)
    return step_valid(rule, padded).astype(rows.dtype)


def _evolve(rule, model, sim, init: np.ndarray, trials: np.ndarray, observe: Callable) -> None:
    x = init
    observe(0, x, None)
    for t in range(sim.T):
        image = _image(rule, x, sim.boundary)
        new = model.apply(image, sim.seed, trials, t)
        observe(t + 1, new, new != image)
        x = new


def _chunked(rule, model, sim, init_fn, trial_ids, make_observer, workers: int) -> list:
    """Run trial chunks, possibly on threads, and return observers in trial order."""
    chunks = [trial_ids[i:i + _CHUNK] for i in range(0, len(trial_ids), _CHUNK)]

    def run(chunk):
        obs = make_observer(len(chunk))
        _evolve(rule, model, sim, init_fn(chunk), chunk, obs)
        return obs

    if workers <= 1 or len(chunks) == 1:
        return [run(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, chunks))


def _prepare(rule: LocalRule, model: NoiseModel, sim: SimConfig) -> None:
    if not is_monotone(rule):
        raise RuleError("rule is not monotone")
    model.check(rule)
    sim.check(rule)


def _initial_row(rule: LocalRule, sim: SimConfig, initial: Configuration) -> np.ndarray:
    if len(initial) != sim.width:
        raise RuleError(f"initial configuration has {len(initial)} cells, width is {sim.width}")
    initial.check_states(rule)
    if sim.boundary != PERIODIC and (initial.left, initial.right) != (sim.boundary, sim.boundary):
        raise RuleError("initial boundary states do not match the fixed boundary")
    return np.asarray(initial.cells, dtype=np.uint8)


# --- trajectories -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoisyTrajectory:
    """Space-time grid with its realized error set.

    ``grid[t]`` is row t and ``error_set[t]`` marks the cells of row t+1
    that differ from the noiseless image of row t.  Column j sits at
    coordinate ``lo + j``.
    """

    grid: np.ndarray
    error_set: np.ndarray
    seed: int
    trial: int
    lo: int = 0
    boundary: str | int = PERIODIC
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def T(self) -> int:
        return self.grid.shape[0] - 1

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def state(self, i: int, t: int) -> int:
        """State at coordinate i and time t."""
        return int(self.grid[t, i - self.lo])

    def is_error(self, i: int, t: int) -> bool:
        """Whether (i, t) is in the error set, i.e. row t+1 deviates at i."""
        return bool(self.error_set[t, i - self.lo])

    def __eq__(self, other):
        if not isinstance(other, NoisyTrajectory):
            return NotImplemented
        return dump_trajectory(self) == dump_trajectory(other)


def simulate(rule: LocalRule, model: NoiseModel, sim: SimConfig, initial: Configuration,
             workers: int = 1) -> list[NoisyTrajectory]:
    """All sim.trials trajectories from the same initial row."""
    _prepare(rule, model, sim)
    row = _initial_row(rule, sim, initial)

    class Recorder:
        def __init__(self, n):
            self.grid = np.empty((sim.T + 1, n, sim.width), dtype=np.uint8)
            self.err = np.zeros((sim.T, n, sim.width), dtype=bool)

        def __call__(self, t, rows, err):
            self.grid[t] = rows
            if err is not None:
                self.err[t - 1] = err

    ids = np.arange(sim.trials, dtype=np.uint64)
    recs = _chunked(rule, model, sim, lambda c: np.tile(row, (len(c), 1)), ids, Recorder, workers)
    out = []
    for chunk_start, rec in zip(range(0, sim.trials, _CHUNK), recs):
        for j in range(rec.grid.shape[1]):
            out.append(NoisyTrajectory(np.ascontiguousarray(rec.grid[:, j]), np.ascontiguousarray(rec.err[:, j]),
                                       sim.seed, chunk_start + j, initial.lo, sim.boundary,
                                       {"model": model.describe(), "epsilon": model.epsilon}))
    return out


def run_noisy(rule: LocalRule, model: NoiseModel, sim: SimConfig, initial: Configuration,
              trial: int = 0) -> NoisyTrajectory:
    _prepare(rule, model, sim)
    row = _initial_row(rule, sim, initial)
    grid = np.empty((sim.T + 1, sim.width), dtype=np.uint8)
    err = np.zeros((sim.T, sim.width), dtype=bool)

    def rec(t, rows, e):
        grid[t] = rows[0]
        if e is not None:
            err[t - 1] = e[0]

    _evolve(rule, model, sim, row[None, :], np.array([trial], dtype=np.uint64), rec)
    return NoisyTrajectory(grid, err, sim.seed, trial, initial.lo, sim.boundary,
                           {"model": model.describe(), "epsilon": model.epsilon})


def noiseless_image(rule: LocalRule, traj: NoisyTrajectory) -> np.ndarray:
    """Rows 1..T as the rule alone would produce them from rows 0..T-1."""
    return _image(rule, traj.grid[:-1], traj.boundary)


# --- dump format -------------------------------------------------------------------------------

def dump_trajectory(traj: NoisyTrajectory) -> str:
    if traj.grid.size and traj.grid.max() > 9:
        raise RuleError("trajectory dumps hold single-digit states only")
    buf = io.StringIO()
    buf.write("ca-traj v1\n")
    buf.write(f"width {traj.width}\nsteps {traj.T}\nseed {traj.seed}\ntrial {traj.trial}\n")
    buf.write(f"lo {traj.lo}\nboundary {traj.boundary}\ngrid\n")
    for row in traj.grid:
        buf.write("".join(map(str, row.tolist())) + "\n")
    buf.write("errors\n")
    for row in traj.error_set:
        buf.write("".join("1" if e else "0" for e in row.tolist()) + "\n")
    return buf.getvalue()


def dump_trajectories(trajs: Sequence[NoisyTrajectory]) -> str:
    return "".join(dump_trajectory(t) for t in trajs)


def load_trajectories(text: str) -> list[NoisyTrajectory]:
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    out, pos = [], 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        if lines[pos] != "ca-traj v1":
            raise RuleError(f"line {pos + 1}: expected 'ca-traj v1'")
        head = {}
        for key in ("width", "steps", "seed", "trial", "lo", "boundary"):
            pos += 1
            parts = lines[pos].split() if pos < len(lines) else []
            if len(parts) != 2 or parts[0] != key:
                raise RuleError(f"line {pos + 1}: expected '{key} <value>'")
            head[key] = parts[1]
        W, T = int(head["width"]), int(head["steps"])
        pos += 1
        if lines[pos] != "grid":
            raise RuleError(f"line {pos + 1}: expected 'grid'")
        grid = _block(lines, pos + 1, T + 1, W, "0123456789")
        pos += T + 2
        if pos >= len(lines) or lines[pos] != "errors":
            raise RuleError(f"line {pos + 1}: expected 'errors'")
        err = _block(lines, pos + 1, T, W, "01").astype(bool)
        pos += T + 1
        b = head["boundary"]
        out.append(NoisyTrajectory(grid, err, int(head["seed"]), int(head["trial"]), int(head["lo"]),
                                   b if b == PERIODIC else int(b)))
    return out


def _block(lines, start, rows, width, alphabet) -> np.ndarray:
    out = np.zeros((rows, width), dtype=np.uint8)
    for k in range(rows):
        n = start + k
        row = lines[n] if n < len(lines) else ""
        if len(row) != width or any(c not in alphabet for c in row):
            raise RuleError(f"line {n + 1}: expected {width} characters from {alphabet!r}")
        out[k] = np.frombuffer(row.encode(), dtype=np.uint8) - ord("0")
    return out


# --- statistics ------------------------------------------------------------------------------

_Z95 = NormalDist().inv_cdf(0.975)


def wilson(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class Proportion:
    successes: int
    n: int

    @property
    def estimate(self) -> float:
        return self.successes / self.n if self.n else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return wilson(self.successes, self.n)

    def row(self, key) -> str:
        lo, hi = self.ci
        return f"{key}\t{self.estimate:.6f}\t{lo:.6f}\t{hi:.6f}"


# --- experiments -------------------------------------------------------------------------------

def _constant_rows(sim: SimConfig, state: int):
    return lambda chunk: np.full((len(chunk), sim.width), state, dtype=np.uint8)


def density_zero(rule: LocalRule, model: NoiseModel, sim: SimConfig, workers: int = 1) -> list[Proportion]:
    """Per-time frequency of state 0 at the origin column, starting from all 0."""
    _prepare(rule, model, sim)

    class Count:
        def __init__(self, n):
            self.zeros = np.zeros(sim.T + 1, dtype=np.int64)

        def __call__(self, t, rows, err):
            self.zeros[t] = int((rows[:, sim.origin] == 0).sum())

    ids = np.arange(sim.trials, dtype=np.uint64)
    obs = _chunked(rule, model, sim, _constant_rows(sim, 0), ids, Count, workers)
    total = sum(o.zeros for o in obs)
    return [Proportion(int(z), sim.trials) for z in total]


def tail_density(rule: LocalRule, model: NoiseModel, sim: SimConfig, tail: int = 1,
                 workers: int = 1) -> Proportion:
    """Fraction of nonzero cells over the last ``tail`` rows, pooled over cells and trials.

    Cells in one row are correlated, so the interval is a nominal one.
    """
    _prepare(rule, model, sim)
    if not 1 <= tail <= sim.T + 1:
        raise RuleError("tail must be between 1 and T+1 rows")

    class Count:
        def __init__(self, n):
            self.hits = 0
            self.n = 0

        def __call__(self, t, rows, err):
            if t > sim.T - tail:
                self.hits += int((rows != 0).sum())
                self.n += rows.size

    ids = np.arange(sim.trials, dtype=np.uint64)
    obs = _chunked(rule, model, sim, _constant_rows(sim, 0), ids, Count, workers)
    return Proportion(sum(o.hits for o in obs), sum(o.n for o in obs))


@dataclass(frozen=True)
class SurvivalEstimate:
    """Survival of one island size.

    ``survived`` is the worst time: the smallest over t <= T of the fraction
    of trials whose tracked cell holds omega at time t.  ``held`` counts the
    trials whose tracked cell holds omega at every t <= T, a much stricter
    event that single travelling defects can break.
    """

    N: int
    survived: Proportion
    worst_time: int
    held: Proportion
    drift: Fraction
    width: int

    def row(self) -> str:
        return self.survived.row(self.N)


def island_drift(rule: LocalRule, omega: int, table: dict | None = None) -> Fraction:
    """Mean velocity of the island's two borders, (L_{0,omega} + R_{omega,0}) / 2."""
    table = table or rate_table(rule)
    L, R = table[(0, omega)].L, table[(omega, 0)].R
    if not (L.exact and R.exact):
        raise RuleError(f"border rates for state {omega} are not certified exactly")
    return (L.value + R.value) / 2


def island_survival(rule: LocalRule, omega: int, N_list: Sequence[int], model: NoiseModel,
                    sim: SimConfig, table: dict | None = None, slack: int = 8,
                    workers: int = 1) -> list[SurvivalEstimate]:
    """Survival of the island 0..0 omega^N . omega^N 0..0 at a tracked coordinate.

    The tracked cell at time t is floor(t * drift).  The window is
    [-(N + rT + slack), N + rT + slack) with a fixed 0 boundary, so
    ``sim.width`` and ``sim.boundary`` are ignored.
    """
    if not (0 < omega <= rule.m and is_quiescent(rule, omega) and is_quiescent(rule, 0)):
        raise RuleError("0 and omega must be quiescent states with omega > 0")
    drift = island_drift(rule, omega, table)
    out = []
    for N in N_list:
        if N < 1:
            raise RuleError("island half-width N must be positive")
        half = N + rule.radius * sim.T + slack
        run = SimConfig(2 * half, sim.T, sim.seed, sim.trials, 0)
        _prepare(rule, model, run)
        lo = -half
        tracked = np.array([math.floor(t * drift) - lo for t in range(sim.T + 1)])
        if tracked.min() < 0 or tracked.max() >= run.width:
            raise RuleError("tracked coordinate leaves the window")
        row = np.zeros(run.width, dtype=np.uint8)
        row[-N - lo:N - lo] = omega

        class Track:
            def __init__(self, n):
                self.alive = np.ones(n, dtype=bool)
                self.hits = np.zeros(sim.T + 1, dtype=np.int64)

            def __call__(self, t, rows, err):
                here = rows[:, tracked[t]] == omega
                self.hits[t] = int(here.sum())
                self.alive &= here

        ids = np.arange(sim.trials, dtype=np.uint64)
        obs = _chunked(rule, model, run, lambda c: np.tile(row, (len(c), 1)), ids, Track, workers)
        hits = sum(o.hits for o in obs)
        worst = int(np.argmin(hits))
        held = sum(int(o.alive.sum()) for o in obs)
        out.append(SurvivalEstimate(N, Proportion(int(hits[worst]), sim.trials), worst,
                                    Proportion(held, sim.trials), drift, run.width))
    return out


@dataclass(frozen=True)
class ProbeSeries:
    """Origin marginals from the bottom and top starts, per time."""

    low: np.ndarray
    high: np.ndarray
    trials: int

    @property
    def distance(self) -> np.ndarray:
        return 0.5 * np.abs(self.low - self.high).sum(axis=1) / self.trials

    def rows(self) -> list[str]:
        return [f"{t}\t{d:.6f}" for t, d in enumerate(self.distance)]


def ergodicity_probe(rule: LocalRule, model: NoiseModel, sim: SimConfig, workers: int = 1) -> ProbeSeries:
    """Total-variation distance between origin marginals started from all 0 and all m.

    The top runs use trial numbers trials..2*trials-1, so the two families
    see independent error sets.
    """
    _prepare(rule, model, sim)
    k = rule.state_count

    class Hist:
        def __init__(self, n):
            self.h = np.zeros((sim.T + 1, k), dtype=np.int64)

        def __call__(self, t, rows, err):
            self.h[t] = np.bincount(rows[:, sim.origin], minlength=k)

    low_ids = np.arange(sim.trials, dtype=np.uint64)
    high_ids = low_ids + np.uint64(sim.trials)
    low = _chunked(rule, model, sim, _constant_rows(sim, 0), low_ids, Hist, workers)
    high = _chunked(rule, model, sim, _constant_rows(sim, rule.m), high_ids, Hist, workers)
    return ProbeSeries(sum(o.h for o in low), sum(o.h for o in high), sim.trials)


def left_border(traj: NoisyTrajectory, coordinate: int) -> np.ndarray:
    """Per row, the left end of the nonzero run reaching ``coordinate - 1``.

    Rows where that cell is 0 report ``coordinate`` itself.
    """
    col = coordinate - traj.lo
    zero = traj.grid[:, :col] == 0
    last = np.where(zero.any(axis=1), col - 1 - np.argmax(zero[:, ::-1], axis=1), -1)
    return last + 1 + traj.lo
