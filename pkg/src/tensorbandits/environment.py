"""Simulated tensor bandit environments and regret accounting.

An environment owns an immutable true reward tensor; pulling an arm returns
the entry plus Gaussian noise drawn from a caller-supplied stream.  Regret is
always computed on true means (pseudo-regret), never on noisy rewards.

Seed discipline: one master seed derives independent per-replication,
per-purpose streams through ``stream(master, replication, purpose)``, which
mixes the replication index and a purpose tag into a ``SeedSequence`` spawn
key.  Distinct replications can therefore run in parallel and still
reproduce the serial results bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Arm, TuckerDecomp, check_arm, load_tensor, tucker_reconstruct

# Purpose tags for the seed-splitting rule.
PURPOSE_TRUTH = 0
PURPOSE_NOISE = 1
PURPOSE_POLICY = 2
PURPOSE_CONTEXT = 3


def stream(master_seed: int, replication: int, purpose: int) -> np.random.Generator:
    """Independent generator for (master seed, replication index, purpose tag)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication), int(purpose)))
    return np.random.default_rng(seq)


def child_seed(master_seed: int, replication: int, purpose: int) -> int:
    """Deterministic 64-bit child seed under the same splitting rule."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication), int(purpose)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Environment:
    """True reward tensor plus noise level and contextual split."""

    truth: np.ndarray
    noise_std: float = 1.0
    context_dim: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not 0 <= self.context_dim <= self.truth.ndim:
            raise ValueError("context_dim must lie in [0, tensor order]")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.truth.shape)

    @property
    def decision_dims(self) -> tuple[int, ...]:
        return self.dims[self.context_dim:]

    def pull(self, arm: Arm, rng: np.random.Generator) -> float:
        """Noisy reward for the arm: true entry plus N(0, noise_std^2)."""
        check_arm(arm, self.dims)
        value = float(self.truth[tuple(i - 1 for i in arm)])
        return value + rng.normal(0.0, self.noise_std)

    def draw_context(self, rng: np.random.Generator) -> Arm:
        """Uniform context over the first context_dim index ranges (1-based)."""
        if self.context_dim < 1:
            raise ValueError("draw_context requires context_dim >= 1")
        return tuple(int(rng.integers(1, p + 1)) for p in self.dims[: self.context_dim])

    def oracle(self, context: Arm | None = None) -> tuple[Arm, float]:
        """Best arm and its true value, globally or within the context slice.

        Ties break toward the lowest canonical flat offset.
        """
        if context is None:
            flat = int(np.argmax(self.truth))
            idx = np.unravel_index(flat, self.dims)
            return tuple(int(i) + 1 for i in idx), float(self.truth[idx])
        check_arm(context, self.dims[: len(context)])
        if len(context) != self.context_dim:
            raise ValueError(f"context {context} has length {len(context)}, expected {self.context_dim}")
        slice_view = self.truth[tuple(i - 1 for i in context)]
        flat = int(np.argmax(slice_view))
        decision = np.unravel_index(flat, self.decision_dims)
        arm = tuple(context) + tuple(int(i) + 1 for i in decision)
        return arm, float(slice_view[decision])

    def true_value(self, arm: Arm) -> float:
        check_arm(arm, self.dims)
        return float(self.truth[tuple(i - 1 for i in arm)])


@dataclass
class RegretTrace:
    """Per-step instantaneous and running cumulative pseudo-regret."""

    instantaneous: list[float] = field(default_factory=list)
    cumulative: list[float] = field(default_factory=list)

    def append(self, inst: float) -> None:
        prev = self.cumulative[-1] if self.cumulative else 0.0
        self.instantaneous.append(inst)
        self.cumulative.append(prev + inst)

    def __len__(self) -> int:
        return len(self.instantaneous)


def record_regret(trace: RegretTrace, env: Environment, context: Arm | None, arm: Arm) -> RegretTrace:
    """Append the noiseless gap between the (context-conditional) oracle and the arm."""
    _, best = env.oracle(context)
    trace.append(best - env.true_value(arm))
    return trace


def make_tucker_env(
    dims,
    ranks,
    w: float,
    noise_std: float = 1.0,
    context_dim: int = 0,
    seed: int = 0,
) -> Environment:
    """Random Tucker-structured environment with a diagonal core.

    Factor matrices are the Q parts of QR decompositions of i.i.d. standard
    Gaussian matrices (diagonal of R forced positive for a canonical Q), and
    the core is diagonal with entries w * sqrt(prod dims), the signal
    strength.  For cubic dims (p, p, p) this is w * p^1.5.
    """
    dims, ranks = tuple(int(p) for p in dims), tuple(int(r) for r in ranks)
    if len(ranks) != len(dims):
        raise ValueError("ranks and dims must have equal length")
    if any(r > p for r, p in zip(ranks, dims)):
        raise ValueError(f"ranks {ranks} exceed dims {dims}")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be positive")
    if w <= 0:
        raise ValueError("signal strength w must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    factors = []
    for p, r in zip(dims, ranks):
        gauss = rng.standard_normal((p, r))
        q, rmat = np.linalg.qr(gauss)
        signs = np.sign(np.diag(rmat))
        signs[signs == 0] = 1.0
        factors.append(q * signs)
    core = np.zeros(ranks)
    signal = w * float(np.sqrt(np.prod(dims, dtype=np.float64)))
    for i in range(min(ranks)):
        core[(i,) * len(dims)] = signal
    truth = tucker_reconstruct(TuckerDecomp(core=core, factors=factors))
    return Environment(truth=truth, noise_std=noise_std, context_dim=context_dim, seed=int(seed))


def synth_env(p: int, r: int, w: float, noise_std: float = 1.0, context_dim: int = 0, seed: int = 0) -> Environment:
    """Order-3 cubic environment with dims (p, p, p) and Tucker rank (r, r, r)."""
    if r > p:
        raise ValueError(f"rank {r} exceeds dimension {p}")
    return make_tucker_env((p, p, p), (r, r, r), w, noise_std, context_dim, seed)


def load_env(path, noise_std: float = 1.0, context_dim: int = 0) -> Environment:
    """Environment whose truth tensor is loaded from the text format."""
    truth = load_tensor(path)
    return Environment(truth=truth, noise_std=noise_std, context_dim=context_dim, seed=0)


def load_context_sequence(path, dims, context_dim: int) -> list[Arm]:
    """Context-replay file: one line per step of whitespace-separated 1-based indices."""
    contexts: list[Arm] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split()
            if not toks:
                continue
            if len(toks) != context_dim:
                raise ValueError(f"{path}: line {lineno}: expected {context_dim} indices, got {len(toks)}")
            try:
                ctx = tuple(int(t) for t in toks)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: bad index: {exc}") from exc
            check_arm(ctx, dims[:context_dim])
            contexts.append(ctx)
    if not contexts:
        raise ValueError(f"{path}: no contexts found")
    return contexts
