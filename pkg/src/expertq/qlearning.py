"""Buffers, schedules, rollouts and both update rules.

The agent's MDP runs over its own turns: one stored transition spans the
opponent's reply, so ``s_next`` is the next position where the agent moves
again (or the terminal position). Rewards are assigned after the game ends
as the discounted final result, ``gamma ** turns_remaining * z`` with
``z`` in {+1, 0, -1} from the agent's perspective.

Two trainable settings share the loop: the Double-Dueling-Q baseline
(dueling network, targets picked by the periodic copy) and Expert Q
(separate Q and state-value networks composed into
``Q(s,a) - mean_k Q(s,a_k) + E(s)``, plus an optional regression of the
state network on coarse expert labels).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .board import (
    ACTION_SPACE,
    Board,
    Color,
    GameOutcome,
    apply_move,
    encode_state,
    game_outcome,
    initial_board,
    legal_moves,
)
from .nn import Adam, Network, build_dueling_network, build_expert_network, build_q_network
from .policies import ExpertExample, NoLegalMoveError, ScriptedPolicy

DOUBLE_DUELING = "double-dueling"
EXPERT_Q = "expert-q"
EXPERT_Q_NOEX = "expert-q-noex"
ALGORITHMS = (DOUBLE_DUELING, EXPERT_Q, EXPERT_Q_NOEX)


class InsufficientBufferError(Exception):
    pass


@dataclass
class Transition:
    state: np.ndarray  # (2, 8, 8) float32
    action: int  # 0..64
    next_state: np.ndarray
    reward: float  # discounted final outcome, in [-1, 1]
    terminal: bool
    legal_next: np.ndarray  # (65,) bool, legal actions at next_state


class ReplayBuffer:
    """Ring buffer with FIFO eviction and uniform minibatch sampling."""

    def __init__(self, capacity: int = 10000):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._pos] = t
        self._pos = (self._pos + 1) % self.capacity

    def items(self) -> list[Transition]:
        return list(self._items)

    def sample(self, batch: int, rng: np.random.Generator):
        """Stacked minibatch arrays (s, a, s', r, terminal, legal mask)."""
        if len(self._items) < batch:
            raise InsufficientBufferError(f"buffer holds {len(self._items)} < batch {batch}")
        idx = rng.choice(len(self._items), size=batch, replace=False)
        ts = [self._items[i] for i in idx]
        return (
            np.stack([t.state for t in ts]),
            np.array([t.action for t in ts], dtype=np.int64),
            np.stack([t.next_state for t in ts]),
            np.array([t.reward for t in ts], dtype=np.float32),
            np.array([t.terminal for t in ts], dtype=bool),
            np.stack([t.legal_next for t in ts]),
        )


class ExpertBuffer:
    """Fixed set of labeled states; emptiness disables the expert update."""

    def __init__(self, examples: list[ExpertExample] | None = None):
        self._states = None
        self._values = None
        if examples:
            self._states = np.stack([ex.state for ex in examples]).astype(np.float32)
            self._values = np.array([ex.label for ex in examples], dtype=np.float32)

    def __len__(self) -> int:
        return 0 if self._states is None else len(self._states)

    def sample(self, batch: int, rng: np.random.Generator):
        if not len(self):
            raise InsufficientBufferError("expert buffer is empty")
        idx = rng.integers(len(self), size=batch)
        return self._states[idx], self._values[idx]


@dataclass
class TrainConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    max_iter: int = 100000
    sync_every: int = 2000
    batch: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.01
    buffer_cap: int = 10000
    seed: int = 0
    algorithm: str = EXPERT_Q
    log_every: int = 100
    fc_activation: str = "sigmoid"
    initial_q_reducer: str = "max"  # reducer over legal actions for the diagnostic
    expert_loss_on_copy: bool = False  # literal line-20 reading (inert update)

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.eps_start < self.eps_end:
            raise ValueError("eps_start must be >= eps_end")
        for name in ("gamma", "lr", "sync_every", "batch", "buffer_cap", "log_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.initial_q_reducer not in ("max", "mean"):
            raise ValueError("initial_q_reducer must be 'max' or 'mean'")


@dataclass
class AgentNets:
    """Online networks and their periodic copies (never updated by gradients)."""

    q_a: Network
    q_b: Network
    e_a: Network | None = None
    e_b: Network | None = None

    @staticmethod
    def create(cfg: TrainConfig, seed_seq: np.random.SeedSequence | None = None) -> "AgentNets":
        ss = seed_seq if seed_seq is not None else np.random.SeedSequence(cfg.seed)
        q_seed, e_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        if cfg.algorithm == DOUBLE_DUELING:
            q_a = build_dueling_network(q_seed, fc_activation=cfg.fc_activation)
            return AgentNets(q_a, q_a.clone())
        q_a = build_q_network(q_seed, fc_activation=cfg.fc_activation)
        e_a = build_expert_network(e_seed, fc_activation=cfg.fc_activation)
        return AgentNets(q_a, q_a.clone(), e_a, e_a.clone())

    def sync(self) -> None:
        self.q_b = self.q_a.clone()
        if self.e_a is not None:
            self.e_b = self.e_a.clone()


def epsilon_at(iteration: int, cfg: TrainConfig) -> float:
    """Linear anneal from eps_start at 0 to eps_end at max_iter, clamped."""
    if cfg.max_iter == 0 or iteration >= cfg.max_iter:
        return cfg.eps_end
    frac = iteration / cfg.max_iter
    eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
    return min(cfg.eps_start, max(cfg.eps_end, eps))


def compose_q(q_raw: np.ndarray, e_value) -> np.ndarray:
    """Composed Q-values: raw minus their per-state mean plus the state value.

    Accepts a (65,) vector with scalar ``e_value`` or a (B, 65) batch with
    (B,) or (B, 1) values.
    """
    q_raw = np.asarray(q_raw)
    if q_raw.ndim == 1:
        return q_raw - q_raw.mean() + e_value
    e = np.asarray(e_value).reshape(-1, 1)
    return q_raw - q_raw.mean(axis=1, keepdims=True) + e


def greedy_action(q_values: np.ndarray, moves: list[int]) -> int:
    """Highest-valued legal move, lowest index on ties (moves are ascending)."""
    return moves[int(np.argmax(q_values[moves]))]


def select_action(nets: AgentNets, board: Board, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy on the online Q-network's raw output, legality-masked."""
    moves = legal_moves(board)
    if not moves:
        raise NoLegalMoveError("terminal position")
    return _select_from(nets.q_a, board, moves, eps, rng)


def _select_from(q_net: Network, board: Board, moves: list[int], eps: float, rng) -> int:
    if eps > 0.0 and rng.random() < eps:
        return moves[int(rng.integers(len(moves)))]
    q = q_net.forward(encode_state(board, board.to_move))[0]
    return greedy_action(q, moves)


def _legal_mask_array(moves: list[int]) -> np.ndarray:
    mask = np.zeros(ACTION_SPACE, dtype=bool)
    mask[moves] = True
    return mask


def rollout_episode(
    nets: AgentNets,
    opponent: ScriptedPolicy,
    eps: float,
    buffer: ReplayBuffer,
    cfg: TrainConfig,
    rng: np.random.Generator,
    agent_color: Color = Color.BLACK,
) -> GameOutcome:
    """Play one full game and push the agent's discounted transitions."""
    board = initial_board()
    states: list[np.ndarray] = []
    actions: list[int] = []
    next_states: list[np.ndarray] = []
    next_masks: list[np.ndarray] = []
    while True:
        moves = legal_moves(board)
        if not moves:
            break
        if board.to_move == agent_color:
            enc = encode_state(board, agent_color)
            if len(states) > len(next_states):
                next_states.append(enc)
                next_masks.append(_legal_mask_array(moves))
            action = _select_from(nets.q_a, board, moves, eps, rng)
            states.append(enc)
            actions.append(action)
            board = apply_move(board, action)
        else:
            board = apply_move(board, opponent.move(board))
    outcome = game_outcome(board)
    if len(states) > len(next_states):
        next_states.append(encode_state(board, agent_color))
        next_masks.append(np.zeros(ACTION_SPACE, dtype=bool))
    z = outcome.result_for(agent_color)
    total = len(states)
    for t in range(total):
        terminal = t == total - 1
        buffer.push(
            Transition(
                states[t],
                actions[t],
                next_states[t],
                z * cfg.gamma ** (total - 1 - t),
                terminal,
                next_masks[t],
            )
        )
    return outcome


def _masked_argmax_rows(q: np.ndarray, legal: np.ndarray) -> np.ndarray:
    masked = np.where(legal, q, -np.inf)
    # rows with no legal action (terminal states) fall back to index 0; their
    # bootstrap value is discarded by the terminal branch of the target
    safe = np.where(legal.any(axis=1, keepdims=True), masked, 0.0)
    return safe.argmax(axis=1)


def td_target_baseline(nets: AgentNets, batch, cfg: TrainConfig) -> np.ndarray:
    """r + gamma * Q_B(s', a*) with a* the legality-masked argmax under Q_B."""
    _, _, s_next, r, terminal, legal_next = batch
    q_next = nets.q_b.forward(s_next)
    a_star = _masked_argmax_rows(q_next, legal_next)
    boot = q_next[np.arange(len(a_star)), a_star]
    return np.where(terminal, r, r + cfg.gamma * boot).astype(np.float32)


def update_baseline(nets: AgentNets, optimizer: Adam, buffer: ReplayBuffer,
                    cfg: TrainConfig, rng: np.random.Generator) -> float:
    """One minibatch MSE step on the dueling network at the taken actions."""
    batch = buffer.sample(cfg.batch, rng)
    s, a = batch[0], batch[1]
    y = td_target_baseline(nets, batch, cfg)
    q = nets.q_a.forward(s, train=True)
    rows = np.arange(len(a))
    pred = q[rows, a]
    diff = pred - y
    loss = float(np.mean(diff * diff))
    dout = np.zeros_like(q)
    dout[rows, a] = (2.0 / len(a)) * diff
    nets.q_a.backward(dout)
    optimizer.step(nets.q_a.grads())
    return loss


def td_target_expert_q(nets: AgentNets, batch, cfg: TrainConfig) -> np.ndarray:
    """Targets from the composed copies: a* by raw Q_B argmax, value composed."""
    _, _, s_next, r, terminal, legal_next = batch
    q_next = nets.q_b.forward(s_next)
    a_star = _masked_argmax_rows(q_next, legal_next)
    e_next = nets.e_b.forward(s_next)
    composed = compose_q(q_next, e_next)
    boot = composed[np.arange(len(a_star)), a_star]
    return np.where(terminal, r, r + cfg.gamma * boot).astype(np.float32)


def update_expert_q(
    nets: AgentNets,
    opt_q: Adam,
    opt_e: Adam,
    buffer: ReplayBuffer,
    expert: ExpertBuffer,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[float, float | None]:
    """Joint composed-Q regression, then the expert-label step when enabled.

    Returns ``(q_loss, expert_loss)``; ``expert_loss`` is None when the
    expert buffer is empty (the "without examples" ablation).
    """
    batch = buffer.sample(cfg.batch, rng)
    s, a = batch[0], batch[1]
    y = td_target_expert_q(nets, batch, cfg)
    q_raw = nets.q_a.forward(s, train=True)
    e_val = nets.e_a.forward(s, train=True)
    composed = compose_q(q_raw, e_val)
    rows = np.arange(len(a))
    diff = composed[rows, a] - y
    q_loss = float(np.mean(diff * diff))
    dcomp = np.zeros_like(composed)
    dcomp[rows, a] = (2.0 / len(a)) * diff
    dq = dcomp - dcomp.mean(axis=1, keepdims=True)
    de = dcomp.sum(axis=1, keepdims=True)
    nets.q_a.backward(dq)
    nets.e_a.backward(de)
    opt_q.step(nets.q_a.grads())
    opt_e.step(nets.e_a.grads())

    expert_loss = None
    if len(expert):
        expert_loss = expert_regression_step(nets, opt_e, expert, cfg, rng)
    return q_loss, expert_loss


def expert_regression_step(nets: AgentNets, opt_e: Adam, expert: ExpertBuffer,
                           cfg: TrainConfig, rng: np.random.Generator) -> float:
    """Regress the state network on a minibatch of coarse expert labels."""
    se, ve = expert.sample(cfg.batch, rng)
    target = ve[:, None]
    if cfg.expert_loss_on_copy:
        # literal reading: the loss is over the copy's predictions, which the
        # online network's parameters do not influence; no update happens
        pred = nets.e_b.forward(se)
        return float(np.mean((pred - target) ** 2))
    pred = nets.e_a.forward(se, train=True)
    d = pred - target
    loss = float(np.mean(d * d))
    nets.e_a.backward((2.0 / d.size) * d)
    opt_e.step(nets.e_a.grads())
    return loss


@dataclass
class MetricsLog:
    header: tuple = ("iter", "eps", "loss_q", "loss_expert", "initial_q", "score")
    rows: list[tuple] = field(default_factory=list)

    def add(self, iteration, eps, loss_q, loss_expert, initial_q, score) -> None:
        self.rows.append((iteration, eps, loss_q, loss_expert, initial_q, score))

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = [",".join(self.header)]
        lines.extend(",".join(fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"


def initial_q_diagnostic(q_net: Network, reducer: str = "max") -> float:
    """Raw Q at the standard initial position, reduced over legal actions."""
    board = initial_board()
    q = q_net.forward(encode_state(board, board.to_move))[0]
    legal = q[legal_moves(board)]
    return float(legal.max() if reducer == "max" else legal.mean())


def train(
    cfg: TrainConfig,
    opponent: ScriptedPolicy,
    expert: ExpertBuffer | None = None,
    callback=None,
    eval_hook=None,
    eval_every: int = 0,
) -> tuple[AgentNets, MetricsLog]:
    """Run the full training loop.

    Per iteration: one episode against ``opponent`` (agent color alternating),
    one minibatch update once the buffer holds a batch, and a copy sync every
    ``sync_every`` iterations. ``callback(iteration, nets)`` runs after every
    iteration; ``eval_hook(nets)`` is called every ``eval_every`` iterations
    and its result lands in the ``score`` column.
    """
    cfg.validate()
    if expert is None:
        expert = ExpertBuffer()
    if cfg.algorithm == EXPERT_Q_NOEX:
        expert = ExpertBuffer()
    ss = np.random.SeedSequence(cfg.seed)
    net_ss, rollout_ss, sample_ss, opp_ss = ss.spawn(4)
    rollout_rng = np.random.default_rng(rollout_ss)
    sample_rng = np.random.default_rng(sample_ss)
    opponent.reseed(opp_ss)

    nets = AgentNets.create(cfg, net_ss)
    opt_q = Adam(nets.q_a.params(), lr=cfg.lr)
    opt_e = Adam(nets.e_a.params(), lr=cfg.lr) if nets.e_a is not None else None
    buffer = ReplayBuffer(cfg.buffer_cap)
    log = MetricsLog()

    acc_q: list[float] = []
    acc_e: list[float] = []
    pending_score = None
    # single-threaded BLAS is measurably faster at these matrix sizes
    with threadpool_limits(limits=1):
        for it in range(cfg.max_iter):
            eps = epsilon_at(it, cfg)
            agent_color = Color.BLACK if it % 2 == 0 else Color.WHITE
            rollout_episode(nets, opponent, eps, buffer, cfg, rollout_rng, agent_color)
            if len(buffer) >= cfg.batch:
                if cfg.algorithm == DOUBLE_DUELING:
                    acc_q.append(update_baseline(nets, opt_q, buffer, cfg, sample_rng))
                else:
                    q_loss, e_loss = update_expert_q(nets, opt_q, opt_e, buffer, expert, cfg, sample_rng)
                    acc_q.append(q_loss)
                    if e_loss is not None:
                        acc_e.append(e_loss)
            if (it + 1) % cfg.sync_every == 0:
                nets.sync()
            if eval_hook is not None and eval_every and (it + 1) % eval_every == 0:
                pending_score = float(eval_hook(nets))
            if (it + 1) % cfg.log_every == 0 or it + 1 == cfg.max_iter:
                log.add(
                    it + 1,
                    eps,
                    float(np.mean(acc_q)) if acc_q else None,
                    float(np.mean(acc_e)) if acc_e else None,
                    initial_q_diagnostic(nets.q_a, cfg.initial_q_reducer),
                    pending_score,
                )
                acc_q, acc_e, pending_score = [], [], None
            if callback is not None:
                callback(it, nets)
    return nets, log
