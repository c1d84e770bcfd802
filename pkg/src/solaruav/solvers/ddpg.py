"""DDPG over the relaxed action box (-0.5, 2.5)^N.

The actor emits N reals; exploration noise is added, the result is clamped
to the box and rounded to {0, 1, 2}.  The rounded action is what the
environment executes and what the replay buffer stores.
"""
from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import torch
from torch import nn

from ..env import ChargingEnv, EnvState, rollout
from .relax import BOX_HIGH, BOX_LOW, discretize_batch, relax_and_discretize

__all__ = [
    "DdpgHyper",
    "TrainingDiverged",
    "ReplayBuffer",
    "Actor",
    "Critic",
    "DdpgPolicy",
    "TrainingLog",
    "DdpgAgent",
    "train_ddpg",
    "critic_gradient_check",
]

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class DdpgHyper:
    # Reinforcement-learning table values
    hidden: tuple = (400, 400)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    l2: float = 1e-4
    grad_clip: float = 1.0
    tau: float = 1e-3
    target_every: int = 1
    batch_size: int = 512
    noise_var_max: float = 1.5
    noise_decay: float = 1e-4
    noise_var_min: float = 0.2
    buffer_capacity: int = 1_000_000
    gamma: float = 0.99
    max_episodes: int = 100_000
    # not in the table
    reward_scale: float = 0.01        # rewards are multiplied by this before regression
    warmup: int = 0                   # transitions before learning starts (0: one batch)
    update_every: int = 1             # env steps between learning phases
    gradient_steps: int = 1           # minibatch updates per learning phase
    eval_every: int = 10              # episodes between greedy evaluations
    preact_reg: float = 0.0           # penalty on squared actor pre-activations (keeps tanh unsaturated)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        bad = [f.name for f in fields(self) if f.name not in ("hidden", "warmup", "preact_reg")
               and not getattr(self, f.name) > 0]
        if bad:
            raise ValueError(f"hyperparameters must be positive: {bad}")
        if self.preact_reg < 0:
            raise ValueError("preact_reg must be >= 0")
        if self.noise_var_min > self.noise_var_max:
            raise ValueError("noise_var_min must be <= noise_var_max")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    @classmethod
    def desk(cls, **overrides) -> "DdpgHyper":
        """Settings that train a 3-UAV day in minutes on one CPU core."""
        base = dict(hidden=(128, 128), actor_lr=1e-3, critic_lr=1e-3, tau=5e-3,
                    batch_size=128, noise_decay=3e-4, noise_var_min=0.05, preact_reg=0.1,
                    max_episodes=5000, eval_every=1, update_every=1)
        base.update(overrides)
        return cls(**base)

    def with_overrides(self, **kv) -> "DdpgHyper":
        typed = {}
        for f in fields(self):
            if f.name in kv:
                v = kv[f.name]
                if f.name == "hidden":
                    v = tuple(int(x) for x in (v.split("x") if isinstance(v, str) else v))
                elif isinstance(v, str):
                    v = int(v) if isinstance(getattr(self, f.name), int) else float(v)
                typed[f.name] = v
        unknown = set(kv) - {f.name for f in fields(self)}
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return replace(self, **typed)

    def noise_variance(self, step: int) -> float:
        """Per-step multiplicative decay from the max variance, floored at the min."""
        return max(self.noise_var_min, self.noise_var_max * (1 - self.noise_decay) ** step)


class ReplayBuffer:
    """Fixed-capacity ring buffer of (obs, action, reward, next obs, terminal)."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((self.capacity, act_dim), dtype=np.int8)
        self.rew = np.zeros(self.capacity, dtype=np.float32)
        self.obs2 = np.zeros((self.capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros(self.capacity, dtype=np.float32)
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, obs2, done):
        i = self.pos
        self.obs[i], self.act[i], self.rew[i], self.obs2[i], self.done[i] = obs, action, reward, obs2, done
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.choice(self.size, size=min(batch, self.size), replace=False)
        return self.obs[idx], self.act[idx], self.rew[idx], self.obs2[idx], self.done[idx]


def _mlp(sizes, out_act=None):
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(nn.Linear(a, b))
        if i < len(sizes) - 2:
            layers.append(nn.ReLU())
    if out_act is not None:
        layers.append(out_act)
    return nn.Sequential(*layers)


class Actor(nn.Module):
    def __init__(self, obs_dim, n_uav, hidden):
        super().__init__()
        self.net = _mlp([obs_dim, *hidden, n_uav], nn.Tanh())
        self.mid = (BOX_HIGH + BOX_LOW) / 2
        self.half = (BOX_HIGH - BOX_LOW) / 2

    def pre(self, obs):
        return self.net[:-1](obs)

    def forward(self, obs):
        return self.mid + self.half * self.net(obs)


def _action_input(a):
    # maps the box (-0.5, 2.5) onto (-1, 1)
    return (a - 1.0) / 1.5


class Critic(nn.Module):
    def __init__(self, obs_dim, n_uav, hidden):
        super().__init__()
        self.net = _mlp([obs_dim + n_uav, *hidden, 1])

    def forward(self, obs, action):
        return self.net(torch.cat([obs, _action_input(action)], dim=-1)).squeeze(-1)


class DdpgPolicy:
    """Deterministic actor composed with rounding; callable on EnvState."""

    def __init__(self, actor: Actor, capacity: float, horizon: int, hidden):
        self.actor = actor
        self.capacity = capacity
        self.horizon = horizon
        self.hidden = tuple(hidden)

    @property
    def n_uav(self) -> int:
        return self.actor.net[-2].out_features

    def raw(self, state: EnvState) -> np.ndarray:
        obs = torch.from_numpy(state.features(self.capacity, self.horizon))
        with torch.no_grad():
            return self.actor(obs).numpy().astype(float)

    def __call__(self, state: EnvState):
        return relax_and_discretize(self.raw(state))

    def save(self, path):
        """npz with one array per parameter plus a JSON header."""
        meta = {"version": CHECKPOINT_VERSION, "capacity": self.capacity, "horizon": self.horizon,
                "hidden": list(self.hidden), "obs_dim": self.actor.net[0].in_features,
                "n_uav": self.n_uav,
                "shapes": {k: list(v.shape) for k, v in self.actor.state_dict().items()}}
        arrays = {k: v.detach().cpu().numpy() for k, v in self.actor.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path) -> "DdpgPolicy":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        actor = Actor(meta["obs_dim"], meta["n_uav"], meta["hidden"])
        actor.load_state_dict({k: torch.from_numpy(data[k]) for k in meta["shapes"]})
        return cls(actor, meta["capacity"], meta["horizon"], meta["hidden"])


@dataclass
class TrainingLog:
    returns: list = field(default_factory=list)
    noise: list = field(default_factory=list)
    evals: list = field(default_factory=list)      # (episode, deterministic return)
    critic_loss: list = field(default_factory=list)
    best_return: float = -math.inf
    best_episode: int = -1

    def moving_average(self, window: int = 300) -> np.ndarray:
        r = np.asarray(self.returns, dtype=float)
        if len(r) == 0:
            return r
        c = np.cumsum(np.insert(r, 0, 0.0))
        out = np.empty(len(r))
        for i in range(len(r)):
            lo = max(0, i + 1 - window)
            out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
        return out

    def to_csv(self, path, window: int = 300):
        ma = self.moving_average(window)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["episode", "return", f"moving_avg_{window}", "noise_variance"])
            for i, (r, m, v) in enumerate(zip(self.returns, ma, self.noise)):
                wr.writerow([i, r, f"{m:.6f}", f"{v:.6f}"])


class DdpgAgent:
    """Actor, critic, their targets and the replay buffer."""

    def __init__(self, env: ChargingEnv, hyper: DdpgHyper, seed: int = 0):
        self.env = env
        self.hyper = hyper
        self.rng = np.random.default_rng(seed)
        torch.manual_seed(seed)
        obs_dim, n = env.state_dim, env.N
        self.actor = Actor(obs_dim, n, hyper.hidden)
        self.critic = Critic(obs_dim, n, hyper.hidden)
        self.actor_target = copy.deepcopy(self.actor)
        self.critic_target = copy.deepcopy(self.critic)
        for p in list(self.actor_target.parameters()) + list(self.critic_target.parameters()):
            p.requires_grad_(False)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=hyper.actor_lr, weight_decay=hyper.l2)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=hyper.critic_lr, weight_decay=hyper.l2)
        cap = min(hyper.buffer_capacity, hyper.max_episodes * env.T)
        self.buffer = ReplayBuffer(cap, obs_dim, n)
        self.steps = 0
        self.updates = 0

    def obs(self, state: EnvState) -> np.ndarray:
        return state.features(self.env.capacity, self.env.T)

    def act(self, state: EnvState, noise_var: float = 0.0):
        with torch.no_grad():
            raw = self.actor(torch.from_numpy(self.obs(state))).numpy().astype(float)
        if noise_var > 0:
            raw = raw + self.rng.normal(scale=math.sqrt(noise_var), size=raw.shape)
        return relax_and_discretize(raw)

    def policy(self) -> DdpgPolicy:
        return DdpgPolicy(self.actor, self.env.capacity, self.env.T, self.hyper.hidden)

    def targets(self, rew, obs2, done):
        """One-step regression targets using the target actor's rounded action."""
        with torch.no_grad():
            a2 = torch.from_numpy(discretize_batch(self.actor_target(obs2).numpy()).astype(np.float32))
            q2 = self.critic_target(obs2, a2)
            return rew * self.hyper.reward_scale + self.hyper.gamma * (1 - done) * q2

    def critic_loss(self, obs, act, y):
        return ((self.critic(obs, act) - y) ** 2).mean()

    def update(self):
        h = self.hyper
        o, a, r, o2, d = (torch.from_numpy(x) for x in self.buffer.sample(h.batch_size, self.rng))
        a = a.float()
        y = self.targets(r, o2, d)

        loss = self.critic_loss(o, a, y)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"critic loss became {loss.item()} after {self.updates} updates")
        self.critic_opt.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(self.critic.parameters(), h.grad_clip)
        self.critic_opt.step()

        pre = self.actor.pre(o)
        actor_loss = -self.critic(o, self.actor.mid + self.actor.half * torch.tanh(pre)).mean()
        if h.preact_reg:
            actor_loss = actor_loss + h.preact_reg * (pre ** 2).mean()
        self.actor_opt.zero_grad()
        actor_loss.backward()
        nn.utils.clip_grad_norm_(self.actor.parameters(), h.grad_clip)
        self.actor_opt.step()

        self.updates += 1
        if self.updates % h.target_every == 0:
            self.soft_update()
        return loss.item()

    def soft_update(self):
        tau = self.hyper.tau
        with torch.no_grad():
            for net, tgt in ((self.actor, self.actor_target), (self.critic, self.critic_target)):
                src = list(net.parameters())
                dst = list(tgt.parameters())
                torch._foreach_mul_(dst, 1 - tau)
                torch._foreach_add_(dst, src, alpha=tau)


def _evaluate(agent: DdpgAgent) -> float:
    return rollout(agent.policy(), agent.env).total_return


def train_ddpg(env_factory, hyper: DdpgHyper = DdpgHyper(), seed: int = 0, episodes: int | None = None,
               callback=None):
    """Train on a fresh environment from ``env_factory()``.

    Returns ``(best_policy, log)``; the best policy is the actor snapshot with
    the highest noise-free evaluation return seen during training.
    """
    # tiny weights decaying under L2 otherwise hit denormal arithmetic and slow training ~3x
    torch.set_flush_denormal(True)
    try:
        return _train(env_factory, hyper, seed, episodes, callback)
    finally:
        torch.set_flush_denormal(False)


def _train(env_factory, hyper, seed, episodes, callback):
    env = env_factory()
    agent = DdpgAgent(env, hyper, seed)
    episodes = hyper.max_episodes if episodes is None else int(episodes)
    warmup = hyper.warmup or hyper.batch_size
    log = TrainingLog()
    best_state = copy.deepcopy(agent.actor.state_dict())

    for ep in range(episodes):
        state = env.reset()
        total = 0.0
        var = hyper.noise_variance(agent.steps)
        losses = []
        for _ in range(env.T):
            var = hyper.noise_variance(agent.steps)
            action = agent.act(state, var)
            out = env.step(action)
            done = float(out.next.t >= env.T)
            agent.buffer.add(agent.obs(state), action, out.reward_total, agent.obs(out.next), done)
            agent.steps += 1
            total += out.reward_total
            state = out.next
            if len(agent.buffer) >= warmup and agent.steps % hyper.update_every == 0:
                losses.extend(agent.update() for _ in range(hyper.gradient_steps))
        log.returns.append(total)
        log.noise.append(var)
        if losses:
            log.critic_loss.append(float(np.mean(losses)))

        if ep % hyper.eval_every == 0 or ep == episodes - 1:
            ret = _evaluate(agent)
            log.evals.append((ep, ret))
            if ret > log.best_return:
                log.best_return, log.best_episode = ret, ep
                best_state = copy.deepcopy(agent.actor.state_dict())
        if callback is not None:
            callback(ep, log)

    best_actor = Actor(env.state_dim, env.N, hyper.hidden)
    best_actor.load_state_dict(best_state)
    return DdpgPolicy(best_actor, env.capacity, env.T, hyper.hidden), log


def critic_gradient_check(agent: DdpgAgent, batch=None, n_coords: int = 50, eps: float = 1e-6,
                          seed: int = 0):
    """Compare autograd critic-loss gradients with central differences.

    Runs in float64 on a copy of the critic over a frozen minibatch (targets
    computed once).  Returns the array of relative errors on randomly chosen
    parameter coordinates.
    """
    rng = np.random.default_rng(seed)
    if batch is None:
        batch = agent.buffer.sample(agent.hyper.batch_size, rng)
    o, a, r, o2, d = (torch.from_numpy(np.asarray(x)) for x in batch)
    y = agent.targets(r.float(), o2.float(), d.float()).double()
    o, a = o.double(), a.double()
    critic = copy.deepcopy(agent.critic).double()

    def loss_fn():
        return ((critic(o, a) - y) ** 2).mean()

    critic.zero_grad()
    loss_fn().backward()
    params = list(critic.parameters())
    sizes = [p.numel() for p in params]
    offsets = np.cumsum([0] + sizes)
    picks = rng.choice(offsets[-1], size=min(n_coords, offsets[-1]), replace=False)
    errors = []
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            p = params[k].view(-1)
            j = int(flat - offsets[k])
            analytic = params[k].grad.view(-1)[j].item()
            orig = p[j].item()
            p[j] = orig + eps
            up = loss_fn().item()
            p[j] = orig - eps
            down = loss_fn().item()
            p[j] = orig
            numeric = (up - down) / (2 * eps)
            scale = max(abs(analytic), abs(numeric), 1e-8)
            errors.append(abs(analytic - numeric) / scale)
    return np.array(errors)


def hyper_to_dict(h: DdpgHyper) -> dict:
    d = asdict(h)
    d["hidden"] = list(h.hidden)
    return d
