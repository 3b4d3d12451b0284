"""Actor-critic training for the power-control agents.

Every agent owns a local actor (and, in the decoupled variants, a local
critic); one shared critic over the joint state-action drives the
centralized part of the policy gradient and regresses on the team reward.
Replay keeps a shared joint buffer plus one per-agent view; extraction
pools are refilled every step, priority-proportional in the prioritized
variants.

Each stochastic piece (initialisation, exploration, pooling, batch
sampling) draws from its own named stream, so switching a variant feature
off leaves every other component's randomness untouched - degenerate
configurations reproduce their reference algorithm trace exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import AgentAction
from ..seeding import stream
from .nets import Actor, Mlp, clip_gradients, sgd_step, sigmoid, soft_update
from .replay import Experience, ReplayBuffer, fill_extraction_pool

__all__ = ["VariantSpec", "VARIANTS", "resolve_variant", "TrainerSettings", "MarlCore", "Trainer"]


@dataclass(frozen=True)
class VariantSpec:
    """Feature switches distinguishing the algorithm family members."""

    local_critic: bool
    prioritized: bool
    ddpg_weight: float = 1.0


VARIANTS = {
    "maddpg": VariantSpec(local_critic=False, prioritized=False),
    "de-maddpg": VariantSpec(local_critic=True, prioritized=False),
    "pes-maddpg": VariantSpec(local_critic=False, prioritized=True),
    "mimo-maddpg": VariantSpec(local_critic=True, prioritized=True),
}


def resolve_variant(variant) -> VariantSpec:
    if isinstance(variant, VariantSpec):
        return variant
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(
            f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}"
        ) from None


@dataclass(frozen=True)
class TrainerSettings:
    episodes: int = 200
    steps: int = 100
    hidden: tuple = (128, 64)
    hidden_slope: float = 0.01
    lr_actor: float = 0.01
    lr_critic: float = 0.01
    tau: float = 0.01
    soft_update_direction: str = "standard"
    clip_norm: float = 0.5
    gamma: float = 0.99
    buffer_capacity: int = 1024
    pool_size: int = 512
    update_after: int = 512
    batch_global: int = 64
    batch_local: int = 64
    noise_start: float = 0.2
    noise_end: float = 0.01
    priority_rule: str = "ranked"
    priority_mu: float = 1.0
    priority_nu: float = 0.01


class MarlCore:
    """Agents, critics, replay and update rules for one control layer."""

    def __init__(
        self,
        layer: int,
        n_agents: int,
        state_dim: int,
        action_ranges: np.ndarray,
        settings: TrainerSettings,
        variant: VariantSpec,
        master_seed: int,
        share_groups=None,
    ):
        self.layer = layer
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.ranges = np.asarray(action_ranges, dtype=float)
        self.action_dim = self.ranges.shape[0]
        self.cfg = settings
        self.variant = variant
        hid = list(settings.hidden)
        slope = settings.hidden_slope
        # agents with the same group id share one parameter set
        groups = list(range(n_agents)) if share_groups is None else list(share_groups)
        if len(groups) != n_agents:
            raise ValueError("one share-group id per agent required")
        self.share_groups = groups

        self.actors = []
        self.actor_targets = []
        self.local_critics = []
        self.local_critic_targets = []
        built: dict = {}
        for i in range(n_agents):
            g = groups[i]
            if g not in built:
                actor = Actor(
                    Mlp([state_dim, *hid, self.action_dim],
                        stream(master_seed, "init", "actor", layer, g), slope),
                    self.ranges,
                )
                target = Actor(
                    Mlp([state_dim, *hid, self.action_dim],
                        stream(master_seed, "init", "actor", layer, g), slope),
                    self.ranges,
                )
                target.mlp.copy_from(actor.mlp)
                entry = {"actor": actor, "actor_target": target}
                if variant.local_critic:
                    critic = Mlp([state_dim + self.action_dim, *hid, 1],
                                 stream(master_seed, "init", "critic_local", layer, g), slope)
                    critic_t = Mlp([state_dim + self.action_dim, *hid, 1],
                                   stream(master_seed, "init", "critic_local", layer, g), slope)
                    critic_t.copy_from(critic)
                    entry["critic"] = critic
                    entry["critic_target"] = critic_t
                built[g] = entry
            self.actors.append(built[g]["actor"])
            self.actor_targets.append(built[g]["actor_target"])
            if variant.local_critic:
                self.local_critics.append(built[g]["critic"])
                self.local_critic_targets.append(built[g]["critic_target"])

        joint_dim = n_agents * (state_dim + self.action_dim)
        self.global_critic = Mlp([joint_dim, *hid, 1],
                                 stream(master_seed, "init", "critic_global", layer), slope)
        self.global_critic_target = Mlp([joint_dim, *hid, 1],
                                        stream(master_seed, "init", "critic_global", layer), slope)
        self.global_critic_target.copy_from(self.global_critic)

        self.buffer_global = ReplayBuffer(settings.buffer_capacity)
        self.buffers_local = [ReplayBuffer(settings.buffer_capacity) for _ in range(n_agents)]
        self.pool_global: list = []
        self.pools_local: list = [[] for _ in range(n_agents)]

        self._explore = [stream(master_seed, "explore", layer, i) for i in range(n_agents)]
        self._pool_rng_g = stream(master_seed, "pool_global", layer)
        self._pool_rng_l = [stream(master_seed, "pool_local", layer, i) for i in range(n_agents)]
        self._upd_rng_g = stream(master_seed, "update_global", layer)
        self._upd_rng_l = [stream(master_seed, "update_local", layer, i) for i in range(n_agents)]

    # -- acting ---------------------------------------------------------------
    def act(self, states: np.ndarray, noise_std: float = 0.0) -> np.ndarray:
        """Raw actions, one row per agent; noise is added in [0, 1] units."""
        out = np.empty((self.n_agents, self.action_dim))
        for i in range(self.n_agents):
            a01 = self.actors[i].normalized(states[i])
            if noise_std > 0:
                a01 = np.clip(a01 + noise_std * self._explore[i].standard_normal(self.action_dim), 0.0, 1.0)
            out[i] = a01 * self.ranges
        return out

    def greedy(self, states: np.ndarray) -> np.ndarray:
        return self.act(states, noise_std=0.0)

    # -- replay ---------------------------------------------------------------
    def _joint_input(self, states, actions):
        states = np.asarray(states, dtype=float)
        actions = np.asarray(actions, dtype=float)
        if states.ndim == 2:  # single joint sample
            return np.concatenate([states.ravel(), (actions / self.ranges).ravel()])
        flat_s = states.reshape(states.shape[0], -1)
        flat_a = (actions / self.ranges).reshape(actions.shape[0], -1)
        return np.concatenate([flat_s, flat_a], axis=1)

    def _local_input(self, state, action):
        state = np.asarray(state, dtype=float)
        action = np.asarray(action, dtype=float)
        if state.ndim == 1:
            return np.concatenate([state, action / self.ranges])
        return np.concatenate([state, action / self.ranges], axis=1)

    def _target_joint_next(self, next_states):
        acts = np.stack([self.actor_targets[i].act(next_states[i]) for i in range(self.n_agents)])
        return self._joint_input(next_states, acts), acts

    def bellman_losses(self, states, actions, rewards, next_states):
        """Squared target-network errors for a fresh transition."""
        team = float(np.sum(rewards))
        q_now = float(self.global_critic.forward(self._joint_input(states, actions))[0])
        joint_next, next_actions = self._target_joint_next(next_states)
        y = team + self.cfg.gamma * float(self.global_critic_target.forward(joint_next)[0])
        loss_g = (q_now - y) ** 2
        losses_l = []
        for i in range(self.n_agents):
            if self.variant.local_critic:
                q_i = float(self.local_critics[i].forward(self._local_input(states[i], actions[i]))[0])
                y_i = rewards[i] + self.cfg.gamma * float(
                    self.local_critic_targets[i].forward(
                        self._local_input(next_states[i], next_actions[i])
                    )[0]
                )
                losses_l.append((q_i - y_i) ** 2)
            else:
                losses_l.append(loss_g)
        return loss_g, losses_l

    def record(self, states, actions, rewards, next_states):
        """Score the transition with the target nets and store it everywhere."""
        states = np.array(states, dtype=float)
        actions = np.array(actions, dtype=float)
        rewards = np.asarray(rewards, dtype=float)
        next_states = np.array(next_states, dtype=float)
        loss_g, losses_l = self.bellman_losses(states, actions, rewards, next_states)
        self.buffer_global.add(
            Experience(states, actions, float(rewards.sum()), next_states, loss=loss_g)
        )
        for i in range(self.n_agents):
            self.buffers_local[i].add(
                Experience(states, actions, float(rewards[i]), next_states, loss=losses_l[i])
            )

    def refresh_and_fill(self):
        cfg = self.cfg
        self.buffer_global.refresh_priorities(cfg.priority_rule, cfg.priority_mu, cfg.priority_nu)
        self.pool_global = fill_extraction_pool(
            self.buffer_global, cfg.pool_size, self._pool_rng_g, self.variant.prioritized
        )
        for i in range(self.n_agents):
            self.buffers_local[i].refresh_priorities(
                cfg.priority_rule, cfg.priority_mu, cfg.priority_nu
            )
            self.pools_local[i] = fill_extraction_pool(
                self.buffers_local[i], cfg.pool_size, self._pool_rng_l[i], self.variant.prioritized
            )

    # -- updates ----------------------------------------------------------------
    def _sample(self, pool, size, rng):
        idx = rng.choice(len(pool), size=min(size, len(pool)), replace=False)
        return [pool[i] for i in idx]

    def _joint_next_batch(self, batch):
        """Target-actor joint inputs for every record's next state, batched."""
        n = len(batch)
        next_states = np.stack([r.next_state for r in batch])  # (n, agents, sd)
        flat_s = next_states.reshape(n, -1)
        acts01 = [
            sigmoid(self.actor_targets[i].mlp.forward(next_states[:, i, :]))
            for i in range(self.n_agents)
        ]
        return np.concatenate([flat_s] + acts01, axis=1), next_states, acts01

    def critic_loss_global(self, batch):
        """Mean squared Bellman error of the shared critic plus its gradients."""
        n = len(batch)
        xs = np.stack([self._joint_input(r.state, r.action) for r in batch])
        joint_next, _, _ = self._joint_next_batch(batch)
        rewards = np.array([r.reward for r in batch])  # team reward in global records
        ys = rewards + self.cfg.gamma * self.global_critic_target.forward(joint_next)[:, 0]
        q = self.global_critic.forward(xs)[:, 0]
        err = q - ys
        loss = float(np.mean(err**2))
        upstream = (2.0 * err / n)[:, None]
        grads, _ = self.global_critic.backward(xs, upstream)
        return loss, grads

    def critic_loss_local(self, batch, agent: int):
        n = len(batch)
        xs = np.stack([self._local_input(r.state[agent], r.action[agent]) for r in batch])
        next_i = np.stack([r.next_state[agent] for r in batch])
        a01_next = sigmoid(self.actor_targets[agent].mlp.forward(next_i))
        q_next = self.local_critic_targets[agent].forward(
            np.concatenate([next_i, a01_next], axis=1)
        )[:, 0]
        rewards = np.array([r.reward for r in batch])
        ys = rewards + self.cfg.gamma * q_next
        q = self.local_critics[agent].forward(xs)[:, 0]
        err = q - ys
        loss = float(np.mean(err**2))
        upstream = (2.0 * err / n)[:, None]
        grads, _ = self.local_critics[agent].backward(xs, upstream)
        return loss, grads

    def actor_gradient(self, batch, agent: int):
        """Ascent direction of the critic-value objective for one actor.

        The centralized term differentiates the shared critic at the joint
        input with this agent's action slot replaced by its current policy;
        the decoupled variants add the local-critic term.
        """
        n = len(batch)
        i = agent
        states_i = np.stack([r.state[i] for r in batch])
        a01 = sigmoid(self.actors[i].mlp.forward(states_i))

        joint = np.stack([self._joint_input(r.state, r.action) for r in batch])
        col = self.n_agents * self.state_dim + i * self.action_dim
        joint[:, col : col + self.action_dim] = a01
        _, in_grad = self.global_critic.backward(joint, np.full((n, 1), 1.0 / n))
        upstream_norm = in_grad[:, col : col + self.action_dim]
        grads = self.actors[i].backward_through_normalized(states_i, upstream_norm)

        if self.variant.local_critic and self.variant.ddpg_weight != 0.0:
            local_x = np.concatenate([states_i, a01], axis=1)
            _, in_grad_l = self.local_critics[i].backward(local_x, np.full((n, 1), 1.0 / n))
            upstream_l = in_grad_l[:, self.state_dim :]
            grads_l = self.actors[i].backward_through_normalized(states_i, upstream_l)
            grads = [g + self.variant.ddpg_weight * gl for g, gl in zip(grads, grads_l)]
        return grads

    def ready(self) -> bool:
        return len(self.buffer_global) >= self.cfg.update_after

    def update(self):
        """One round of critic/actor updates with clipped plain SGD."""
        if not self.ready():
            return {}
        cfg = self.cfg
        batch_g = self._sample(self.pool_global, cfg.batch_global, self._upd_rng_g)
        loss_g, grads = self.critic_loss_global(batch_g)
        grads, _ = clip_gradients(grads, cfg.clip_norm)
        sgd_step(self.global_critic, grads, cfg.lr_critic)
        soft_update(self.global_critic, self.global_critic_target, cfg.tau, cfg.soft_update_direction)

        local_losses = []
        for i in range(self.n_agents):
            batch_l = self._sample(self.pools_local[i], cfg.batch_local, self._upd_rng_l[i])
            if self.variant.local_critic:
                loss_l, grads_l = self.critic_loss_local(batch_l, i)
                grads_l, _ = clip_gradients(grads_l, cfg.clip_norm)
                sgd_step(self.local_critics[i], grads_l, cfg.lr_critic)
                local_losses.append(loss_l)
            a_grads = self.actor_gradient(batch_l, i)
            a_grads, _ = clip_gradients(a_grads, cfg.clip_norm)
            sgd_step(self.actors[i].mlp, a_grads, cfg.lr_actor, maximize=True)
            if self.variant.local_critic:
                soft_update(self.local_critics[i], self.local_critic_targets[i], cfg.tau,
                            cfg.soft_update_direction)
            soft_update(self.actors[i].mlp, self.actor_targets[i].mlp, cfg.tau,
                        cfg.soft_update_direction)
        out = {"critic_loss_global": loss_g}
        if local_losses:
            out["critic_loss_local_mean"] = float(np.mean(local_losses))
        return out

    # -- snapshots -----------------------------------------------------------
    def parameter_snapshot(self):
        snap = {"actors": [[p.copy() for p in a.parameters()] for a in self.actors],
                "global_critic": [p.copy() for p in self.global_critic.parameters()]}
        if self.variant.local_critic:
            snap["local_critics"] = [[p.copy() for p in c.parameters()] for c in self.local_critics]
        return snap

    def state_dict(self) -> dict:
        """JSON-serializable dump: nets, replay contents and stream states.

        Field order is fixed: per net all weight matrices input-to-output,
        then all bias vectors.
        """
        def net(m):
            return [p.tolist() for p in m.parameters()]

        def buf(b):
            return {
                "next_uid": b._next_uid,
                "records": [
                    {
                        "state": r.state.tolist(),
                        "action": r.action.tolist(),
                        "reward": r.reward,
                        "next_state": r.next_state.tolist(),
                        "loss": r.loss,
                        "n": r.n,
                        "pr": r.pr,
                        "uid": r.uid,
                    }
                    for r in b.records
                ],
            }

        out = {
            "layer": self.layer,
            "n_agents": self.n_agents,
            "state_dim": self.state_dim,
            "action_ranges": self.ranges.tolist(),
            "actors": [net(a.mlp) for a in self.actors],
            "actor_targets": [net(a.mlp) for a in self.actor_targets],
            "global_critic": net(self.global_critic),
            "global_critic_target": net(self.global_critic_target),
            "local_critics": [net(c) for c in self.local_critics],
            "local_critic_targets": [net(c) for c in self.local_critic_targets],
            "buffer_global": buf(self.buffer_global),
            "buffers_local": [buf(b) for b in self.buffers_local],
            "rng": {
                "explore": [g.bit_generator.state for g in self._explore],
                "pool_global": self._pool_rng_g.bit_generator.state,
                "pool_local": [g.bit_generator.state for g in self._pool_rng_l],
                "update_global": self._upd_rng_g.bit_generator.state,
                "update_local": [g.bit_generator.state for g in self._upd_rng_l],
            },
        }
        return out

    def load_state_dict(self, state: dict):
        def setnet(m, params):
            m.set_parameters([np.asarray(p, dtype=float) for p in params])

        def setbuf(b, data):
            b.records = [
                Experience(
                    state=np.asarray(r["state"], dtype=float),
                    action=np.asarray(r["action"], dtype=float),
                    reward=float(r["reward"]),
                    next_state=np.asarray(r["next_state"], dtype=float),
                    loss=float(r["loss"]),
                    n=int(r["n"]),
                    pr=float(r["pr"]),
                    uid=int(r["uid"]),
                )
                for r in data["records"]
            ]
            b._next_uid = int(data["next_uid"])

        for a, p in zip(self.actors, state["actors"]):
            setnet(a.mlp, p)
        for a, p in zip(self.actor_targets, state["actor_targets"]):
            setnet(a.mlp, p)
        setnet(self.global_critic, state["global_critic"])
        setnet(self.global_critic_target, state["global_critic_target"])
        for c, p in zip(self.local_critics, state["local_critics"]):
            setnet(c, p)
        for c, p in zip(self.local_critic_targets, state["local_critic_targets"]):
            setnet(c, p)
        setbuf(self.buffer_global, state["buffer_global"])
        for b, d in zip(self.buffers_local, state["buffers_local"]):
            setbuf(b, d)
        rng = state["rng"]
        for g, s in zip(self._explore, rng["explore"]):
            g.bit_generator.state = s
        self._pool_rng_g.bit_generator.state = rng["pool_global"]
        for g, s in zip(self._pool_rng_l, rng["pool_local"]):
            g.bit_generator.state = s
        self._upd_rng_g.bit_generator.state = rng["update_global"]
        for g, s in zip(self._upd_rng_l, rng["update_local"]):
            g.bit_generator.state = s


class Trainer:
    """Episode loop: act with exploration noise, step the world, replay, update.

    Handles the single-layer architecture; the double-layer trainer extends
    the per-step hooks.
    """

    def __init__(self, env, settings: TrainerSettings, variant, master_seed: int,
                 scenario: str = "static"):
        self.env = env
        self.cfg = settings
        self.variant = resolve_variant(variant)
        self.seed = master_seed
        self.scenario = scenario
        self.core = MarlCore(
            layer=1,
            n_agents=env.n_agents,
            state_dim=env.state_dim,
            action_ranges=env.action_ranges,
            settings=settings,
            variant=self.variant,
            master_seed=master_seed,
        )
        self.global_step = 0

    # -- exploration schedule -------------------------------------------------
    def noise_std(self) -> float:
        total = self.cfg.episodes * self.cfg.steps
        if total <= 1:
            return self.cfg.noise_end
        frac = min(1.0, self.global_step / (total - 1))
        return self.cfg.noise_start + (self.cfg.noise_end - self.cfg.noise_start) * frac

    def env_actions(self, raw: np.ndarray):
        if self.scenario == "static":
            return [AgentAction(power=float(a[0])) for a in raw]
        return [
            AgentAction(power=float(a[0]), step=float(a[1]), angle=float(a[2]))
            for a in raw
        ]

    # -- per-step hooks (overridden by the double-layer trainer) --------------
    def _choose(self, obs, noise_std):
        raw = self.core.act(obs, noise_std)
        return raw, self.env_actions(raw), None, {}

    def _store(self, obs, raw, rewards, next_obs, extras):
        self.core.record(obs, raw, rewards, next_obs)
        self.core.refresh_and_fill()

    def _update(self):
        return self.core.update()

    # -- episodes ---------------------------------------------------------------
    def train_episode(self) -> dict:
        obs = self.env.reset()
        metrics = {
            "rewards": [],
            "sum_se": [],
            "actions": [],
            "power_trace": [],
            "budgets": [],
            "positions": [],
            "losses": [],
            "priority_stats": [],
        }
        for _ in range(self.cfg.steps):
            noise = self.noise_std()
            raw, acts, allocations, extras = self._choose(obs, noise)
            next_obs, rewards, info = self.env.step(acts, mode=self.scenario,
                                                    allocations=allocations)
            self._store(obs, raw, rewards, next_obs, extras)
            losses = self._update()
            obs = next_obs
            self.global_step += 1
            metrics["rewards"].append(np.asarray(rewards, dtype=float))
            metrics["sum_se"].append(info.get("sum_se", float(np.sum(rewards))))
            metrics["actions"].append(raw.copy())
            metrics["power_trace"].append(info.get("power_trace", []))
            metrics["budgets"].append(info.get("budgets", []))
            metrics["positions"].append(info.get("positions"))
            metrics["losses"].append(losses)
            prs = [r.pr for r in self.core.buffer_global.records]
            metrics["priority_stats"].append(
                (float(np.min(prs)), float(np.mean(prs)), float(np.max(prs)))
            )
        return metrics

    def greedy_episode(self, env=None, steps: int | None = None) -> dict:
        """Noise-free rollout without learning; returns its reward trace."""
        env = env if env is not None else self.env
        steps = steps if steps is not None else self.cfg.steps
        obs = env.reset()
        rewards_trace = []
        sum_trace = []
        for _ in range(steps):
            raw = self.core.greedy(obs)
            raw, acts, allocations, _ = self._greedy_choose(obs, raw, env)
            obs, rewards, info = env.step(acts, mode=self.scenario, allocations=allocations)
            rewards_trace.append(np.asarray(rewards, dtype=float))
            sum_trace.append(info.get("sum_se", float(np.sum(rewards))))
        return {"rewards": rewards_trace, "sum_se": sum_trace}

    def _greedy_choose(self, obs, raw, env):
        return raw, self.env_actions(raw), None, {}

    # -- checkpoints --------------------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "version": 1,
            "scenario": self.scenario,
            "global_step": self.global_step,
            "layers": {"1": self.core.state_dict()},
        }

    def load_state_dict(self, state: dict):
        if state.get("version") != 1:
            raise ValueError("unsupported checkpoint version")
        self.global_step = int(state["global_step"])
        self.core.load_state_dict(state["layers"]["1"])
