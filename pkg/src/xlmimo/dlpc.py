"""Double-layer power control.

Layer 1 treats each user as a mobile agent choosing its total power budget
(and movement); layer 2 treats each user antenna as a static agent that
splits its user's budget using per-antenna fading state.  Both layers run
the same actor-critic machinery on different views; budgets flow down,
rewards are shared back up in equal per-antenna fractions.
"""

from __future__ import annotations

import math

import numpy as np

from .env import CellFreeEnv
from .marl.trainer import MarlCore, Trainer, TrainerSettings
from .se import PowerAllocation

__all__ = [
    "broadcast_budget",
    "split_reward",
    "layer2_allocate",
    "DoubleLayerTrainer",
]

LAYER2_MODES = ("learned", "uniform", "off")


def broadcast_budget(layer1_powers, n_s: int) -> np.ndarray:
    """Repeat each user's budget once per antenna: [p1..p1, p2..p2, ...]."""
    powers = np.asarray(layer1_powers, dtype=float)
    if np.any(powers < 0):
        raise ValueError("budgets must be nonnegative")
    return np.repeat(powers, n_s)


def split_reward(layer1_rewards, n_s: int) -> np.ndarray:
    """Share each user reward equally over its antennas (each r/n_s)."""
    rewards = np.asarray(layer1_rewards, dtype=float)
    return np.repeat(rewards / n_s, n_s)


def layer2_allocate(normalized_actions, budgets, n_s: int) -> list[PowerAllocation]:
    """Turn per-antenna weights into allocations that use each full budget.

    ``normalized_actions`` holds one weight in [0, 1] per antenna (user-major
    order).  Weights are rescaled so every user's radiated power equals its
    budget; an all-zero weight vector falls back to the uniform split.
    """
    weights = np.asarray(normalized_actions, dtype=float).reshape(-1)
    budgets = np.asarray(budgets, dtype=float)
    if weights.shape[0] != budgets.shape[0] * n_s:
        raise ValueError("one weight per user antenna required")
    allocs = []
    for k, budget in enumerate(budgets):
        w = weights[k * n_s : (k + 1) * n_s]
        norm_sq = float(np.sum(w**2))
        if norm_sq == 0.0:
            amps = np.full(n_s, math.sqrt(budget / n_s))
        else:
            amps = w * math.sqrt(budget / norm_sq)
        allocs.append(PowerAllocation(amps, float(budget)))
    return allocs


class DoubleLayerTrainer(Trainer):
    """Runs the user layer and the per-antenna layer in lockstep.

    ``layer2_mode``: ``learned`` trains and uses the antenna agents,
    ``uniform`` trains them but forces the uniform split (degenerate
    equivalence checks), ``off`` removes the second layer entirely and
    reproduces the single-layer trainer step for step.
    """

    def __init__(
        self,
        env: CellFreeEnv,
        settings: TrainerSettings,
        variant,
        master_seed: int,
        scenario: str = "static",
        layer2_mode: str = "learned",
        weight_sharing: bool = False,
    ):
        super().__init__(env, settings, variant, master_seed, scenario)
        if layer2_mode not in LAYER2_MODES:
            raise ValueError(f"layer2_mode must be one of {LAYER2_MODES}")
        self.layer2_mode = layer2_mode
        self.core2 = None
        if layer2_mode != "off":
            n_s = env.n_s
            k_ue = env.n_agents
            share = [k for k in range(k_ue) for _ in range(n_s)] if weight_sharing else None
            self.core2 = MarlCore(
                layer=2,
                n_agents=k_ue * n_s,
                state_dim=2,  # aggregated fading + broadcast budget
                action_ranges=np.array([1.0]),
                settings=settings,
                variant=self.variant,
                master_seed=master_seed,
                share_groups=share,
            )

    # -- layer-2 views ----------------------------------------------------------
    def _layer2_states(self, budgets) -> np.ndarray:
        lsf = self.env.observe_layer2() / self.env.layer2_observation_scale()
        bud = broadcast_budget(budgets, self.env.n_s) / self.env.params.p_max
        return np.column_stack([lsf.reshape(-1), bud])

    def _budgets_from_raw(self, raw1) -> np.ndarray:
        return np.clip(raw1[:, 0], 0.0, self.env.params.p_max)

    # -- per-step hooks -----------------------------------------------------------
    def _choose(self, obs, noise_std):
        raw1 = self.core.act(obs, noise_std)
        if self.core2 is None:
            return raw1, self.env_actions(raw1), None, {}
        budgets = self._budgets_from_raw(raw1)
        s2 = self._layer2_states(budgets)
        raw2 = self.core2.act(s2, noise_std)
        if self.layer2_mode == "uniform":
            weights = np.full(len(raw2), 1.0)
        else:
            weights = raw2[:, 0]
        allocations = layer2_allocate(weights, budgets, self.env.n_s)
        return raw1, self.env_actions(raw1), allocations, {"s2": s2, "raw2": raw2}

    def _greedy_choose(self, obs, raw1, env):
        if self.core2 is None:
            return raw1, self.env_actions(raw1), None, {}
        budgets = self._budgets_from_raw(raw1)
        lsf = env.observe_layer2() / env.layer2_observation_scale()
        bud = broadcast_budget(budgets, env.n_s) / env.params.p_max
        s2 = np.column_stack([lsf.reshape(-1), bud])
        raw2 = self.core2.greedy(s2)
        if self.layer2_mode == "uniform":
            weights = np.full(len(raw2), 1.0)
        else:
            weights = raw2[:, 0]
        allocations = layer2_allocate(weights, budgets, env.n_s)
        return raw1, self.env_actions(raw1), allocations, {}

    def _store(self, obs, raw1, rewards, next_obs, extras):
        self.core.record(obs, raw1, rewards, next_obs)
        self.core.refresh_and_fill()
        if self.core2 is None:
            return
        # next layer-2 state pairs the post-move fading with the budgets the
        # current user policy would pick at the next observation
        next_budgets = self._budgets_from_raw(self.core.greedy(next_obs))
        s2_next = self._layer2_states(next_budgets)
        r2 = split_reward(rewards, self.env.n_s)
        self.core2.record(extras["s2"], extras["raw2"], r2, s2_next)
        self.core2.refresh_and_fill()

    def _update(self):
        out = self.core.update()
        if self.core2 is not None:
            out2 = self.core2.update()
            out.update({f"layer2_{k}": v for k, v in out2.items()})
        return out

    # -- checkpoints ----------------------------------------------------------------
    def state_dict(self) -> dict:
        state = super().state_dict()
        if self.core2 is not None:
            state["layers"]["2"] = self.core2.state_dict()
        state["layer2_mode"] = self.layer2_mode
        return state

    def load_state_dict(self, state: dict):
        super().load_state_dict(state)
        if self.core2 is not None and "2" in state["layers"]:
            self.core2.load_state_dict(state["layers"]["2"])
