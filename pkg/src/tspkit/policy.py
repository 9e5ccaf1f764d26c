"""The learned constructive policy.

Encoder: a small GNN embeds the relative positions of the remaining cities;
an MLP embeds the relative position of the first visited city.  Decoder: a
single attention head over the GNN rows with the MLP embedding as query,
masked so visited cities get probability exactly zero.

The first city of every tour is fixed to index 0 (tour construction is
invariant to the starting city), so decisions and log-probabilities start at
the second step.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .canonical import CanonicalView, PreprocessConfig, Step, build_view
from .core import Instance, InvalidArgument, Tour, make_tour
from .local_search import LocalSearchConfig, combined_local_search
from .rng import RngStream

_CKPT_MAGIC = b"TKCK0001"


class DecodeMode(Enum):
    GREEDY = "greedy"
    SAMPLE = "sample"


@dataclass
class PolicyParams:
    """All trainable weights plus the architecture hyperparameters."""

    tensors: dict[str, Tensor]
    h: int
    n_gnn: int
    mlp_hidden: tuple[int, int]
    preprocess: PreprocessConfig

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> list[tuple[str, Tensor]]:
        return sorted(self.tensors.items())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def clamp_lambda(self) -> None:
        lam = self.tensors["lambda"]
        lam.value[:] = np.clip(lam.value, 0.0, 1.0)

    def num_parameters(self) -> int:
        return sum(t.value.size for t in self.tensors.values())


def init_params(
    rng: RngStream,
    h: int = 128,
    n_gnn: int = 3,
    mlp_hidden: tuple[int, int] = (128, 256),
    preprocess: PreprocessConfig | None = None,
) -> PolicyParams:
    """Fresh weights, uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); the GNN mix
    weight starts mid-range at 0.5."""
    g = rng.generator

    def u(fan_in: int, shape: tuple[int, int]) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(g.uniform(-bound, bound, size=shape), requires_grad=True)

    h1, h2 = mlp_hidden
    t: dict[str, Tensor] = {
        "mlp.w0": u(2, (2, h1)),
        "mlp.b0": u(2, (1, h1)),
        "mlp.w1": u(h1, (h1, h2)),
        "mlp.b1": u(h1, (1, h2)),
        "mlp.w2": u(h2, (h2, h)),
        "mlp.b2": u(h2, (1, h)),
        "gnn.theta0": u(2, (2, h)),
        "lambda": Tensor(np.array([[0.5]]), requires_grad=True),
        "dec.theta_g": u(h, (h, h)),
        "dec.theta_m": u(h, (h, h)),
        "dec.w": u(h, (h, 1)),
    }
    for layer in range(1, n_gnn + 1):
        t[f"gnn.theta{layer}"] = u(h, (h, h))
        t[f"gnn.aggr_w{layer}"] = u(h, (h, h))
        t[f"gnn.aggr_b{layer}"] = u(h, (1, h))
    for name, tensor in t.items():
        tensor.name = name
    return PolicyParams(
        tensors=t,
        h=h,
        n_gnn=n_gnn,
        mlp_hidden=(h1, h2),
        preprocess=preprocess or PreprocessConfig(),
    )


def gnn_encode(tape: Tape | None, rel_coords: np.ndarray, params: PolicyParams) -> Tensor:
    """Embed the |J|x2 relative positions into |J|xH; permutation-equivariant
    in the rows.  Needs at least 2 rows."""
    if rel_coords.shape[0] < 2:
        raise ad.InvalidState("gnn_encode needs at least 2 cities")
    x = ad.matmul(tape, Tensor(rel_coords), params["gnn.theta0"])
    lam = params["lambda"]
    for layer in range(1, params.n_gnn + 1):
        mixed = ad.matmul(tape, x, params[f"gnn.theta{layer}"])
        aggr_in = ad.row_mean_excluding_self(tape, x)
        aggr = ad.relu(
            tape,
            ad.row_broadcast_add(
                tape,
                ad.matmul(tape, aggr_in, params[f"gnn.aggr_w{layer}"]),
                params[f"gnn.aggr_b{layer}"],
            ),
        )
        x = ad.scalar_mix(tape, lam, mixed, aggr)
    return x


def mlp_encode(tape: Tape | None, first_rel: np.ndarray, params: PolicyParams) -> Tensor:
    """Feedforward 2 -> hidden -> hidden -> H, ReLU on hidden layers."""
    x = Tensor(np.asarray(first_rel, dtype=np.float64).reshape(1, 2))
    x = ad.relu(tape, ad.row_broadcast_add(tape, ad.matmul(tape, x, params["mlp.w0"]), params["mlp.b0"]))
    x = ad.relu(tape, ad.row_broadcast_add(tape, ad.matmul(tape, x, params["mlp.w1"]), params["mlp.b1"]))
    return ad.row_broadcast_add(tape, ad.matmul(tape, x, params["mlp.w2"]), params["mlp.b2"])


def _attention_probs(
    tape: Tape | None,
    embeddings: Tensor,
    query: Tensor,
    candidate_mask: np.ndarray,
    params: PolicyParams,
) -> Tensor:
    keys = ad.matmul(tape, embeddings, params["dec.theta_g"])
    qrow = ad.matmul(tape, query, params["dec.theta_m"])
    logits = ad.matmul(tape, ad.tanh(tape, ad.row_broadcast_add(tape, keys, qrow)), params["dec.w"])
    return ad.masked_softmax(tape, logits, candidate_mask)


def decode_step(
    tape: Tape | None,
    embeddings: Tensor,
    query: Tensor,
    candidate_mask: np.ndarray,
    params: PolicyParams,
    mode: DecodeMode,
    rng: RngStream | None = None,
) -> tuple[int, Tensor | None, np.ndarray]:
    """One attention decoding step over the view rows.

    Returns (chosen row, log-prob tensor when a tape is given, probabilities).
    Masked rows get probability exactly 0; greedy ties break to the smallest
    row index.
    """
    probs = _attention_probs(tape, embeddings, query, candidate_mask, params)
    p = probs.value[:, 0]
    if mode == DecodeMode.GREEDY:
        row = int(np.argmax(p))
    else:
        if rng is None:
            raise InvalidArgument("sampling needs an RngStream")
        u = rng.generator.random()
        row = int(np.searchsorted(np.cumsum(p), u, side="right"))
        row = min(row, p.shape[0] - 1)
        if not candidate_mask[row]:  # numeric edge of cumsum; snap to a candidate
            row = int(np.argmax(p))
    logp = ad.log_pick(tape, probs, row) if tape is not None else None
    return row, logp, p


@dataclass
class RolloutResult:
    tour: Tour
    log_prob_sum: float
    rewards: np.ndarray
    tape: Tape | None = None
    log_prob_tensor: Tensor | None = None


def _rewards_for(instance: Instance, order: np.ndarray) -> np.ndarray:
    pts = instance.coords[order]
    steps = np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(axis=1))
    rewards = np.zeros(order.shape[0])
    rewards[1:] = -steps
    rewards[-1] -= float(np.sqrt(((pts[0] - pts[-1]) ** 2).sum()))
    return rewards


def rollout(
    instance: Instance,
    params: PolicyParams,
    mode: DecodeMode = DecodeMode.GREEDY,
    rng: RngStream | None = None,
    record: bool = False,
    forced_order: np.ndarray | None = None,
) -> RolloutResult:
    """Construct a tour city by city.

    City 0 is always visited first.  With record=True a tape is kept and the
    summed log-probability of the chosen actions is differentiable.  With
    forced_order given, the policy is evaluated on that fixed action
    sequence instead of choosing (used for gradient checks).
    """
    n = instance.n
    if n < 3:
        raise InvalidArgument("rollout needs N >= 3")
    if forced_order is not None:
        forced_order = np.asarray(forced_order, dtype=np.int64)
        if forced_order[0] != 0:
            raise InvalidArgument("forced orders must start at city 0")
    tape = Tape() if record else None
    visited = [0]
    logp_total: Tensor | None = None
    logp_float = 0.0
    for _t in range(2, n + 1):
        view = build_view(instance, visited, params.preprocess)
        embeddings = gnn_encode(tape, view.rel_coords, params)
        query = mlp_encode(tape, view.first_rel, params)
        mask = view.candidate_mask()
        if not params.preprocess.enabled:
            # no visited-city deletion: mask everything already chosen
            mask = np.ones(n, dtype=bool)
            mask[np.array(visited)] = False
        if forced_order is not None:
            city = int(forced_order[_t - 1])
            row = int(np.nonzero(view.remaining_ids == city)[0][0])
            pt = _attention_probs(tape, embeddings, query, mask, params)
            logp = ad.log_pick(tape, pt, row) if tape is not None else None
            if logp is None:
                logp_float += float(np.log(pt.value[row, 0]))
        else:
            row, logp, p = decode_step(tape, embeddings, query, mask, params, mode, rng)
            city = int(view.remaining_ids[row])
            if logp is None:
                logp_float += float(np.log(p[row]))
        visited.append(city)
        if logp is not None:
            logp_total = logp if logp_total is None else ad.add(tape, logp_total, logp)
    order = np.array(visited, dtype=np.int64)
    tour = make_tour(instance, order)
    rewards = _rewards_for(instance, order)
    if logp_total is not None:
        return RolloutResult(tour, logp_total.item(), rewards, tape, logp_total)
    return RolloutResult(tour, logp_float, rewards, None, None)


def log_prob_of_order(
    instance: Instance, params: PolicyParams, order: np.ndarray, record: bool = False
) -> RolloutResult:
    """Log-probability of a fixed tour under the policy."""
    return rollout(instance, params, record=record, forced_order=order)


def sample_best(
    instance: Instance,
    params: PolicyParams,
    k: int,
    ls_config: LocalSearchConfig,
    rng: RngStream,
    mode: DecodeMode | None = None,
) -> Tour:
    """Best of k locally improved rollouts.

    k=1 defaults to a greedy rollout (the base variant); k>1 defaults to
    sampled rollouts.  Ties keep the earliest tour, so results are
    deterministic under a fixed seed.
    """
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    if mode is None:
        mode = DecodeMode.GREEDY if k == 1 else DecodeMode.SAMPLE
    D = instance.distance_matrix()
    best: Tour | None = None
    for i in range(k):
        res = rollout(instance, params, mode=mode, rng=rng.derive(i, 0))
        improved = combined_local_search(
            instance, res.tour, ls_config, rng=rng.derive(i, 1), D=D
        )
        if best is None or improved.length < best.length:
            best = improved
    return best


# ---------------------------------------------------------------------------
# checkpoint container: magic, json header, raw little-endian float64 blocks

def save_checkpoint(params: PolicyParams, path: str | Path) -> None:
    names = [name for name, _ in params.named()]
    header = {
        "version": 1,
        "h": params.h,
        "n_gnn": params.n_gnn,
        "mlp_hidden": list(params.mlp_hidden),
        "preprocess": {
            "enabled": params.preprocess.enabled,
            "per_step": params.preprocess.per_step,
            "steps": [s.value for s in params.preprocess.steps],
        },
        "arrays": [
            {"name": name, "shape": list(params[name].shape), "dtype": "<f8"}
            for name in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(params[name].value, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> PolicyParams:
    data = Path(path).read_bytes()
    if data[:8] != _CKPT_MAGIC:
        raise InvalidArgument(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen].decode())
    if header.get("version") != 1:
        raise InvalidArgument(f"{path}: unsupported checkpoint version")
    offset = 12 + hlen
    tensors: dict[str, Tensor] = {}
    for spec in header["arrays"]:
        r, c = spec["shape"]
        nbytes = r * c * 8
        arr = np.frombuffer(data[offset:offset + nbytes], dtype="<f8").reshape(r, c)
        tensors[spec["name"]] = Tensor(arr.copy(), requires_grad=True, name=spec["name"])
        offset += nbytes
    pp = header["preprocess"]
    preprocess = PreprocessConfig(
        steps=tuple(Step(s) for s in pp["steps"]),
        per_step=pp["per_step"],
        enabled=pp["enabled"],
    )
    return PolicyParams(
        tensors=tensors,
        h=header["h"],
        n_gnn=header["n_gnn"],
        mlp_hidden=tuple(header["mlp_hidden"]),
        preprocess=preprocess,
    )
