"""Recursive tree grammar variational autoencoder.

The encoder maps a tree bottom-up to a latent vector: a leaf labeled ``x``
encodes as ``tanh(b_x)``, an internal node as ``tanh(sum_k U_xk s_k + b_x)``
where ``s_k`` is the child code of slot k (list slots sum their element
codes, an empty list contributes a zero vector).

The decoder walks top-down: at each node a shared linear scorer picks the
syntactic element by argmax over grammar-permitted candidates (all others
masked to -inf), single-slot child codes come from per-slot feedforward
nets, and list slots run a gated recurrent unit with a stop head deciding
whether to emit another element.

Training minimizes the negative teacher-forced log-likelihood of each tree
given its noisy code plus a weighted quadratic penalty keeping noisy codes
near the origin. Gradients are computed by hand-written reverse-mode
backpropagation through the recursive computation.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .grammar import LIST, SINGLE, Grammar, Tree, load_grammar
from .numerics import AdamState, Rng, adam_step

_GRU_PARTS = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh", "ws", "bs", "Wo", "bo")


class ModelError(ValueError):
    """Raised for invalid trees, shape problems, or bad model files."""


@dataclass
class ModelConfig:
    latent_dim: int = 32
    beta: float = 1e-3
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    max_decode_nodes: int = 200
    max_list_length: int = 20
    noise_std: float = 0.1

    def __post_init__(self):
        if self.latent_dim < 1 or self.beta < 0 or self.batch_size < 1 \
                or self.max_decode_nodes < 1 or self.max_list_length < 1 \
                or self.noise_std < 0:
            raise ModelError(f"invalid configuration: {self}")


class Model:
    """All autoencoder parameters plus cached grammar lookup tables."""

    def __init__(self, grammar: Grammar, config: ModelConfig, params: dict[str, np.ndarray],
                 epochs_trained: int = 0, final_loss: Optional[float] = None):
        self.grammar = grammar
        self.config = config
        self.params = params
        self.grammar_hash = grammar.digest()
        self.epochs_trained = epochs_trained
        self.final_loss = final_loss
        self._build_tables()

    def _build_tables(self) -> None:
        g = self.grammar
        self.element_index = g.element_index
        # permitted element index arrays per nonterminal and per restricted slot
        self.allowed_by_nt = {
            nt: np.array([g.element_index[name] for name in g.producers(nt)], dtype=int)
            for nt in g.nonterminals
        }
        self.allowed_by_slot: dict[tuple[str, int], np.ndarray] = {}
        for el in g.elements:
            for k in range(el.arity):
                self.allowed_by_slot[(el.name, k)] = np.array(
                    [g.element_index[name] for name in g.permitted(el.name, k)], dtype=int)
        self.min_size = _min_completion_sizes(g)
        # cheapest completable child per slot, and the total minimum still
        # owed by the mandatory (single) slots after slot k of an element —
        # used by the decoder to never overshoot its node budget
        self.min_child: dict[tuple[str, int], int] = {}
        self.suffix_need: dict[tuple[str, int], int] = {}
        for el in g.elements:
            for k in range(el.arity):
                self.min_child[(el.name, k)] = min(
                    self.min_size[name] for name in g.permitted(el.name, k))
            owed = 0
            for k in range(el.arity - 1, -1, -1):
                self.suffix_need[(el.name, k)] = owed
                if el.slots[k][1] == SINGLE:
                    owed += self.min_child[(el.name, k)]

    def clone_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def _min_completion_sizes(g: Grammar) -> dict[str, int]:
    """Minimal complete subtree size per element (lists taken empty)."""
    sizes = {e.name: None for e in g.elements}
    changed = True
    while changed:
        changed = False
        for e in g.elements:
            total = 1
            for k, (nt, kind) in enumerate(e.slots):
                if kind == LIST:
                    continue
                options = [sizes[name] for name in g.permitted(e.name, k)]
                options = [s for s in options if s is not None]
                if not options:
                    total = None
                    break
                total += min(options)
            if total is not None and (sizes[e.name] is None or total < sizes[e.name]):
                sizes[e.name] = total
                changed = True
    missing = [name for name, s in sizes.items() if s is None]
    if missing:
        raise ModelError(f"elements without finite derivation: {missing}")
    return sizes


def param_shapes(grammar: Grammar, n: int) -> dict[str, tuple]:
    """Deterministic parameter layout for a grammar and latent dimension."""
    shapes: dict[str, tuple] = {}
    for el in grammar.elements:
        for k in range(el.arity):
            shapes[f"enc.{el.name}.U{k}"] = (n, n)
        shapes[f"enc.{el.name}.b"] = (n,)
    shapes["dec.H"] = (len(grammar.elements), n)
    shapes["dec.h0"] = (len(grammar.elements),)
    for el in grammar.elements:
        for k, (nt, kind) in enumerate(el.slots):
            prefix = f"dec.{el.name}.{k}"
            if kind == SINGLE:
                shapes[f"{prefix}.V"] = (n, n)
                shapes[f"{prefix}.c"] = (n,)
            else:
                for part in _GRU_PARTS:
                    if part == "bs":
                        shapes[f"{prefix}.{part}"] = (1,)
                    elif part in ("bz", "br", "bh", "bo", "ws"):
                        shapes[f"{prefix}.{part}"] = (n,)
                    else:
                        shapes[f"{prefix}.{part}"] = (n, n)
    return shapes


def init_model(grammar: Grammar, config: ModelConfig) -> Model:
    """Seeded initialization: orthogonal square matrices, small uniform rest.

    Orthogonal maps keep child codes from shrinking as information flows
    through deep trees, which speeds up training considerably compared to
    a plain uniform initialization.
    """
    n = config.latent_dim
    rng = Rng(config.seed)
    bound = 1.0 / np.sqrt(n)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(grammar, n).items():
        if shape == (n, n):
            q, r = np.linalg.qr(rng.gauss((n, n)))
            params[name] = q * np.sign(np.diag(r))
        else:
            params[name] = rng.uniform(-bound, bound, shape)
    return Model(grammar, config, params)


# ---------------------------------------------------------------------------
# encoder


def _encode_forward(m: Model, t: Tree):
    """Returns (code, cache). Cache: (tree, out, slot_sums, child_caches)."""
    el = m.grammar.by_name.get(t.label)
    if el is None:
        raise ModelError(f"unknown element {t.label!r}")
    if len(t.groups) != el.arity:
        raise ModelError(f"{t.label}: got {len(t.groups)} child groups, expected {el.arity}")
    n = m.config.latent_dim
    pre = m.params[f"enc.{t.label}.b"].copy()
    slot_sums = []
    child_caches = []
    for k, ((nt, kind), group) in enumerate(zip(el.slots, t.groups)):
        if kind == SINGLE and len(group) != 1:
            raise ModelError(f"{t.label}: slot {k} must hold exactly one subtree")
        caches_k = []
        s_k = np.zeros(n)
        for child in group:
            code, cache = _encode_forward(m, child)
            s_k = s_k + code
            caches_k.append(cache)
        slot_sums.append(s_k)
        child_caches.append(caches_k)
        pre += m.params[f"enc.{t.label}.U{k}"] @ s_k
    out = np.tanh(pre)
    return out, (t, out, slot_sums, child_caches)


def _encode_backward(m: Model, cache, dout, grads) -> None:
    t, out, slot_sums, child_caches = cache
    da = dout * (1.0 - out * out)
    grads[f"enc.{t.label}.b"] += da
    for k, caches_k in enumerate(child_caches):
        U = m.params[f"enc.{t.label}.U{k}"]
        grads[f"enc.{t.label}.U{k}"] += np.outer(da, slot_sums[k])
        if caches_k:
            ds = U.T @ da
            for child_cache in caches_k:
                _encode_backward(m, child_cache, ds, grads)


def encode(m: Model, t: Tree) -> np.ndarray:
    """Latent code of a grammar-valid tree; entries strictly inside (-1, 1)."""
    code, _ = _encode_forward(m, t)
    return code


# ---------------------------------------------------------------------------
# decoder


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _choose(m: Model, v: np.ndarray, allowed: np.ndarray, budget: list,
            reserve: int) -> int:
    """Greedy masked element choice among candidates whose minimal
    completion (plus everything still owed elsewhere in the tree) fits
    the remaining node budget; if none fits, fall back to the cheapest."""
    scores = m.params["dec.H"][allowed] @ v + m.params["dec.h0"][allowed]
    sizes = np.array([m.min_size[m.grammar.elements[i].name] for i in allowed])
    keep = sizes <= budget[0] - reserve
    if not keep.any():
        keep = sizes == sizes.min()
    return int(allowed[int(np.argmax(np.where(keep, scores, -np.inf)))])


def _decode_node(m: Model, v: np.ndarray, allowed: np.ndarray, budget: list,
                 reserve: int) -> Tree:
    idx = _choose(m, v, allowed, budget, reserve)
    el = m.grammar.elements[idx]
    budget[0] -= 1
    groups = []
    for k, (nt, kind) in enumerate(el.slots):
        slot_allowed = m.allowed_by_slot[(el.name, k)]
        # what the rest of this element still owes while slot k is decoded
        owed = reserve + m.suffix_need[(el.name, k)]
        if kind == SINGLE:
            y = np.tanh(m.params[f"dec.{el.name}.{k}.V"] @ v + m.params[f"dec.{el.name}.{k}.c"])
            groups.append((_decode_node(m, y, slot_allowed, budget, owed),))
        else:
            prefix = f"dec.{el.name}.{k}"
            state = v
            children = []
            while (len(children) < m.config.max_list_length
                   and budget[0] - owed >= m.min_child[(el.name, k)]):
                a = float(m.params[f"{prefix}.ws"] @ state + m.params[f"{prefix}.bs"][0])
                if _sigmoid(a) <= 0.5:
                    break
                y = np.tanh(m.params[f"{prefix}.Wo"] @ state + m.params[f"{prefix}.bo"])
                children.append(_decode_node(m, y, slot_allowed, budget, owed))
                state = _gru_forward(m.params, prefix, state, y)[0]
            groups.append(tuple(children))
    return Tree(el.name, tuple(groups))


def decode(m: Model, z: np.ndarray) -> Tree:
    """Greedy grammar-masked decoding; always returns a valid tree of at
    most ``max_decode_nodes`` nodes (given the budget covers one minimal
    derivation)."""
    z = np.asarray(z, dtype=float)
    if z.shape != (m.config.latent_dim,):
        raise ModelError(f"latent code has shape {z.shape}, expected ({m.config.latent_dim},)")
    budget = [m.config.max_decode_nodes]
    return _decode_node(m, z, m.allowed_by_nt[m.grammar.start], budget, 0)


def _gru_forward(params, prefix: str, state: np.ndarray, y: np.ndarray):
    """Standard GRU cell; input is the emitted child code."""
    zg = _sigmoid(params[f"{prefix}.Wz"] @ y + params[f"{prefix}.Uz"] @ state + params[f"{prefix}.bz"])
    rg = _sigmoid(params[f"{prefix}.Wr"] @ y + params[f"{prefix}.Ur"] @ state + params[f"{prefix}.br"])
    rs = rg * state
    hh = np.tanh(params[f"{prefix}.Wh"] @ y + params[f"{prefix}.Uh"] @ rs + params[f"{prefix}.bh"])
    new_state = (1.0 - zg) * state + zg * hh
    return new_state, (zg, rg, rs, hh)


def _gru_backward(params, prefix: str, grads, cache, state, y, dnew):
    zg, rg, rs, hh = cache
    dzg = dnew * (hh - state)
    dhh = dnew * zg
    dstate = dnew * (1.0 - zg)
    dhh_pre = dhh * (1.0 - hh * hh)
    grads[f"{prefix}.Wh"] += np.outer(dhh_pre, y)
    grads[f"{prefix}.Uh"] += np.outer(dhh_pre, rs)
    grads[f"{prefix}.bh"] += dhh_pre
    drs = params[f"{prefix}.Uh"].T @ dhh_pre
    dy = params[f"{prefix}.Wh"].T @ dhh_pre
    drg = drs * state
    dstate += drs * rg
    drg_pre = drg * rg * (1.0 - rg)
    grads[f"{prefix}.Wr"] += np.outer(drg_pre, y)
    grads[f"{prefix}.Ur"] += np.outer(drg_pre, state)
    grads[f"{prefix}.br"] += drg_pre
    dy += params[f"{prefix}.Wr"].T @ drg_pre
    dstate += params[f"{prefix}.Ur"].T @ drg_pre
    dzg_pre = dzg * zg * (1.0 - zg)
    grads[f"{prefix}.Wz"] += np.outer(dzg_pre, y)
    grads[f"{prefix}.Uz"] += np.outer(dzg_pre, state)
    grads[f"{prefix}.bz"] += dzg_pre
    dy += params[f"{prefix}.Wz"].T @ dzg_pre
    dstate += params[f"{prefix}.Uz"].T @ dzg_pre
    return dstate, dy


def _logsoftmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    return shifted - np.log(np.exp(shifted).sum())


def _logprob_forward(m: Model, v: np.ndarray, t: Tree, allowed: np.ndarray):
    """Teacher-forced log-probability of decoding ``t`` from code ``v``.

    Returns (logp, cache) where cache mirrors the tree for the backward pass.
    """
    el = m.grammar.by_name.get(t.label)
    if el is None:
        raise ModelError(f"unknown element {t.label!r}")
    idx = m.element_index[t.label]
    pos_arr = np.nonzero(allowed == idx)[0]
    if pos_arr.size == 0:
        raise ModelError(f"element {t.label} not permitted here")
    pos = int(pos_arr[0])
    scores = m.params["dec.H"][allowed] @ v + m.params["dec.h0"][allowed]
    log_probs = _logsoftmax(scores)
    logp = log_probs[pos]
    probs = np.exp(log_probs)
    slot_caches = []
    for k, ((nt, kind), group) in enumerate(zip(el.slots, t.groups)):
        slot_allowed = m.allowed_by_slot[(el.name, k)]
        prefix = f"dec.{el.name}.{k}"
        if kind == SINGLE:
            if len(group) != 1:
                raise ModelError(f"{t.label}: slot {k} must hold exactly one subtree")
            y = np.tanh(m.params[f"{prefix}.V"] @ v + m.params[f"{prefix}.c"])
            lp_child, child_cache = _logprob_forward(m, y, group[0], slot_allowed)
            logp += lp_child
            slot_caches.append(("single", y, child_cache))
        else:
            if len(group) > m.config.max_list_length:
                raise ModelError(
                    f"{t.label}: list slot {k} holds {len(group)} subtrees, "
                    f"decoder cap is {m.config.max_list_length}")
            state = v
            steps = []
            for child in group:
                a = float(m.params[f"{prefix}.ws"] @ state + m.params[f"{prefix}.bs"][0])
                logp += -np.logaddexp(0.0, -a)  # log sigmoid(a): continue
                y = np.tanh(m.params[f"{prefix}.Wo"] @ state + m.params[f"{prefix}.bo"])
                lp_child, child_cache = _logprob_forward(m, y, child, slot_allowed)
                logp += lp_child
                new_state, gru_cache = _gru_forward(m.params, prefix, state, y)
                steps.append((state, _sigmoid(a), y, child_cache, gru_cache))
                state = new_state
            final_sig = None
            if len(group) < m.config.max_list_length:
                a = float(m.params[f"{prefix}.ws"] @ state + m.params[f"{prefix}.bs"][0])
                final_sig = _sigmoid(a)
                logp += -np.logaddexp(0.0, a)  # log(1 - sigmoid(a)): stop
            slot_caches.append(("list", state, final_sig, steps))
    return float(logp), (t, v, allowed, pos, probs, slot_caches)


def _logprob_backward(m: Model, cache, grads) -> np.ndarray:
    """Backward pass for the NEGATIVE log-probability.

    Accumulates d(-logp)/dtheta into grads and returns d(-logp)/dv for the
    node's input code, so contributions add directly into the loss
    gradient.
    """
    t, v, allowed, pos, probs, slot_caches = cache
    el = m.grammar.by_name[t.label]
    dscores = probs.copy()
    dscores[pos] -= 1.0
    grads["dec.H"][allowed] += np.outer(dscores, v)
    grads["dec.h0"][allowed] += dscores
    dv = m.params["dec.H"][allowed].T @ dscores
    for k, slot_cache in enumerate(slot_caches):
        prefix = f"dec.{el.name}.{k}"
        if slot_cache[0] == "single":
            _, y, child_cache = slot_cache
            dy = _logprob_backward(m, child_cache, grads)
            dpre = dy * (1.0 - y * y)
            grads[f"{prefix}.V"] += np.outer(dpre, v)
            grads[f"{prefix}.c"] += dpre
            dv += m.params[f"{prefix}.V"].T @ dpre
        else:
            _, final_state, final_sig, steps = slot_cache
            dstate = np.zeros_like(v)
            if final_sig is not None:
                # d/da -log(1 - sigmoid(a)) = sigmoid(a)
                da = final_sig
                grads[f"{prefix}.ws"] += da * final_state
                grads[f"{prefix}.bs"][0] += da
                dstate = dstate + da * m.params[f"{prefix}.ws"]
            for state, sig, y, child_cache, gru_cache in reversed(steps):
                dstate, dy_gru = _gru_backward(m.params, prefix, grads, gru_cache, state, y, dstate)
                dy = _logprob_backward(m, child_cache, grads) + dy_gru
                dpre = dy * (1.0 - y * y)
                grads[f"{prefix}.Wo"] += np.outer(dpre, state)
                grads[f"{prefix}.bo"] += dpre
                dstate += m.params[f"{prefix}.Wo"].T @ dpre
                # d/da -log(sigmoid(a)) = sigmoid(a) - 1
                da = sig - 1.0
                grads[f"{prefix}.ws"] += da * state
                grads[f"{prefix}.bs"][0] += da
                dstate += da * m.params[f"{prefix}.ws"]
            dv += dstate
    return dv


def decode_logprob(m: Model, z: np.ndarray, target: Tree) -> float:
    """Log-probability that the decoder samples ``target`` from code ``z``."""
    z = np.asarray(z, dtype=float)
    logp, _ = _logprob_forward(m, z, target, m.allowed_by_nt[m.grammar.start])
    return logp


def kl_term(z_noisy: np.ndarray) -> float:
    """Quadratic penalty keeping noisy codes near the origin."""
    z_noisy = np.asarray(z_noisy, dtype=float)
    return 0.5 * float(z_noisy @ z_noisy)


# ---------------------------------------------------------------------------
# loss / gradient / training


def zero_grads(m: Model) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(p) for name, p in m.params.items()}


def loss_and_grad(m: Model, batch: list[Tree], rng: Rng):
    """Total loss over the batch and its gradient for every parameter."""
    if not batch:
        raise ModelError("batch must be nonempty")
    grads = zero_grads(m)
    total = 0.0
    beta = m.config.beta
    start_allowed = m.allowed_by_nt[m.grammar.start]
    for t in batch:
        code, enc_cache = _encode_forward(m, t)
        eps = m.config.noise_std * rng.gauss(m.config.latent_dim)
        z = code + eps
        logp, dec_cache = _logprob_forward(m, z, t, start_allowed)
        total += -logp + beta * kl_term(z)
        dz = _logprob_backward(m, dec_cache, grads) + beta * z
        _encode_backward(m, enc_cache, dz, grads)
    return total, grads


def loss(m: Model, batch: list[Tree], rng: Rng) -> float:
    if not batch:
        raise ModelError("batch must be nonempty")
    total = 0.0
    for t in batch:
        z = encode(m, t) + m.config.noise_std * rng.gauss(m.config.latent_dim)
        total += -decode_logprob(m, z, t) + m.config.beta * kl_term(z)
    return total


def grad(m: Model, batch: list[Tree], rng: Rng) -> dict[str, np.ndarray]:
    return loss_and_grad(m, batch, rng)[1]


def train(m: Model, corpus: list[Tree], epochs: int,
          progress_every: int = 0) -> tuple[Model, list[float]]:
    """Seeded minibatch training with Adam; returns the per-epoch loss curve."""
    if not corpus:
        raise ModelError("training corpus must be nonempty")
    rng = Rng(m.config.seed)
    adam = AdamState(learning_rate=m.config.learning_rate)
    losses: list[float] = []
    for epoch in range(epochs):
        idx = rng.integers(0, len(corpus), m.config.batch_size)
        batch = [corpus[int(i)] for i in idx]
        value, grads = loss_and_grad(m, batch, rng)
        adam_step(adam, m.params, grads)
        losses.append(value)
        if progress_every and (epoch + 1) % progress_every == 0:
            window = losses[-progress_every:]
            print(f"epoch {epoch + 1}: mean loss {np.mean(window):.4f}", flush=True)
    m.epochs_trained += epochs
    if losses:
        m.final_loss = losses[-1]
    return m, losses


# ---------------------------------------------------------------------------
# persistence

FORMAT_VERSION = 1


def save(m: Model, path: str) -> None:
    """JSON snapshot; floats round-trip bit-exactly via shortest repr."""
    payload = {
        "version": FORMAT_VERSION,
        "grammar_text": m.grammar.to_text(),
        "slot_restrictions": {
            f"{name}:{k}": sorted(restr)
            for (name, k), restr in m.grammar.slot_restrictions.items()
        },
        "grammar_hash": m.grammar_hash,
        "config": asdict(m.config),
        "epochs_trained": m.epochs_trained,
        "final_loss": m.final_loss,
        "params": {name: p.tolist() for name, p in m.params.items()},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load(path: str) -> Model:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {payload.get('version')!r}")
    restrictions = {}
    for key, labels in payload.get("slot_restrictions", {}).items():
        name, k = key.rsplit(":", 1)
        restrictions[(name, int(k))] = frozenset(labels)
    grammar = load_grammar(payload["grammar_text"], restrictions)
    if grammar.digest() != payload["grammar_hash"]:
        raise ModelError("grammar hash mismatch: model file was tampered with or corrupted")
    config = ModelConfig(**payload["config"])
    params = {name: np.array(vals, dtype=float) for name, vals in payload["params"].items()}
    expected = param_shapes(grammar, config.latent_dim)
    for name, shape in expected.items():
        if name not in params or params[name].shape != shape:
            raise ModelError(f"parameter {name} missing or has wrong shape")
    model = Model(grammar, config, params,
                  epochs_trained=payload.get("epochs_trained", 0),
                  final_loss=payload.get("final_loss"))
    return model
