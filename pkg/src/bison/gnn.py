"""Low-level policy network: message passing with hand-derived gradients.

The graph has a global node (ego features plus nullary fact one-hot sums), an
action node (schema one-hot) and one node per argument object of the HL action
(object features, unary fact one-hot sums, positional one-hot).  Object
embeddings aggregate by element-wise max; message passing updates the global
node first and feeds the fresh value into the action and object updates.  MSE
behaviour cloning runs under Adam with a cosine-annealed learning rate.

All tensor math is plain dense numpy; reverse-mode accumulation is written out
explicitly for this fixed graph (max routes gradient to the argmax element,
first index on ties; ReLU gradient is zero at 0).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np

from .core import BisonError, Domain, GroundAction, ObjectTable
from .formats import Demo

PARAM_BUDGET = 33000


@dataclass
class TrainConfig:
    iterations: int = 200
    lr: float = 1e-3
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 64
    layers: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size <= 0 or self.hidden <= 0 \
                or self.layers <= 0 or self.lr <= 0:
            raise BisonError("invalid training configuration")


@dataclass
class EncodingSpec:
    """Input dimensions derived from a domain and an env's feature layout."""

    n_pred: int
    n_schema: int
    max_arity: int   # M: positional one-hot width
    ego_dim: int
    obj_feat_dim: int
    out_dim: int

    @property
    def g_dim(self) -> int:
        return self.ego_dim + 2 * self.n_pred

    @property
    def a_dim(self) -> int:
        return self.n_schema

    @property
    def o_dim(self) -> int:
        return self.obj_feat_dim + 2 * self.n_pred + self.max_arity

    @classmethod
    def for_domain(cls, domain: Domain, ego_dim: int, obj_feat_dim: int,
                   out_dim: int) -> "EncodingSpec":
        return cls(len(domain.predicates), len(domain.schemata),
                   max((s.arity for s in domain.schemata), default=1),
                   ego_dim, obj_feat_dim, out_dim)


@dataclass
class GnnInput:
    h_global: np.ndarray
    h_action: np.ndarray
    h_objects: np.ndarray  # (n_objects, o_dim); n_objects >= 0


def encode(spec: EncodingSpec, domain: Domain, lls, hla: GroundAction,
           goal: frozenset, hls: frozenset, table: ObjectTable,
           zero_action: bool = False) -> GnnInput:
    """Build input embeddings from an LL state, HL action, goal and abstraction.

    Only nullary and unary facts contribute one-hots; higher arities carry no
    encoding.  Only the action's argument objects become object nodes.  With
    ``zero_action`` the schema one-hot is zeroed (the PureNN-style ablation).
    """
    np_, ns, m = spec.n_pred, spec.n_schema, spec.max_arity
    g = np.zeros(spec.g_dim)
    g[:spec.ego_dim] = np.asarray(lls.ego, dtype=float)
    for fact in hls:
        if len(fact) == 1:
            g[spec.ego_dim + fact[0]] += 1.0
    for fact in goal:
        if len(fact) == 1:
            g[spec.ego_dim + np_ + fact[0]] += 1.0
    a = np.zeros(spec.a_dim)
    if not zero_action:
        a[hla.schema_id] = 1.0
    rows = []
    for i, oid in enumerate(hla.args):
        name = table.names[oid]
        vec = lls.objects.get(name)
        if vec is None:
            raise BisonError("action references unknown object %r" % name)
        row = np.zeros(spec.o_dim)
        row[:spec.obj_feat_dim] = np.asarray(vec, dtype=float)
        base = spec.obj_feat_dim
        for fact in hls:
            if len(fact) == 2 and fact[1] == oid:
                row[base + fact[0]] += 1.0
        for fact in goal:
            if len(fact) == 2 and fact[1] == oid:
                row[base + np_ + fact[0]] += 1.0
        if i < m:
            row[base + 2 * np_ + i] = 1.0
        rows.append(row)
    objs = np.array(rows) if rows else np.zeros((0, spec.o_dim))
    return GnnInput(g, a, objs)


class GnnParams:
    """Weight tensors; see ``tensors()`` for the canonical serialization order."""

    def __init__(self, spec: EncodingSpec, hidden: int, layers: int, seed: int = 0,
                 init_rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.hidden = hidden
        self.layers = layers
        self.seed = seed
        h = hidden

        def init(shape, rng):
            if rng is None:
                return np.zeros(shape)
            bound = 1.0 / math.sqrt(shape[-1])
            return rng.uniform(-bound, bound, shape)

        rng = init_rng
        self.w_g0 = init((h, spec.g_dim), rng)
        self.w_a0 = init((h, spec.a_dim), rng)
        self.w_o0 = init((h, spec.o_dim), rng)
        self.w_g = [init((h, h), rng) for _ in range(layers)]
        self.w_a = [init((h, h), rng) for _ in range(layers)]
        self.w_o = [init((h, h), rng) for _ in range(layers)]
        self.r_w1 = init((h, h), rng)
        self.r_b1 = np.zeros(h)
        self.r_w2 = init((spec.out_dim, h), rng)
        self.r_b2 = np.zeros(spec.out_dim)
        if hidden == 64 and layers == 2 and self.count() >= PARAM_BUDGET:
            raise BisonError("parameter count %d exceeds the %d budget"
                             % (self.count(), PARAM_BUDGET))

    def tensors(self) -> list:
        out = [self.w_g0, self.w_a0, self.w_o0]
        out += self.w_g + self.w_a + self.w_o
        out += [self.r_w1, self.r_b1, self.r_w2, self.r_b2]
        return out

    def count(self) -> int:
        return sum(t.size for t in self.tensors())

    def zeros_like(self) -> list:
        return [np.zeros_like(t) for t in self.tensors()]


def init_params(spec: EncodingSpec, config: TrainConfig) -> GnnParams:
    rng = np.random.default_rng(config.seed)
    return GnnParams(spec, config.hidden, config.layers, config.seed, rng)


def forward(params: GnnParams, inp: GnnInput, cache: dict = None) -> np.ndarray:
    """Predict an LL action; optionally fill ``cache`` for the backward pass."""
    h = params.hidden
    n = inp.h_objects.shape[0]
    g = params.w_g0 @ inp.h_global
    a = params.w_a0 @ inp.h_action
    objs = inp.h_objects @ params.w_o0.T if n else np.zeros((0, h))
    layers = []
    for l in range(params.layers):
        if n:
            agg_idx = np.argmax(objs, axis=0)
            agg = objs[agg_idx, np.arange(h)]
        else:
            agg_idx = None
            agg = np.zeros(h)
        ug = g + a + agg
        zg = params.w_g[l] @ ug
        g2 = np.maximum(zg, 0.0)
        ua = g2 + a + agg
        za = params.w_a[l] @ ua
        a2 = np.maximum(za, 0.0)
        if n:
            uo = g2[None, :] + a[None, :] + objs
            zo = uo @ params.w_o[l].T
            objs2 = np.maximum(zo, 0.0)
        else:
            uo = zo = objs2 = objs
        layers.append((g, a, objs, agg_idx, ug, zg, ua, za, uo, zo))
        g, a, objs = g2, a2, objs2
    if n:
        fin_idx = np.argmax(objs, axis=0)
        fin = objs[fin_idx, np.arange(h)]
    else:
        fin_idx = None
        fin = np.zeros(h)
    r = g + a + fin
    z1 = params.r_w1 @ r + params.r_b1
    h1 = np.maximum(z1, 0.0)
    y = params.r_w2 @ h1 + params.r_b2
    if cache is not None:
        cache.update(n=n, layers=layers, g=g, a=a, objs=objs, fin_idx=fin_idx,
                     r=r, z1=z1, h1=h1, y=y)
    return y


def backward(params: GnnParams, inp: GnnInput, target: np.ndarray):
    """Gradients of the per-sample MSE (mean over output dims) and the loss."""
    target = np.asarray(target, dtype=float)
    if target.shape != (params.spec.out_dim,):
        raise BisonError("target dimension mismatch")
    cache = {}
    y = forward(params, inp, cache)
    d = params.spec.out_dim
    diff = y - target
    loss = float(np.mean(diff ** 2))
    dy = 2.0 * diff / d
    h = params.hidden
    n = cache["n"]
    grads = {"w_g0": np.zeros_like(params.w_g0), "w_a0": np.zeros_like(params.w_a0),
             "w_o0": np.zeros_like(params.w_o0),
             "w_g": [np.zeros_like(t) for t in params.w_g],
             "w_a": [np.zeros_like(t) for t in params.w_a],
             "w_o": [np.zeros_like(t) for t in params.w_o]}
    grads["r_w2"] = np.outer(dy, cache["h1"])
    grads["r_b2"] = dy.copy()
    dh1 = params.r_w2.T @ dy
    dz1 = dh1 * (cache["z1"] > 0)
    grads["r_w1"] = np.outer(dz1, cache["r"])
    grads["r_b1"] = dz1.copy()
    dr = params.r_w1.T @ dz1
    dg, da = dr.copy(), dr.copy()
    dobjs = np.zeros((n, h))
    if n:
        dobjs[cache["fin_idx"], np.arange(h)] += dr
    for l in range(params.layers - 1, -1, -1):
        g_l, a_l, objs_l, agg_idx, ug, zg, ua, za, uo, zo = cache["layers"][l]
        dg2, da2, dobjs2 = dg, da, dobjs
        dg_new = np.zeros(h)
        da_new = np.zeros(h)
        dobjs_new = np.zeros_like(objs_l)
        dagg = np.zeros(h)
        if n:
            dzo = dobjs2 * (zo > 0)
            grads["w_o"][l] += dzo.T @ uo
            duo = dzo @ params.w_o[l]
            dg2 = dg2 + duo.sum(axis=0)
            da_new += duo.sum(axis=0)
            dobjs_new += duo
        dza = da2 * (za > 0)
        grads["w_a"][l] += np.outer(dza, ua)
        dua = params.w_a[l].T @ dza
        dg2 = dg2 + dua
        da_new += dua
        dagg += dua
        dzg = dg2 * (zg > 0)
        grads["w_g"][l] += np.outer(dzg, ug)
        dug = params.w_g[l].T @ dzg
        dg_new += dug
        da_new += dug
        dagg += dug
        if n:
            dobjs_new[agg_idx, np.arange(h)] += dagg
        dg, da, dobjs = dg_new, da_new, dobjs_new
    grads["w_g0"] = np.outer(dg, inp.h_global)
    grads["w_a0"] = np.outer(da, inp.h_action)
    if n:
        grads["w_o0"] = dobjs.T @ inp.h_objects
    flat = [grads["w_g0"], grads["w_a0"], grads["w_o0"]]
    flat += grads["w_g"] + grads["w_a"] + grads["w_o"]
    flat += [grads["r_w1"], grads["r_b1"], grads["r_w2"], grads["r_b2"]]
    return flat, loss


def cosine_lr(base: float, iteration: int, total: int) -> float:
    if total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * iteration / (total - 1)))


# ---------------------------------------------------------------------------
# Dataset construction and training
# ---------------------------------------------------------------------------

@dataclass
class LLSample:
    inp: GnnInput
    target: np.ndarray


class _StepView:
    __slots__ = ("ego", "objects")

    def __init__(self, step):
        self.ego = step.ego
        self.objects = step.objects


def build_dataset(demos: Iterable[Demo], domain: Domain, labeller: Callable,
                  spec: EncodingSpec, zero_action: bool = False) -> List[LLSample]:
    """Pair every LL step with the HL action of its abstraction segment.

    Steps between abstraction changes pair with the action explaining the next
    change; trailing steps pair with the last HL action.  Demos that cannot be
    abstracted are skipped.
    """
    from .learn import AbstractionGapError, extract_hl_trace

    samples = []
    for demo in demos:
        try:
            trace = extract_hl_trace(demo, domain, labeller)
        except AbstractionGapError:
            continue
        if not trace.actions:
            continue
        table = trace.table
        hl_states = [labeller(_StepView(s), table) for s in demo.steps]
        goal = frozenset(domain.ground_fact(g[0], g[1:], table) for g in demo.goal)
        seg = 0
        for i, step in enumerate(demo.steps):
            if i > 0 and hl_states[i] != hl_states[i - 1]:
                seg = min(seg + 1, len(trace.actions))
            act_i = min(seg, len(trace.actions) - 1)
            inp = encode(spec, domain, _StepView(step), trace.actions[act_i], goal,
                         hl_states[i], table, zero_action=zero_action)
            samples.append(LLSample(inp, np.asarray(step.action, dtype=float)))
    return samples


@dataclass
class TrainResult:
    params: GnnParams
    losses: list  # per-iteration batch MSE


def train(samples: List[LLSample], spec: EncodingSpec,
          config: TrainConfig = None) -> TrainResult:
    """Adam + cosine annealing over shuffled batches; deterministic per seed."""
    config = config or TrainConfig()
    if not samples:
        raise BisonError("empty training dataset")
    params = init_params(spec, config)
    if config.iterations == 0:
        return TrainResult(params, [])
    rng = np.random.default_rng(config.seed + 1)
    tensors = params.tensors()
    m = [np.zeros_like(t) for t in tensors]
    v = [np.zeros_like(t) for t in tensors]
    order = rng.permutation(len(samples))
    cursor = 0
    losses = []
    for it in range(config.iterations):
        batch = []
        while len(batch) < config.batch_size:
            if cursor >= len(order):
                order = rng.permutation(len(samples))
                cursor = 0
            batch.append(samples[order[cursor]])
            cursor += 1
        acc = params.zeros_like()
        total = 0.0
        for s in batch:
            g, loss = backward(params, s.inp, s.target)
            for ai, gi in zip(acc, g):
                ai += gi
            total += loss
        losses.append(total / len(batch))
        lr = cosine_lr(config.lr, it, config.iterations)
        t_adam = it + 1
        for k, (tens, grad) in enumerate(zip(tensors, acc)):
            grad = grad / len(batch)
            m[k] = config.beta1 * m[k] + (1 - config.beta1) * grad
            v[k] = config.beta2 * v[k] + (1 - config.beta2) * grad * grad
            m_hat = m[k] / (1 - config.beta1 ** t_adam)
            v_hat = v[k] / (1 - config.beta2 ** t_adam)
            tens -= lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return TrainResult(params, losses)


# ---------------------------------------------------------------------------
# Parameter file format (.bsw): JSON header + little-endian float64 payload
# ---------------------------------------------------------------------------

_MAGIC = b"BSW1"


def save_params(params: GnnParams, path: str):
    spec = params.spec
    header = {
        "spec": {"n_pred": spec.n_pred, "n_schema": spec.n_schema,
                 "max_arity": spec.max_arity, "ego_dim": spec.ego_dim,
                 "obj_feat_dim": spec.obj_feat_dim, "out_dim": spec.out_dim},
        "hidden": params.hidden, "layers": params.layers, "seed": params.seed,
        "tensors": [list(t.shape) for t in params.tensors()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for t in params.tensors():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_params(path: str) -> GnnParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise BisonError("not a parameter file: %s" % path)
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        spec = EncodingSpec(**header["spec"])
        params = GnnParams(spec, header["hidden"], header["layers"], header["seed"])
        tensors = params.tensors()
        for t, shape in zip(tensors, header["tensors"]):
            want = tuple(shape)
            raw = fh.read(8 * int(np.prod(want)))
            arr = np.frombuffer(raw, dtype="<f8").reshape(want)
            t[...] = arr
    return params
