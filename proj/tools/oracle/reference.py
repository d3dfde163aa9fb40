"""Independent reference implementation of the merge/kinship/evolution
pipeline, used to design the synthetic trace fixtures and freeze their
expected event logs.

Storage is float32 like the C++ library; reductions run in float64 (or
exactly via math.fsum where cheap). The engine mirrors the event order and
naming rules of the C++ evolution engine, but shares no code with it.
"""
import math

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + GOLDEN) & MASK
        return mix64(self.state)

    def below(self, bound):
        threshold = ((1 << 64) - bound) % bound
        while True:
            r = self.next()
            if r >= threshold:
                return r % bound


# ---- models ----------------------------------------------------------------


def slerp(a, b, t):
    """a, b: dict name -> float32 array. Per-tensor spherical interpolation."""
    if t in (0.0, 1.0):
        src = a if t == 0.0 else b
        return {k: v.copy() for k, v in src.items()}
    out = {}
    for name in a:
        x = a[name].astype(np.float64).ravel()
        y = b[name].astype(np.float64).ravel()
        ab = math.fsum(x * y)
        aa = math.fsum(x * x)
        bb = math.fsum(y * y)
        c0, c1 = 1.0 - t, t
        if aa > 0.0 and bb > 0.0:
            cosine = min(1.0, max(-1.0, ab / (math.sqrt(aa) * math.sqrt(bb))))
            omega = math.acos(cosine)
            s = math.sin(omega)
            if abs(s) >= 1e-8:
                c0 = math.sin((1.0 - t) * omega) / s
                c1 = math.sin(t * omega) / s
        out[name] = (c0 * x + c1 * y).astype(np.float32).reshape(a[name].shape)
    return out


def flat_delta(model, base):
    return np.concatenate([(model[k] - base[k]).astype(np.float32).ravel() for k in sorted(base)]).astype(np.float64)


def similarity(x, y, metric):
    if metric == "pcc":
        if x.min() == x.max() or y.min() == y.max():
            raise ValueError("constant delta")
        xc = x - x.mean()
        yc = y - y.mean()
        return max(-1.0, min(1.0, math.fsum(xc * yc) / math.sqrt(math.fsum(xc * xc) * math.fsum(yc * yc))))
    if metric == "cs":
        return max(-1.0, min(1.0, math.fsum(x * y) / math.sqrt(math.fsum(x * x) * math.fsum(y * y))))
    if metric == "ed":
        return math.sqrt(math.fsum((x - y) ** 2))
    raise ValueError(metric)


def more_related(metric, a, b):
    return a < b if metric == "ed" else a > b


def synthetic_scores(model, tasks):
    """tasks: list of (name, target dict, sigma)."""
    scores = {}
    for name, target, sigma in tasks:
        d2 = math.fsum(
            math.fsum(((model[k].astype(np.float64) - target[k].astype(np.float64)) ** 2).ravel()) for k in sorted(model)
        )
        scores[name] = min(100.0, max(0.0, 100.0 * math.exp(-d2 / (sigma * sigma))))
    return scores


def atp(scores):
    return math.fsum(scores.values()) / len(scores)


# ---- engine ----------------------------------------------------------------


class Engine:
    def __init__(self, base_id, base, foundations, scorer, strategy="topk_greedy", k=3, metric="pcc",
                 stop="topk_stable", threshold=0.9, max_generations=10, rng_seed=0, t=0.5):
        self.base_id = base_id
        self.base = base
        self.scorer = scorer
        self.strategy = strategy
        self.k = k
        self.metric = metric
        self.stop = stop
        self.threshold = threshold
        self.max_generations = max_generations
        self.rng_seed = rng_seed
        self.rng = SplitMix64(rng_seed)
        self.t = t
        self.order = []  # creation order
        self.models = {}
        self.gen = {}
        self.parents = {}
        self.atp = {}
        self.events = []
        for fid, tensors in foundations:
            self.order.append(fid)
            self.models[fid] = tensors
            self.gen[fid] = 0
            self.parents[fid] = []

    def log(self, event, **fields):
        e = {"seq": len(self.events), "event": event}
        e.update(fields)
        self.events.append(e)

    def delta(self, mid):
        return flat_delta(self.models[mid], self.base)

    def sim(self, a, b, metric):
        return similarity(self.delta(a), self.delta(b), metric)

    def ordered(self, ids):
        return sorted(ids, key=lambda i: (-self.atp.get(i, -1.0), i))

    def top_k(self):
        return self.ordered([i for i in self.order if i in self.atp])[: self.k]

    def recipe(self, parents):
        return {"operator": "slerp", "parents": list(parents), "params": {"t": self.t}}

    def evaluate(self, mid):
        scores = self.scorer(mid, self.models[mid])
        self.atp[mid] = atp(scores)
        self.log("evaluated", id=mid, atp=self.atp[mid], scores=dict(sorted(scores.items())))

    def plan(self, g, s):
        plan = []
        if self.strategy == "random":
            ids = list(self.order)
            pairs = [(i, j) for i in range(len(ids)) for j in range(i + 1, len(ids))]
            take = min(self.k, len(pairs))
            for t in range(take):
                j = t + self.rng.below(len(pairs) - t)
                pairs[t], pairs[j] = pairs[j], pairs[t]
            for t in range(take):
                plan.append([f"model-{g}-{t + 1}", self.ordered([ids[pairs[t][0]], ids[pairs[t][1]]]), False])
        else:
            members = self.ordered(list(self.order) if g == 1 else list(s))
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    plan.append([f"model-{g}-{len(plan) + 1}", [members[i], members[j]], False])
        for child, parents, _ in plan:
            self.log("pair_selected", generation=g, parents=parents, child=child)
        return plan

    def exploration(self, g, s, ordinal):
        best = s[0]
        cands = [i for i in self.order if self.gen[i] == g - 1 and self.parents[i] and i not in s]
        set_name = "previous_generation"
        if not cands:
            set_name = "topk_previous_generation"
            cands = [i for i in s if i != best and self.gen[i] == g - 1]
        if not cands:
            set_name = "topk"
            cands = [i for i in s if i != best]
        cands = sorted(cands)
        if not cands:
            self.log("exploration_skipped", generation=g, reason="no candidates")
            return None
        scored = [(c, self.sim(best, c, self.metric)) for c in cands]
        partner, pk = scored[0]
        for c, v in scored[1:]:
            if more_related(self.metric, pk, v) or (v == pk and c < partner):
                partner, pk = c, v
        child = f"model-{g}-{ordinal}"
        self.log("exploration_merge", generation=g, best=best, partner=partner, kinship=pk, candidate_set=set_name,
                 candidates=[{"id": c, "kinship": v} for c, v in scored], child=child)
        return [child, self.ordered([best, partner]), True]

    def run(self):
        self.log("run_started", strategy=self.strategy, k=self.k, metric=self.metric, stop=self.stop,
                 kinship_threshold=self.threshold, max_generations=self.max_generations, rng_seed=self.rng_seed,
                 merge={"operator": "slerp", "parents": [], "params": {"t": self.t}}, base=self.base_id)
        for fid in self.order:
            self.log("model_registered", id=fid, generation=0)
        for fid in list(self.order):
            self.evaluate(fid)
        s, s_prev = [], None
        g = 0
        while True:
            g += 1
            self.log("generation_started", generation=g)
            plan = self.plan(g, s)
            if self.strategy == "topk_greedy_kinship" and g >= 2:
                e = self.exploration(g, s, len(plan) + 1)
                if e:
                    plan.append(e)
            for child, parents, exp in plan:
                merged = slerp(self.models[parents[0]], self.models[parents[1]], self.t)
                degenerate = any(
                    all(np.max(np.abs(merged[k] - self.models[p][k])) < np.float32(1e-7) for k in merged)
                    for p in parents
                )
                pk = self.sim(parents[0], parents[1], self.metric)
                self.models[child] = merged
                self.log("merged", generation=g, child=child, parents=parents, recipe=self.recipe(parents),
                         exploration=exp, parent_kinship=pk, degenerate=bool(degenerate))
                self.order.append(child)
                self.gen[child] = g
                self.parents[child] = parents
            for child, _, _ in plan:
                self.evaluate(child)
            s_prev = list(s) if g >= 2 else None
            s = self.top_k()
            vals = [self.sim(s[i], s[j], "pcc") for i in range(len(s)) for j in range(i + 1, len(s))]
            min_pcc = min(vals) if vals else 1.0
            self.log("topk_updated", generation=g, ids=s, min_pcc=min_pcc)
            reason = None
            if self.stop != "max_generations" and s_prev is not None and s_prev == s:
                reason = "topk_stable"
            elif self.stop == "high_kinship" and len(s) >= 2 and min_pcc > self.threshold:
                reason = "high_kinship"
            elif g >= self.max_generations:
                reason = "max_generations"
            if reason:
                self.log("stopped", generation=g, reason=reason)
                return self.events

    def best(self):
        return max(self.atp.values())
