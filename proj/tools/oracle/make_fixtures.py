"""Writes the synthetic evolution fixtures and their expected event logs.

    python3 tools/oracle/make_fixtures.py fixtures/evolution

The landscape (seed 2574 of the generator below) was chosen by searching
for a case where top-k greedy merging stalls on a stable top set while the
kinship-guided exploration step reaches a strictly better model.
"""
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import reference as R  # noqa: E402
import safetensors_io as st  # noqa: E402

SHAPES = {"layer.0.weight": (8, 8), "layer.0.bias": (8,)}
D = 72
SEED = 2574
RANDOM_SEED = 20240917
FOUNDATIONS = ["alpha", "beta", "gamma"]


def unflat(v):
    out = {}
    o = 0
    for k in sorted(SHAPES):
        n = int(np.prod(SHAPES[k]))
        out[k] = v[o : o + n].reshape(SHAPES[k]).astype(np.float32)
        o += n
    return out


def landscape(seed=SEED):
    """Foundations and task targets on a random 2-D plane through the base."""
    rng = np.random.default_rng(seed)
    basev = rng.normal(0, 1, D)
    q, _ = np.linalg.qr(rng.normal(0, 1, (D, 2)))
    pts = rng.uniform(-1, 1, (3, 2))
    fnd = [(n, unflat(basev + q @ p + rng.normal(0, 0.02, D))) for n, p in zip(FOUNDATIONS, pts)]
    tasks = []
    for j in range(rng.integers(2, 4)):
        c = rng.uniform(-1, 1, 2)
        s = rng.uniform(0.3, 1.5)
        tasks.append((f"task{j}", unflat(basev + q @ c), float(round(s, 2))))
    return unflat(basev), fnd, tasks


# scripted scores: greedy stalls after one round of merging
SCRIPTED = {
    "alpha": 50.0,
    "beta": 40.0,
    "gamma": 30.0,
    "model-1-1": 90.0,
    "model-1-2": 45.0,
    "model-1-3": 35.0,
    "model-2-1": 44.0,
    "model-2-2": 43.0,
    "model-2-3": 42.0,
}


def write_jsonl(path, events):
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps(e) + "\n")


def main(out):
    os.makedirs(out, exist_ok=True)
    base, fnd, tasks = landscape()
    st.save(os.path.join(out, "base.safetensors"), base)
    for name, t in fnd:
        st.save(os.path.join(out, f"{name}.safetensors"), t)
    for name, t, _ in tasks:
        st.save(os.path.join(out, f"target_{name}.safetensors"), t)

    foundations = [{"id": n, "path": f"{n}.safetensors"} for n in FOUNDATIONS]
    synthetic = {
        "kind": "synthetic",
        "tasks": [{"name": n, "target": f"target_{n}.safetensors", "sigma": s} for n, t, s in tasks],
    }
    scorer = lambda mid, m: R.synthetic_scores(m, tasks)  # noqa: E731

    runs = {
        "greedy": dict(strategy="topk_greedy", max_generations=10),
        "kinship": dict(strategy="topk_greedy_kinship", max_generations=10),
        "random": dict(strategy="random", stop="max_generations", max_generations=4, rng_seed=RANDOM_SEED),
    }
    summary = {}
    for name, kw in runs.items():
        e = R.Engine("base", base, fnd, scorer, **kw)
        events = e.run()
        write_jsonl(os.path.join(out, f"expected_{name}.jsonl"), events)
        cfg = {
            "base": {"id": "base", "path": "base.safetensors"},
            "foundations": foundations,
            "strategy": {
                "kind": kw["strategy"],
                "k": 3,
                "metric": "pcc",
                "max_generations": kw["max_generations"],
                "rng_seed": kw.get("rng_seed", 0),
                "stop": {"kind": kw.get("stop", "topk_stable"), "kinship_threshold": 0.9},
            },
            "merge": {"operator": "slerp", "params": {"t": 0.5}},
            "evaluator": synthetic,
            "output_dir": f"out-{name}",
        }
        with open(os.path.join(out, f"{name}.json"), "w") as f:
            json.dump(cfg, f, indent=2)
        summary[name] = {"best_atp": e.best(), "generations": events[-1]["generation"], "stop": events[-1]["reason"]}

    e = R.Engine("base", base, fnd, lambda mid, m: {"score": SCRIPTED[mid]}, strategy="topk_greedy")
    write_jsonl(os.path.join(out, "expected_scripted.jsonl"), e.run())
    with open(os.path.join(out, "scripted_scores.csv"), "w") as f:
        f.write("model,score\n")
        for k, v in SCRIPTED.items():
            f.write(f"{k},{v}\n")
    cfg = {
        "base": {"id": "base", "path": "base.safetensors"},
        "foundations": foundations,
        "strategy": {"kind": "topk_greedy", "k": 3, "max_generations": 10},
        "merge": {"operator": "slerp", "params": {"t": 0.5}},
        "evaluator": {"kind": "table", "scores": "scripted_scores.csv"},
        "output_dir": "out-scripted",
    }
    with open(os.path.join(out, "scripted.json"), "w") as f:
        json.dump(cfg, f, indent=2)
    summary["scripted"] = {"generations": e.events[-1]["generation"], "stop": e.events[-1]["reason"]}
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/evolution")
