#!/usr/bin/env python3
"""Regenerate the synthetic closed-loop fixtures under tests/fixtures/.

Everything the hermetic tests consume is derived here: the 20-document corpus,
the scripted extraction replies (full and drop-5 variants), the planted-fact
list, the predicate schema, the generation exemplars, and the pipeline config.

The script re-implements the library's trigram embedding, its canonical
relation form, and the mock token accounting, so it can PROVE — before writing
a single file — that the planted world satisfies the margins the tests lean on:

  * identical entity mentions merge (cosine 1.0 >= tau), while distinct
    entities stay apart (max pairwise composed-text cosine < 0.80 < tau 0.85);
  * the predicate variant "makes use of" canonicalizes onto "uses" and onto
    nothing else (similarity >= 0.6 only for the intended schema predicate);
  * dropped facts stay unrecoverable (max cosine against every surviving
    edge verbalization < 0.70 < recovery threshold 0.75);
  * token usage scales log-log with document length at slope 1.0 +/- 0.04,
    inside the 1.0 +/- 0.05 budget the stats stage is held to.

Deterministic: a fixed RNG seed, no wall clock anywhere. Rerunning the script
reproduces byte-identical fixtures.
"""

import json
import math
import random
from datetime import datetime, timedelta
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
FIXTURES = ROOT / "tests" / "fixtures"
CORPUS_DIR = FIXTURES / "corpus"
PROMPT_TEMPLATE = (ROOT / "prompts" / "extraction.txt").read_text()

SEED = 20250301
EMBED_DIM = 256

# --------------------------------------------------------------------------
# Library replicas: trigram embedding, canonical relation form, tokens.
# --------------------------------------------------------------------------

FNV_OFFSET = 1469598103934665603
FNV_PRIME = 1099511628211
MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK64
    return h


def trigram_embedding(text: str, dim: int = EMBED_DIM):
    v = [0.0] * dim
    padded = (" " + text + " ").encode("utf-8")
    if len(padded) >= 3:
        for i in range(len(padded) - 2):
            v[fnv1a64(padded[i : i + 3]) % dim] += 1.0
    norm = math.sqrt(sum(x * x for x in v))
    if norm > 0.0:
        v = [x / norm for x in v]
    return v


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


FUNCTION_WORDS = {
    "a", "an", "the", "of", "on", "in", "to", "by", "at", "for", "with",
    "is", "are", "was", "were", "be", "been", "its",
}


def strip_suffix(w: str) -> str:
    n = len(w)
    if n > 5 and w.endswith("ing"):
        return w[:-3]
    if n > 4 and w.endswith("ed"):
        return w[:-2]
    if n > 4 and w.endswith("es"):
        return w[:-2]
    if n > 3 and w.endswith("s"):
        return w[:-1]
    return w


def split_words(s: str):
    words, cur = [], []
    for c in s:
        if c.isascii() and c.isalnum():
            cur.append(c.lower())
        elif cur:
            words.append("".join(cur))
            cur = []
    if cur:
        words.append("".join(cur))
    return words


def canonical_relation_form(phrase: str) -> str:
    kept = [strip_suffix(w) for w in split_words(phrase) if w not in FUNCTION_WORDS]
    return " ".join(kept)


def ceil_div4(n: int) -> int:
    return (n + 3) // 4


def loglog_slope(points):
    xs = [math.log(c) for c, _ in points]
    ys = [math.log(t) for _, t in points]
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / sxx


# --------------------------------------------------------------------------
# The planted world.
# --------------------------------------------------------------------------

ENTITIES = [
    ("method", "AtlasRL", "a model-based reinforcement learning agent"),
    ("method", "PolicyForge", "a policy-gradient training framework"),
    ("method", "DeltaPlanner", "a hierarchical planning controller"),
    ("method", "QuantaSearch", "a tree-search control method"),
    ("method", "HyperCritic", "an ensemble critic architecture"),
    ("method", "MetaShaper", "a meta-learned reward shaping module"),
    ("method", "NovaAgent", "an off-policy exploration agent"),
    ("method", "EchoSolver", "a recurrent world-model solver"),
    ("dataset", "GridArena", "a procedurally generated grid-world suite"),
    ("dataset", "MazeBench", "a maze navigation benchmark"),
    ("dataset", "RoverSim", "a planetary rover simulation environment"),
    ("task", "long-horizon navigation", "the problem of navigating over extended horizons"),
    ("task", "reward shaping", "the problem of designing informative reward signals"),
    ("task", "credit assignment", "the problem of attributing outcomes to actions"),
    ("metric", "success-weighted path length", "a navigation efficiency measure"),
    ("metric", "regret bound", "a worst-case performance guarantee"),
    ("library", "TorchFlux", "an open-source tensor computation library"),
    ("library", "GraphKitPro", "a graph processing toolkit"),
]
ENTITY = {name: (etype, desc) for etype, name, desc in ENTITIES}

SCHEMA = ["addresses", "evaluates_on", "extends", "outperforms", "reports", "uses"]

FACT_SENTENCES = {
    "evaluates_on": "{s} evaluates on {o} under the standard protocol.",
    "uses": "{s} uses {o} for its core implementation.",
    "addresses": "{s} addresses {o} directly.",
    "outperforms": "{s} outperforms {o} by a wide margin.",
    "reports": "{s} reports {o} as its headline metric.",
    "extends": "{s} extends {o} with a revised search procedure.",
}
VARIANT_SENTENCE = "{s} makes use of {o} throughout its training stack."

# fid -> (subject, predicate, object)
FACTS = {
    "f01": ("AtlasRL", "evaluates_on", "GridArena"),
    "f02": ("PolicyForge", "evaluates_on", "GridArena"),
    "f03": ("DeltaPlanner", "evaluates_on", "GridArena"),
    "f04": ("QuantaSearch", "evaluates_on", "GridArena"),
    "f05": ("HyperCritic", "evaluates_on", "GridArena"),
    "f06": ("NovaAgent", "evaluates_on", "MazeBench"),
    "f07": ("EchoSolver", "evaluates_on", "RoverSim"),
    "f08": ("AtlasRL", "uses", "TorchFlux"),
    "f09": ("PolicyForge", "uses", "GraphKitPro"),
    "f10": ("AtlasRL", "addresses", "long-horizon navigation"),
    "f11": ("MetaShaper", "addresses", "reward shaping"),
    "f12": ("HyperCritic", "addresses", "credit assignment"),
    "f13": ("AtlasRL", "outperforms", "PolicyForge"),
    "f14": ("AtlasRL", "reports", "success-weighted path length"),
    "f15": ("QuantaSearch", "extends", "DeltaPlanner"),
}

# The drop-5 extractor loses these everywhere; recovery must land on 10/15.
DROPPED = {"f06", "f07", "f09", "f11", "f15"}

# Per-document fact assertions. "f08v" states f08 through the variant phrase,
# exercising predicate canonicalization inside the closed loop.
DOC_FACTS = [
    ["f01", "f08"],          # doc-001
    ["f02", "f09"],          # doc-002
    ["f03"],                 # doc-003
    ["f04", "f15"],          # doc-004
    ["f05", "f12"],          # doc-005
    ["f06"],                 # doc-006
    ["f07"],                 # doc-007
    ["f10", "f14"],          # doc-008
    ["f11"],                 # doc-009
    ["f13"],                 # doc-010
    ["f08v", "f01"],         # doc-011
    ["f01", "f13"],          # doc-012
    ["f02", "f05"],          # doc-013
    ["f03", "f15"],          # doc-014
    ["f04", "f10"],          # doc-015
    ["f06", "f12"],          # doc-016
    ["f07", "f14"],          # doc-017
    ["f09", "f11"],          # doc-018
    ["f01", "f05", "f13"],   # doc-019
    ["f02", "f10", "f14"],   # doc-020
]

# Entities that enter through a pad mention rather than a fact.
EXTRA_PADS = {9: ["regret bound"]}  # doc-010 introduces the spare metric

N_DOCS = 20
BODY_MIN, BODY_MAX = 20000, 120000
FIRST_DATE = datetime(2025, 1, 10, 9, 0, 0)
DATE_STEP = timedelta(days=8)

# --------------------------------------------------------------------------
# Filler prose. Entity-free by construction; asserted below anyway.
# --------------------------------------------------------------------------

ADJECTIVES = [
    "stochastic", "sparse", "asynchronous", "hierarchical", "modular",
    "adaptive", "latent", "stationary", "discounted", "greedy", "tabular",
    "episodic", "annealed", "clipped", "factored",
]
NOUNS = [
    "return estimate", "trajectory buffer", "policy head", "transition model",
    "horizon penalty", "baseline term", "rollout schedule", "gradient clip",
    "replay window", "value target", "exploration bonus", "update rule",
    "critic loss", "state abstraction", "advantage estimate",
]
VERBS = [
    "stabilizes", "saturates", "improves", "degrades", "oscillates",
    "converges", "transfers", "generalizes", "plateaus", "drifts",
]
TAILS = [
    "across random seeds", "under distribution shift", "at larger batch sizes",
    "without extra tuning", "in the low-data regime", "after annealing",
    "despite reward sparsity", "when horizons stretch", "near convergence",
    "with modest variance", "once exploration decays", "under tight budgets",
]
PAD_SENTENCES = [
    "Follow-up ablations revisit {name} under tighter compute budgets.",
    "Practitioners often pair curriculum schedules with {name}.",
    "Results involving {name} replicate cleanly across seeds.",
    "A lightweight variant of {name} ships with the reference code.",
    "Community leaderboards continue to track {name} closely.",
    "Hyperparameter sweeps around {name} remain surprisingly stable.",
]
TITLE_SHAPES = [
    "Notes on {a} {n} dynamics",
    "Revisiting the {a} {n}",
    "On {a} control and the {n}",
    "A second look at the {a} {n}",
]


def filler_sentence(rng):
    return "The {} {} {} {}.".format(
        rng.choice(ADJECTIVES), rng.choice(NOUNS), rng.choice(VERBS), rng.choice(TAILS)
    )


def filler_block(rng, approx_chars):
    parts = []
    total = 0
    while total < approx_chars:
        s = filler_sentence(rng)
        parts.append(s)
        total += len(s) + 1
    return " ".join(parts)


def fact_sentence(fid):
    if fid == "f08v":
        s, _, o = FACTS["f08"]
        return s, "makes use of", o, VARIANT_SENTENCE.format(s=s, o=o)
    s, p, o = FACTS[fid]
    return s, p, o, FACT_SENTENCES[p].format(s=s, o=o)


# --------------------------------------------------------------------------
# Document builder.
# --------------------------------------------------------------------------

def intro_doc_index():
    intro = {}
    for idx, fids in enumerate(DOC_FACTS):
        for fid in fids:
            base = "f08" if fid == "f08v" else fid
            s, _, o = FACTS[base]
            for name in (s, o):
                intro.setdefault(name, idx)
    for idx, names in EXTRA_PADS.items():
        for name in names:
            intro.setdefault(name, idx)
    return intro


def build_doc(i, rng, intro):
    doc_id = f"doc-{i + 1:03d}"
    date = FIRST_DATE + i * DATE_STEP
    body_target = round(BODY_MIN * (BODY_MAX / BODY_MIN) ** (i / (N_DOCS - 1)))

    title = TITLE_SHAPES[i % len(TITLE_SHAPES)].format(
        a=rng.choice(ADJECTIVES), n=rng.choice(NOUNS)
    )
    abstract = filler_block(rng, 260)

    pool = sorted(name for name, first in intro.items() if first <= i)
    fact_mentions = [("fact", fid) for fid in DOC_FACTS[i]]
    pad_names = list(EXTRA_PADS.get(i, []))
    n_mentions = max(len(fact_mentions) + len(pad_names) + 2, body_target // 1500)
    start_at = rng.randrange(len(pool))
    while len(pad_names) + len(fact_mentions) < n_mentions:
        pad_names.append(pool[(start_at + len(pad_names)) % len(pool)])
    mentions = fact_mentions + [("pad", name) for name in pad_names]
    rng.shuffle(mentions)

    parts = []
    pos = 0
    entity_rows = []    # (start, end, name) in appearance order
    relation_rows = []  # (start, end, fid) in appearance order

    def emit(text):
        nonlocal pos
        parts.append(text)
        start = pos
        pos += len(text)
        return start

    per_block = max(600, (body_target - 200 * len(mentions)) // len(mentions))
    for kind, val in mentions:
        emit(filler_block(rng, per_block))
        emit(" ")
        if kind == "fact":
            s, _, o, sent = fact_sentence(val)
            start = emit(sent)
            relation_rows.append((start, start + len(sent), val))
            for name in (s, o):
                off = sent.index(name)
                entity_rows.append((start + off, start + off + len(name), name))
        else:
            sent = PAD_SENTENCES[rng.randrange(len(PAD_SENTENCES))].format(name=val)
            start = emit(sent)
            off = sent.index(val)
            entity_rows.append((start + off, start + off + len(val), val))
        emit(" ")
    if pos < body_target:
        emit(filler_block(rng, body_target - pos))
    body = "".join(parts)

    doc = {
        "id": doc_id,
        "title": title,
        "authors": [rng.choice(["R. Calder", "M. Osei", "T. Lindqvist", "J. Ferreira",
                                "A. Novak", "S. Tanaka"]),
                    rng.choice(["P. Whitfield", "L. Moreau", "K. Adeyemi", "D. Petrov"])],
        "categories": ["cs.LG"],
        "submitted_at": date.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "sections": [
            {"label": "abstract", "text": abstract},
            {"label": "body", "text": body},
        ],
    }
    return doc, entity_rows, relation_rows


def extraction_reply(doc, entity_rows, relation_rows, drop):
    entities = []
    for start, end, name in entity_rows:
        etype, desc = ENTITY[name]
        entities.append({
            "name": name,
            "type": etype,
            "description": desc,
            "section": "body",
            "start": start,
            "end": end,
        })
    relations = []
    for start, end, fid in relation_rows:
        base = "f08" if fid == "f08v" else fid
        if base in drop:
            continue
        s, p, o, _ = fact_sentence(fid)
        relations.append({
            "subject": s,
            "predicate": p,
            "object": o,
            "section": "body",
            "start": start,
            "end": end,
        })
    return json.dumps({"entities": entities, "relations": relations})


# --------------------------------------------------------------------------
# Verification of the planted margins.
# --------------------------------------------------------------------------

def verify(docs, replies_full):
    # 1. Entity separation under the mock embedder.
    composed = {
        name: f"{etype} | {name} | {desc}" for etype, name, desc in ENTITIES
    }
    vecs = {name: trigram_embedding(text) for name, text in composed.items()}
    names = sorted(vecs)
    worst = (0.0, "", "")
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sim = dot(vecs[a], vecs[b])
            if sim > worst[0]:
                worst = (sim, a, b)
    print(f"max pairwise entity cosine: {worst[0]:.4f} ({worst[1]!r} vs {worst[2]!r})")
    assert worst[0] < 0.80, "distinct entities are too close to the merge threshold"

    # 2. The predicate variant canonicalizes onto "uses" and nothing else.
    variant = trigram_embedding(canonical_relation_form("makes use of"))
    for pred in SCHEMA:
        sim = dot(variant, trigram_embedding(canonical_relation_form(pred)))
        if pred == "uses":
            assert sim >= 0.62, f"variant too far from 'uses' ({sim:.4f})"
        else:
            assert sim < 0.58, f"variant ambiguously close to '{pred}' ({sim:.4f})"

    # 3. Dropped facts stay unrecoverable against the surviving edges.
    def verbalize(fid):
        s, p, o = FACTS[fid]
        return f"{s} {p.replace('_', ' ')} {o}"

    kept_vecs = [trigram_embedding(verbalize(f)) for f in sorted(FACTS) if f not in DROPPED]
    worst_drop = 0.0
    for fid in sorted(DROPPED):
        fv = trigram_embedding(verbalize(fid))
        best = max(dot(fv, kv) for kv in kept_vecs)
        worst_drop = max(worst_drop, best)
    print(f"max dropped-fact cosine against surviving edges: {worst_drop:.4f}")
    assert worst_drop < 0.70, "a dropped fact would still be counted as recovered"

    # 4. Token scaling: replicate the mock's accounting over the full script.
    overhead = len(PROMPT_TEMPLATE) - len("{{document}}")
    points = []
    for doc in docs:
        rendered = "TITLE: " + doc["title"] + "\n" + "".join(
            "SECTION " + s["label"] + ":\n" + s["text"] + "\n" for s in doc["sections"]
        )
        prompt_chars = overhead + len(rendered)
        reply_chars = len(replies_full["extract:" + doc["id"]])
        tokens = ceil_div4(prompt_chars) + ceil_div4(reply_chars)
        chars = len(doc["title"]) + sum(len(s["text"]) for s in doc["sections"])
        points.append((chars, tokens))
    slope = loglog_slope(points)
    print(f"token scaling log-log slope: {slope:.4f}")
    assert 0.96 <= slope <= 1.04, "token slope drifted outside the acceptance margin"

    # 5. Structural sanity: planted spans say exactly what they claim, and the
    # prose never utters an entity name outside a recorded mention.
    for doc in docs:
        body = doc["sections"][1]["text"]
        reply = json.loads(replies_full["extract:" + doc["id"]])
        counts = {}
        for e in reply["entities"]:
            assert body[e["start"]:e["end"]] == e["name"], (doc["id"], e)
            counts[e["name"]] = counts.get(e["name"], 0) + 1
        for name in ENTITY:
            planted = counts.get(name, 0)
            relation_hits = sum(
                1
                for r in reply["relations"]
                for side in ("subject", "object")
                if r[side] == name
            )
            assert body.count(name) == planted, (
                doc["id"], name, body.count(name), planted, relation_hits)
            assert name not in doc["title"] and name not in doc["sections"][0]["text"], (
                doc["id"], name)


# --------------------------------------------------------------------------
# Static companion files.
# --------------------------------------------------------------------------

EXEMPLARS = [
    {"qtype": "single_hop",
     "question": "Which archive does the Halcyon survey rely on?",
     "answer": "SkyVault"},
    {"qtype": "single_hop",
     "question": "Which observatory runs evaluations on CometTrack?",
     "answer": "the Merrow Ridge array"},
    {"qtype": "single_hop_conditional",
     "question": "Which catalogue does Starfall cross-reference, according to records dated 2024-05?",
     "answer": "the Deep Field register"},
    {"qtype": "single_hop_conditional",
     "question": "Which lens stack does the Aurora imager rely on, according to records dated 2024-02?",
     "answer": "PrismaCore"},
    {"qtype": "multi_hop",
     "question": "Starting from the Halcyon survey, which instrument is reached after 2 steps: moving forward along 'feeds', then moving forward along 'calibrates'?",
     "answer": "the Vela spectrograph"},
    {"qtype": "multi_hop",
     "question": "Starting from SkyVault, which facility is reached after 2 steps: moving backward along 'rely on', then moving forward along 'hosted at'?",
     "answer": "Merrow Ridge"},
    {"qtype": "multi_hop_difficult",
     "question": "Starting from the Aurora imager, which register is reached after 3 steps: moving forward along 'feeds', then moving forward along 'indexes', then moving backward along 'supersedes'?",
     "answer": "the Deep Field register"},
    {"qtype": "multi_hop_difficult",
     "question": "Starting from PrismaCore, which survey is reached after 2 steps: moving backward along 'rely on', then moving forward along 'extends'?",
     "answer": "the Halcyon survey"},
    {"qtype": "counterfactual",
     "question": "Suppose the record showed 'calibrates' instead of 'feeds' on that step. Does the documented chain from the Halcyon survey still reach the Vela spectrograph?",
     "answer": "No. The evidence records 'feeds' on that step, not 'calibrates', so the documented chain no longer holds under that change."},
    {"qtype": "counterfactual",
     "question": "Suppose CometTrack stood in for SkyVault on this chain. Does the documented conclusion still hold?",
     "answer": "No. The recorded evidence involves SkyVault, not CometTrack; substituting CometTrack breaks the documented chain."},
    {"qtype": "open_ended",
     "question": "Drawing only on the published record, how does the Halcyon survey relate to the Vela spectrograph?",
     "answer": "The Halcyon survey reaches the Vela spectrograph through two documented steps ('feeds' then 'calibrates'); the cited records describe each link directly."},
    {"qtype": "open_ended",
     "question": "Drawing only on the published record, how does the Aurora imager relate to PrismaCore?",
     "answer": "The Aurora imager relies on PrismaCore for its optics; the cited record states the dependency directly."},
]

CONFIG = {
    "domain_id": "syn-rl",
    "window": {"start": "2025-01-01T00:00:00Z", "end": "2025-07-01T00:00:00Z"},
    "categories": ["cs.LG"],
    "source_dir": "corpus",
    "prompts_dir": "../../prompts",
    "backend": {
        "kind": "mock",
        "embed_dim": EMBED_DIM,
        "script_file": "mock_script_full.json",
    },
    "chunking": {"limit": 1000, "overlap": 100},
    "alignment": {
        "tau": 0.85,
        "relation_threshold": 0.6,
        "ann_k": 8,
        "schema_file": "schema.json",
        "prompt_version": "v1",
    },
    "hnsw": {"m": 16, "ef_construction": 200, "ef_search": 100},
    "sampling": {"k_min": 1, "k_max": 3, "degree_percentile": 0.9, "max_attempts": 400},
    "generation": {
        "targets": {
            "single_hop": 4,
            "single_hop_conditional": 3,
            "multi_hop": 4,
            "multi_hop_difficult": 3,
            "counterfactual": 3,
            "open_ended": 2,
        },
        "exemplars_file": "exemplars.json",
        "exemplars_per_type": 2,
    },
    "qc": {"dedup_threshold": 0.92},
    "eval": {
        "methods": ["io", "cot", "sc", "rag", "onehop_kg", "rag_onehop_kg"],
        "runs": 2,
        "top_k": 5,
        "sc_samples": 5,
        "link_threshold": 0.5,
        "link_max": 2,
        "recovery_threshold": 0.75,
        "facts_file": "facts.jsonl",
    },
    "seeds": {"hnsw": 9001, "paths": 4242, "eval": 1337},
    "workers": 1,
}


def main():
    rng = random.Random(SEED)
    intro = intro_doc_index()

    docs, replies_full, replies_drop5 = [], {}, {}
    for i in range(N_DOCS):
        doc, entity_rows, relation_rows = build_doc(i, rng, intro)
        docs.append(doc)
        replies_full["extract:" + doc["id"]] = extraction_reply(
            doc, entity_rows, relation_rows, drop=set())
        replies_drop5["extract:" + doc["id"]] = extraction_reply(
            doc, entity_rows, relation_rows, drop=DROPPED)

    verify(docs, replies_full)

    CORPUS_DIR.mkdir(parents=True, exist_ok=True)
    for doc in docs:
        (CORPUS_DIR / f"{doc['id']}.json").write_text(
            json.dumps(doc, indent=2) + "\n")
    (FIXTURES / "mock_script_full.json").write_text(
        json.dumps(replies_full, indent=2, sort_keys=True) + "\n")
    (FIXTURES / "mock_script_drop5.json").write_text(
        json.dumps(replies_drop5, indent=2, sort_keys=True) + "\n")
    (FIXTURES / "facts.jsonl").write_text("".join(
        json.dumps({"fact_id": fid,
                    "text": f"{s} {p.replace('_', ' ')} {o}"}) + "\n"
        for fid, (s, p, o) in sorted(FACTS.items())))
    (FIXTURES / "schema.json").write_text(
        json.dumps({"domain_id": "syn-rl", "predicates": SCHEMA}, indent=2) + "\n")
    (FIXTURES / "exemplars.json").write_text(
        json.dumps(EXEMPLARS, indent=2) + "\n")
    (FIXTURES / "config.json").write_text(
        json.dumps(CONFIG, indent=2) + "\n")

    total = sum(len(s["text"]) for d in docs for s in d["sections"])
    print(f"wrote {len(docs)} documents ({total} body+abstract chars) "
          f"and {len(replies_full)} scripted replies")


if __name__ == "__main__":
    main()
