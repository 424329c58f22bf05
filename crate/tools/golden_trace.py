#!/usr/bin/env python3
"""Independent replay of the scripted synthetic fixture.

Reads crates/trace/fixtures/synthetic/{config,dataset,script}.json and
computes the four run artifacts (kg_build.json, chains.jsonl,
predictions.jsonl, report.json) from the documented pipeline semantics,
without touching the Rust implementation. The output under
crates/trace/fixtures/golden/ is the frozen expectation the end-to-end
acceptance test compares a real `trace run-all` against, byte for byte.

Run from the repository root:

    python3 tools/golden_trace.py
"""

import json
import math
import re
import string
from functools import cmp_to_key
from pathlib import Path

PIPELINE_VERSION = "0.1.0"

KG_INSTRUCTION = (
    "Given a title and a text, extract all the knowledge triples in the form "
    "of <title; relation; tail entity>, where title is the provided title, "
    "tail entity is a phrase in the text and relation denotes a description "
    "of the relation between the title and the tail entity."
)
SELECTION_INSTRUCTION = (
    "Select the next knowledge triple that extends an existing set of "
    "knowledge triples to form a coherent reasoning path capable of "
    "answering a specified question. If the current reasoning path is "
    "sufficient to answer the question, simply output A. Please only output "
    "the choice for the next knowledge triple."
)
READER_TEMPLATE = (
    "Given some contexts and a question, please only output the answer to "
    "the question.\ncontext:\n{context}\nquestion: {question}\nthe correct "
    "answer is:"
)

TRIPLE_RE = re.compile(r"[⟨<][^⟨⟩<>]*[⟩>]")
LABELS = [chr(c) for c in range(ord("A"), ord("Z") + 1)] + [str(d) for d in range(1, 10)]


def dumps(obj, sort_keys=False):
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=sort_keys)


def meta_line(stage, snapshot):
    meta = {"config": snapshot, "pipeline_version": PIPELINE_VERSION, "stage": stage}
    return dumps({"meta": meta}, sort_keys=True)


# --- scripted backend -------------------------------------------------------

def rule_matches(match, text):
    parts = match if isinstance(match, list) else [match]
    return all(p in text for p in parts)


class Script:
    def __init__(self, raw):
        self.generations = raw.get("generations", [])
        self.option_logits = raw.get("option_logits", [])
        self.embeddings = raw.get("embeddings", [])
        self.query_prefix = raw.get("query_prefix", "query: ")
        self.passage_prefix = raw.get("passage_prefix", "")

    def generate(self, prompt, stops):
        for rule in self.generations:
            if rule_matches(rule["match"], prompt):
                return apply_stops(rule["response"], stops)
        raise KeyError(f"no generation rule for prompt {prompt[:80]!r}")

    def logits(self, prompt, labels):
        for rule in self.option_logits:
            if rule_matches(rule["match"], prompt):
                return [rule["logits"][label] for label in labels]
        raise KeyError(f"no option-logits rule for prompt {prompt[:80]!r}")

    def embed(self, text, role):
        prefix = self.query_prefix if role == "query" else self.passage_prefix
        prefixed = prefix + text
        for rule in self.embeddings:
            if rule_matches(rule["match"], prefixed):
                return rule["vector"]
        raise KeyError(f"no embedding rule for text {prefixed[:80]!r}")


def apply_stops(text, stops):
    cut = len(text)
    for stop in stops:
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


# --- triples and graphs -----------------------------------------------------

STRIPPABLE = set(string.punctuation) | set("⟨⟩“”‘’«»—–…")


def normalize_entity(s):
    lowered = s.lower()
    stripped = lowered.strip("".join(STRIPPABLE) + string.whitespace)
    return " ".join(stripped.split())


def same_entity_loose(a, b):
    canon = lambda s: " ".join(s.lower().split())
    return canon(a) == canon(b)


def render(triple):
    return f"<{triple['head']}; {triple['relation']}; {triple['tail']}>"


def parse_triples(raw, title):
    triples, skipped = [], 0
    for line in raw.split("\n"):
        groups = 0
        for m in TRIPLE_RE.finditer(line):
            groups += 1
            inner = m.group(0)[1:-1]
            parts = [p.strip() for p in inner.split(";")]
            if len(parts) != 3 or any(p == "" for p in parts):
                skipped += 1
                continue
            head = title if same_entity_loose(parts[0], title) else parts[0]
            triples.append(
                {"head": head, "relation": parts[1], "tail": parts[2], "source_title": title}
            )
        if groups == 0 and any(c in line for c in "⟨<⟩>;") and line.strip():
            skipped += 1
    return triples, skipped


def assemble_graph(per_doc):
    seen, triples = set(), []
    for doc_triples in per_doc:
        for t in doc_triples:
            key = (
                normalize_entity(t["head"]),
                normalize_entity(t["relation"]),
                normalize_entity(t["tail"]),
            )
            if key not in seen:
                seen.add(key)
                triples.append(t)
    return triples


# --- beam search ------------------------------------------------------------

def softmax(logits):
    top = max(logits)
    exps = [math.exp(x - top) for x in logits]
    total = sum(exps)
    return [e / total for e in exps]


class Hyp:
    __slots__ = ("indices", "labels", "log_score", "terminated")

    def __init__(self, indices, labels, log_score, terminated):
        self.indices = indices
        self.labels = labels
        self.log_score = log_score
        self.terminated = terminated


def hyp_cmp(a, b):
    if a.log_score != b.log_score:
        return -1 if a.log_score > b.log_score else 1
    if len(a.indices) != len(b.indices):
        return -1 if len(a.indices) < len(b.indices) else 1
    if a.terminated != b.terminated:
        return -1 if a.terminated else 1
    if a.indices != b.indices:
        return -1 if a.indices < b.indices else 1
    return 0


def merge_duplicates(pool):
    merged = []
    for hyp in pool:
        hit = next(
            (h for h in merged if h.indices == hyp.indices and h.terminated == hyp.terminated),
            None,
        )
        if hit is None:
            merged.append(hyp)
        elif hyp.log_score > hit.log_score:
            merged[merged.index(hit)] = hyp
    return merged


def construct_chains(script, question, kg, cfg):
    max_len = cfg["max_len"]
    num_chains = cfg["num_chains"]
    beam_width = cfg["beam_width"]
    num_candidates = cfg["num_candidates"]

    if not kg:
        return [Hyp([], [], 0.0, True)]

    triple_vectors = [script.embed(render(t), "passage") for t in kg]

    frontier = [Hyp([], [], 0.0, False)]
    for _step in range(1, max_len + 1):
        if all(h.terminated for h in frontier):
            break
        pool = []
        for hyp in frontier:
            if hyp.terminated:
                pool.append(hyp)
                continue
            selected = hyp.indices
            query_text = question + "".join(" " + render(kg[i]) for i in selected)
            query = script.embed(query_text, "query")
            selset = set(selected)
            scored = [
                (i, sum(q * v for q, v in zip(query, vec)))
                for i, vec in enumerate(triple_vectors)
                if i not in selset
            ]
            scored.sort(key=cmp_to_key(lambda a, b: cand_cmp(a, b)))
            candidates = scored[:num_candidates]
            if not candidates:
                pool.append(Hyp(hyp.indices, hyp.labels, hyp.log_score, True))
                continue

            existing = ", ".join(render(kg[i]) for i in selected)
            existing_block = f" {existing}" if selected else ""
            option_lines = ["A. no need for additional knowledge triples"]
            options = [("A", None)]
            for j, (idx, _score) in enumerate(candidates):
                label = LABELS[j + 1]
                option_lines.append(f"{label}. {render(kg[idx])}")
                options.append((label, idx))
            prompt = (
                f"{SELECTION_INSTRUCTION}\n\n"
                "The l-th triple in the reasoning path is selected as:\n"
                f"existing knowledge triples:{existing_block}\n"
                f"question: {question}\n"
                "candidate knowledge triples:\n"
                + "\n".join(option_lines)
                + "\nthe next possible triple is:"
            )
            labels = [label for label, _ in options]
            probs = softmax(script.logits(prompt, labels))

            expanded = 0
            triple_options = sorted(
                [(o, probs[o]) for o in range(1, len(options))],
                key=cmp_to_key(lambda a, b: opt_cmp(a, b)),
            )
            for opt, p in triple_options[:beam_width]:
                if p <= 0.0:
                    continue
                label, idx = options[opt]
                pool.append(
                    Hyp(
                        hyp.indices + [idx],
                        hyp.labels + [label],
                        hyp.log_score + math.log(p),
                        False,
                    )
                )
                expanded += 1
            if probs[0] > 0.0:
                pool.append(
                    Hyp(hyp.indices, hyp.labels + ["A"], hyp.log_score + math.log(probs[0]), True)
                )
                expanded += 1
            if expanded == 0:
                pool.append(Hyp(hyp.indices, hyp.labels, hyp.log_score, True))
        pool = merge_duplicates(pool)
        pool.sort(key=cmp_to_key(hyp_cmp))
        frontier = pool[:num_chains]

    frontier.sort(key=cmp_to_key(hyp_cmp))
    return frontier


def cand_cmp(a, b):
    if a[1] != b[1]:
        return -1 if a[1] > b[1] else 1
    return -1 if a[0] < b[0] else (0 if a[0] == b[0] else 1)


def opt_cmp(a, b):
    if a[1] != b[1]:
        return -1 if a[1] > b[1] else 1
    return -1 if a[0] < b[0] else (0 if a[0] == b[0] else 1)


# --- answering and scoring --------------------------------------------------

def order_triples(chain_dumps):
    lines = []
    for chain in chain_dumps:
        if chain["triples"]:
            lines.append(", ".join(render(t) for t in chain["triples"]))
    return "\n".join(lines)


def vote_documents(chain_dumps, documents):
    position = {}
    for i, doc in enumerate(documents):
        position.setdefault(doc["title"], i)
    tallies = [0.0] * len(documents)
    for chain in chain_dumps:
        for triple in chain["triples"]:
            idx = position.get(triple["source_title"])
            if idx is not None:
                tallies[idx] += 1.0
    order = [i for i in range(len(documents)) if tallies[i] > 0.0]
    order.sort(key=cmp_to_key(lambda a, b: tally_cmp(tallies, a, b)))
    return [documents[i]["title"] for i in order]


def tally_cmp(tallies, a, b):
    if tallies[a] != tallies[b]:
        return -1 if tallies[a] > tallies[b] else 1
    return -1 if a < b else (0 if a == b else 1)


def normalize_answer(text):
    lowered = text.lower()
    depunct = "".join(c for c in lowered if c not in string.punctuation)
    tokens = [t for t in depunct.split() if t not in ("a", "an", "the")]
    return " ".join(tokens)


def exact_match(pred, gold):
    return 1.0 if normalize_answer(pred) == normalize_answer(gold) else 0.0


def f1(pred, gold):
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return 1.0 if not pred_tokens and not gold_tokens else 0.0
    counts = {}
    for tok in gold_tokens:
        counts[tok] = counts.get(tok, 0) + 1
    overlap = 0
    for tok in pred_tokens:
        if counts.get(tok, 0) > 0:
            counts[tok] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)


# --- main -------------------------------------------------------------------

def main():
    root = Path(__file__).resolve().parent.parent
    fixtures = root / "crates" / "trace" / "fixtures"
    synth = fixtures / "synthetic"
    out = fixtures / "golden"
    out.mkdir(parents=True, exist_ok=True)

    snapshot = json.loads((synth / "config.json").read_text())
    script = Script(json.loads((synth / "script.json").read_text()))
    raw_items = json.loads((synth / "dataset.json").read_text())

    items = []
    for record in raw_items:
        documents = [
            {"title": title, "text": " ".join(sentences)}
            for title, sentences in record["context"]
        ]
        items.append(
            {
                "id": record["_id"],
                "question": record["question"],
                "answer": record["answer"],
                "documents": documents,
                "supporting": {fact[0] for fact in record["supporting_facts"]},
            }
        )

    # Stage 1: triple extraction, cold cache.
    graphs = {}
    generator_calls = 0
    documents_seen = 0
    triples_total = 0
    skips_total = 0
    for item in items:
        per_doc = []
        for doc in item["documents"]:
            documents_seen += 1
            prompt = (
                f"{KG_INSTRUCTION}\n\nTitle: {doc['title']}\nText: {doc['text']}"
                "\nKnowledge Triples:"
            )
            raw = script.generate(prompt, ["\n\n"])
            generator_calls += 1
            triples, skipped = parse_triples(raw, doc["title"])
            triples_total += len(triples)
            skips_total += skipped
            per_doc.append(triples)
        graphs[item["id"]] = assemble_graph(per_doc)

    summary = {
        "questions": len(items),
        "documents": documents_seen,
        "cache_hits": 0,
        "generator_calls": generator_calls,
        "triples": triples_total,
        "parse_skips": skips_total,
        "failures": 0,
    }
    kg_line = (
        '{"meta":'
        + dumps(
            {"config": snapshot, "pipeline_version": PIPELINE_VERSION, "stage": "build_kg"},
            sort_keys=True,
        )
        + ',"summary":'
        + dumps(summary)
        + "}"
    )
    (out / "kg_build.json").write_text(kg_line + "\n")

    # Stage 2: reasoning chains.
    chain_records = {}
    chain_lines = [meta_line("construct_chains", snapshot)]
    for item in items:
        kg = graphs[item["id"]]
        hyps = construct_chains(script, item["question"], kg, snapshot["chain"])
        dumps_list = [
            {
                "triples": [kg[i] for i in h.indices],
                "labels": h.labels,
                "score": math.exp(h.log_score),
                "terminated": h.terminated,
            }
            for h in hyps
        ]
        chain_records[item["id"]] = dumps_list
        chain_lines.append(dumps({"question_id": item["id"], "chains": dumps_list}))
    (out / "chains.jsonl").write_text("\n".join(chain_lines) + "\n")

    # Stage 3: answers in triple mode.
    predictions = []
    pred_lines = [meta_line("answer", snapshot)]
    for item in items:
        context = order_triples(chain_records[item["id"]])
        tokens = len(context.split())
        prompt = READER_TEMPLATE.format(context=context, question=item["question"])
        answer = apply_stops(script.generate(prompt, ["\n"]), ["\n"]).strip()
        prediction = {
            "id": item["id"],
            "answer": answer,
            "mode": "triple",
            "context_tokens": tokens,
            "voted_titles": [],
        }
        predictions.append(prediction)
        pred_lines.append(dumps(prediction))
    (out / "predictions.jsonl").write_text("\n".join(pred_lines) + "\n")

    # Stage 4: report.
    em_sum = 0.0
    f1_sum = 0.0
    token_sum = 0
    chain_count = 0
    chain_triple_sum = 0
    doc_counts = []
    error_fractions = []
    by_id = {item["id"]: item for item in items}
    for pred in predictions:
        item = by_id[pred["id"]]
        em_sum += exact_match(pred["answer"], item["answer"])
        f1_sum += f1(pred["answer"], item["answer"])
        token_sum += pred["context_tokens"]
        item_chains = chain_records[item["id"]]
        for chain in item_chains:
            chain_count += 1
            chain_triple_sum += len(chain["triples"])
        docs = vote_documents(item_chains, item["documents"])
        doc_counts.append(len(docs))
        if docs and item["supporting"]:
            wrong = sum(1 for t in docs if t not in item["supporting"])
            error_fractions.append(wrong / len(docs))

    n = len(predictions)
    report = {
        "em": em_sum / n,
        "f1": f1_sum / n,
        "n": n,
        "avg_context_tokens": token_sum / n,
        "avg_chain_length": chain_triple_sum / chain_count if chain_count else None,
        "avg_relevant_docs": sum(doc_counts) / len(doc_counts) if doc_counts else None,
        "doc_error_rate": (
            sum(error_fractions) / len(error_fractions) if error_fractions else None
        ),
        "token_counter": "whitespace",
    }
    report_line = (
        '{"meta":'
        + dumps(
            {"config": snapshot, "pipeline_version": PIPELINE_VERSION, "stage": "evaluate"},
            sort_keys=True,
        )
        + ',"report":'
        + dumps(report)
        + "}"
    )
    (out / "report.json").write_text(report_line + "\n")

    for name in ("kg_build.json", "chains.jsonl", "predictions.jsonl", "report.json"):
        print(f"wrote {out / name}")


if __name__ == "__main__":
    main()
