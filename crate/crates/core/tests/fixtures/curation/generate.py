"""Builds the curation fixture corpus and its audited outcomes.

Every retrieved record is constructed with a chosen cosine to its target
prototype and a chosen caption, so the expected verdict of each record is
known by construction. Run from this directory: python3 generate.py
"""

import json
import math
import random

DIM = 16
GAMMA1, GAMMA2 = 0.7, 0.98
rng = random.Random(20240611)

TARGETS = ["sports car", "tabby cat", "oak tree", "violin", "espresso", "sparrow"]

# Recorded LLM responses, one per target. Some proposals repeat a target
# name (leaks), possibly with different case or spacing.
RESPONSES = {
    "sports car": "coupe, roadster, Grand Tourer, supercar, Hot Hatch",
    "tabby cat": "bengal cat, Maine Coon, siamese cat, Egyptian Mau, Oak  Tree",
    "oak tree": "white oak, red oak, cork oak, live oak, Holm Oak",
    "violin": "viola, cello, Sports Car, double bass, fiddle",
    "espresso": "ristretto, lungo, cortado, macchiato, ESPRESSO",
    "sparrow": "house finch, wren, Tabby Cat, song thrush, chaffinch",
}


def normalize(s):
    return " ".join(w.lower() for w in s.split())


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def gauss_vec():
    return [rng.gauss(0.0, 1.0) for _ in range(DIM)]


# Target training samples: a well-separated direction per class plus noise.
train_rows = []
prototypes = {}
for t, _ in enumerate(TARGETS):
    base = [0.0] * DIM
    base[t] = 4.0
    base[(t + 7) % DIM] = 2.0
    rows = []
    for i in range(6):
        f = [b + rng.gauss(0.0, 0.3) for b in base]
        rows.append(f)
        train_rows.append({"id": f"target-{t}-{i}", "label": t, "features": f})
    mean = [0.0] * DIM
    for f in rows:
        for d in range(DIM):
            mean[d] += f[d]
    prototypes[t] = [m / len(rows) for m in mean]


def with_cosine(proto, c, scale):
    """A vector whose cosine to `proto` is exactly `c` (up to rounding)."""
    p = unit(proto)
    u = gauss_vec()
    proj = dot(u, p)
    u = unit([a - proj * b for a, b in zip(u, p)])
    s = math.sqrt(max(0.0, 1.0 - c * c))
    return [scale * (c * a + s * b) for a, b in zip(p, u)]


# Caption styles. The proposed name must appear after normalization for
# the caption rule to pass.
def caption_pass(name, k):
    styles = [
        f"a photo of a {name}",
        f"Close-up of the {name.upper()} in daylight",
        f"my   {name.title()}   at the weekend",
        f"{name}s on display",
        f"stock image: {name}",
    ]
    return styles[k % len(styles)]


def caption_fail(name, k):
    styles = [
        "a blurry photo of something",
        "untitled image",
        f"a {name.split()[0]} drawing",  # only part of a multi-word name
        "photo 2291 from the archive",
    ]
    if len(name.split()) == 1:
        styles[2] = f"a {name[:-1]} sketch"  # truncated single word
    return styles[k % len(styles)]


# Planned outcomes cycle so every target/name mixes kept and rejected
# records. Cosines avoid landing within 1e-4 of a band edge except for the
# deliberate edge cases below.
KEPT_COS = [0.71, 0.75, 0.8, 0.85, 0.9, 0.93, 0.95, 0.97, 0.9795, 0.7005]
LOW_COS = [0.6995, 0.5, 0.3, 0.0, -0.4, 0.65, 0.69]
HIGH_COS = [0.9805, 0.99, 0.999, 1.0]

plan = ["kept", "caption", "kept", "similarity_low", "kept", "similarity_high", "kept", "similarity_low"]

records = []
audit = []
counter = 0
names_seen = 0
for t, target in enumerate(TARGETS):
    proposals = [p.strip() for p in RESPONSES[target].split(",")]
    target_set = {normalize(n) for n in TARGETS}
    for name in proposals:
        leaked = normalize(name) in target_set
        if leaked:
            n_records = 2
        else:
            n_records = 4 if names_seen < 14 else 3
            names_seen += 1
        for j in range(n_records):
            ref = f"img/{t}/{normalize(name).replace(' ', '_')}/{j}.jpg"
            if leaked:
                outcome = "leak"
            else:
                outcome = plan[counter % len(plan)]
                counter += 1
            scale = rng.uniform(0.5, 20.0)
            if outcome == "kept":
                cos = KEPT_COS[len(audit) % len(KEPT_COS)]
                caption = caption_pass(name, j)
            elif outcome == "caption":
                # Cosine inside the band; only the caption rejects it.
                cos = 0.85
                caption = caption_fail(name, j)
            elif outcome == "similarity_low":
                cos = LOW_COS[len(audit) % len(LOW_COS)]
                caption = caption_pass(name, j + 1)
            elif outcome == "similarity_high":
                cos = HIGH_COS[len(audit) % len(HIGH_COS)]
                caption = caption_pass(name, j + 2)
            else:
                cos = 0.85
                caption = caption_pass(name, j)
            features = with_cosine(prototypes[t], cos, scale)
            actual = dot(unit(features), unit(prototypes[t]))
            assert abs(actual - cos) < 1e-9, (actual, cos)
            mentions = normalize(name) in normalize(caption)
            assert mentions == (outcome != "caption"), (name, caption)
            records.append({"class": name, "image_ref": ref, "caption": caption, "features": features})
            audit.append({"image_ref": ref, "target": t, "proposed_class": name, "designed_cosine": cos, "outcome": outcome})

assert len(records) == 100, len(records)

with open("targets.jsonl", "w") as f:
    for r in train_rows:
        f.write(json.dumps(r) + "\n")
with open("target_names.json", "w") as f:
    json.dump({str(i): n for i, n in enumerate(TARGETS)}, f, indent=2)
    f.write("\n")
with open("llm/responses.json", "w") as f:
    json.dump({n: [r] for n, r in RESPONSES.items()}, f, indent=2)
    f.write("\n")
with open("corpus.jsonl", "w") as f:
    for r in records:
        f.write(json.dumps(r) + "\n")
with open("golden.json", "w") as f:
    json.dump(
        {
            "gamma1": GAMMA1,
            "gamma2": GAMMA2,
            "kept": sorted(a["image_ref"] for a in audit if a["outcome"] == "kept"),
            "records": audit,
        },
        f,
        indent=2,
    )
    f.write("\n")

from collections import Counter
print(Counter(a["outcome"] for a in audit))
